#pragma once

#include <vector>

#include "relchain/tensor.hpp"

namespace relchain {

// Core tensor operations. Every op validates shapes, computes the forward
// value, and records its backward rule on the tape when any input needs
// gradients. Passing tape = nullptr runs pure inference.

// [m x k] @ [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape);

// [g x m x k] @ [g x k x n] -> [g x m x n]
Tensor batched_matmul(const Tensor& a, const Tensor& b, Tape* tape);

// [g x m x n] -> [g x n x m]
Tensor batched_transpose(const Tensor& x, Tape* tape);

// same shape, or bias broadcast of a rank-1 [n] over the rows of [m x n]
Tensor add(const Tensor& a, const Tensor& b, Tape* tape);

// elementwise product, same shape
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);

// out[i, :] = x[i, :] * s[i]; s is rank-1 of length rows(x)
Tensor scale_rows(const Tensor& x, const Tensor& s, Tape* tape);

// elementwise a * x + b
Tensor affine(const Tensor& x, double a, double b, Tape* tape);

// axis 0 stacks rows, axis 1 appends columns (2-D)
Tensor concat(const Tensor& a, const Tensor& b, int axis, Tape* tape);

// out[i, :] = x[indices[i], :]
Tensor gather_rows(const Tensor& x, std::vector<int64_t> indices, Tape* tape);

// out[indices[i], :] += x[i, :]; out has out_rows rows
Tensor scatter_add_rows(const Tensor& x, std::vector<int64_t> indices, int64_t out_rows,
                        Tape* tape);

// per-column max over rows sharing a segment id; empty segments yield zero;
// gradient routes to the first maximal row
Tensor segment_max(const Tensor& x, std::vector<int64_t> segments, int64_t num_segments,
                   Tape* tape);

// softmax over entries sharing a segment id; logits is rank-1
Tensor segment_softmax(const Tensor& logits, std::vector<int64_t> segments, int64_t num_segments,
                       Tape* tape);

Tensor reduce_mean(const Tensor& x, int axis, Tape* tape);
Tensor reduce_sum(const Tensor& x, int axis, Tape* tape);
// ties route gradient to the first maximal element
Tensor reduce_max(const Tensor& x, int axis, Tape* tape);

Tensor relu(const Tensor& x, Tape* tape);
Tensor tanh(const Tensor& x, Tape* tape);
Tensor sigmoid(const Tensor& x, Tape* tape);

// elementwise square root; inputs must be positive
Tensor vsqrt(const Tensor& x, Tape* tape);
// elementwise division, same shape
Tensor vdiv(const Tensor& a, const Tensor& b, Tape* tape);

// softmax over the last axis of a 2-D tensor
Tensor softmax(const Tensor& x, Tape* tape);

// mean negative log-likelihood of labels under softmax(logits); labels are
// class indices, one per row
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tape* tape);

// same data, new shape (sizes must match)
Tensor reshape(const Tensor& x, Shape shape, Tape* tape);

}  // namespace relchain
