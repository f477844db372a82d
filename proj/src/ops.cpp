#include "relchain/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace relchain {

namespace {

bool wants_grad(std::initializer_list<Tensor> inputs) {
  for (const Tensor& t : inputs)
    if (t.needs_grad()) return true;
  return false;
}

// Marks the output and records the closure when gradients are needed.
void finish(Tape* tape, std::initializer_list<Tensor> inputs, Tensor& out,
            std::function<void()> backward) {
  if (tape != nullptr && wants_grad(inputs)) {
    out.impl()->needs_grad = true;
    tape->record(std::vector<Tensor>(inputs), out, std::move(backward));
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

void require_2d(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  require(a.dim(1) == b.dim(0),
          "matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = av + i * k;
    double* orow = ov + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double s = arow[p];
      if (s == 0.0) continue;
      const double* brow = bv + p * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  finish(tape, {a, b}, out, [a, b, out, m, k, n] {
    const double* g = out.impl()->grad.data();
    if (a.needs_grad()) {
      double* da = ensure_grad(a.impl()).data();
      const double* bv = b.values().data();
      // dA[i,p] += sum_j g[i,j] * B[p,j]
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        double* darow = da + i * k;
        for (int64_t p = 0; p < k; ++p) {
          const double* brow = bv + p * n;
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          darow[p] += acc;
        }
      }
    }
    if (b.needs_grad()) {
      double* db = ensure_grad(b.impl()).data();
      const double* av = a.values().data();
      // dB[p,j] += sum_i A[i,p] * g[i,j]
      for (int64_t i = 0; i < m; ++i) {
        const double* arow = av + i * k;
        const double* grow = g + i * n;
        for (int64_t p = 0; p < k; ++p) {
          const double s = arow[p];
          if (s == 0.0) continue;
          double* dbrow = db + p * n;
          for (int64_t j = 0; j < n; ++j) dbrow[j] += s * grow[j];
        }
      }
    }
  });
  return out;
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.rank() == 3 && b.rank() == 3,
          "batched_matmul: expected 3-D tensors, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
          "batched_matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const int64_t g = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  Tensor out({g, m, n});
  for (int64_t bi = 0; bi < g; ++bi) {
    const double* av = a.values().data() + bi * m * k;
    const double* bv = b.values().data() + bi * k * n;
    double* ov = out.values().data() + bi * m * n;
    for (int64_t i = 0; i < m; ++i)
      for (int64_t p = 0; p < k; ++p) {
        const double s = av[i * k + p];
        if (s == 0.0) continue;
        for (int64_t j = 0; j < n; ++j) ov[i * n + j] += s * bv[p * n + j];
      }
  }
  finish(tape, {a, b}, out, [a, b, out, g, m, k, n] {
    const double* grad = out.impl()->grad.data();
    for (int64_t bi = 0; bi < g; ++bi) {
      const double* gv = grad + bi * m * n;
      if (a.needs_grad()) {
        double* da = ensure_grad(a.impl()).data() + bi * m * k;
        const double* bv = b.values().data() + bi * k * n;
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (int64_t j = 0; j < n; ++j) acc += gv[i * n + j] * bv[p * n + j];
            da[i * k + p] += acc;
          }
      }
      if (b.needs_grad()) {
        double* db = ensure_grad(b.impl()).data() + bi * k * n;
        const double* av = a.values().data() + bi * m * k;
        for (int64_t i = 0; i < m; ++i)
          for (int64_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            if (s == 0.0) continue;
            for (int64_t j = 0; j < n; ++j) db[p * n + j] += s * gv[i * n + j];
          }
      }
    }
  });
  return out;
}

Tensor batched_transpose(const Tensor& x, Tape* tape) {
  require(x.rank() == 3, "batched_transpose: expected 3-D tensor, got " + shape_str(x.shape()));
  const int64_t g = x.dim(0), m = x.dim(1), n = x.dim(2);
  Tensor out({g, n, m});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (int64_t bi = 0; bi < g; ++bi)
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ov[bi * n * m + j * m + i] = xv[bi * m * n + i * n + j];
  finish(tape, {x}, out, [x, out, g, m, n] {
    const double* gv = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    for (int64_t bi = 0; bi < g; ++bi)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) dx[bi * m * n + i * n + j] += gv[bi * n * m + j * m + i];
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  const bool bias = b.rank() == 1 && a.rank() == 2 && b.dim(0) == a.dim(1);
  require(bias || a.shape() == b.shape(),
          "add: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  if (bias) {
    const int64_t m = a.dim(0), n = a.dim(1);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ov[i * n + j] = av[i * n + j] + bv[j];
  } else {
    for (int64_t i = 0; i < a.size(); ++i) ov[i] = av[i] + bv[i];
  }
  finish(tape, {a, b}, out, [a, b, out, bias] {
    const double* g = out.impl()->grad.data();
    if (a.needs_grad()) {
      double* da = ensure_grad(a.impl()).data();
      for (int64_t i = 0; i < a.size(); ++i) da[i] += g[i];
    }
    if (b.needs_grad()) {
      double* db = ensure_grad(b.impl()).data();
      if (bias) {
        const int64_t m = a.dim(0), n = a.dim(1);
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) db[j] += g[i * n + j];
      } else {
        for (int64_t i = 0; i < b.size(); ++i) db[i] += g[i];
      }
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.shape() == b.shape(),
          "mul: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < a.size(); ++i) ov[i] = av[i] * bv[i];
  finish(tape, {a, b}, out, [a, b, out] {
    const double* g = out.impl()->grad.data();
    if (a.needs_grad()) {
      double* da = ensure_grad(a.impl()).data();
      const double* bv = b.values().data();
      for (int64_t i = 0; i < a.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (b.needs_grad()) {
      double* db = ensure_grad(b.impl()).data();
      const double* av = a.values().data();
      for (int64_t i = 0; i < b.size(); ++i) db[i] += g[i] * av[i];
    }
  });
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& s, Tape* tape) {
  require_2d(x, "scale_rows");
  require(s.rank() == 1 && s.dim(0) == x.dim(0),
          "scale_rows: scale " + shape_str(s.shape()) + " does not match rows of " +
              shape_str(x.shape()));
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out({m, n});
  const double* xv = x.values().data();
  const double* sv = s.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] * sv[i];
  finish(tape, {x, s}, out, [x, s, out, m, n] {
    const double* g = out.impl()->grad.data();
    if (x.needs_grad()) {
      double* dx = ensure_grad(x.impl()).data();
      const double* sv = s.values().data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) dx[i * n + j] += g[i * n + j] * sv[i];
    }
    if (s.needs_grad()) {
      double* ds = ensure_grad(s.impl()).data();
      const double* xv = x.values().data();
      for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j) acc += g[i * n + j] * xv[i * n + j];
        ds[i] += acc;
      }
    }
  });
  return out;
}

Tensor affine(const Tensor& x, double a, double b, Tape* tape) {
  Tensor out(x.shape());
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < x.size(); ++i) ov[i] = a * xv[i] + b;
  finish(tape, {x}, out, [x, out, a] {
    const double* g = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    for (int64_t i = 0; i < x.size(); ++i) dx[i] += a * g[i];
  });
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis, Tape* tape) {
  require_2d(a, "concat");
  require_2d(b, "concat");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  if (axis == 0) {
    require(a.dim(1) == b.dim(1), "concat axis 0: column counts differ, " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
    Tensor out({a.dim(0) + b.dim(0), a.dim(1)});
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + a.size());
    finish(tape, {a, b}, out, [a, b, out] {
      const double* g = out.impl()->grad.data();
      if (a.needs_grad()) {
        double* da = ensure_grad(a.impl()).data();
        for (int64_t i = 0; i < a.size(); ++i) da[i] += g[i];
      }
      if (b.needs_grad()) {
        double* db = ensure_grad(b.impl()).data();
        for (int64_t i = 0; i < b.size(); ++i) db[i] += g[a.size() + i];
      }
    });
    return out;
  }
  require(a.dim(0) == b.dim(0), "concat axis 1: row counts differ, " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  const int64_t m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  Tensor out({m, na + nb});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < m; ++i) {
    std::copy(av + i * na, av + (i + 1) * na, ov + i * (na + nb));
    std::copy(bv + i * nb, bv + (i + 1) * nb, ov + i * (na + nb) + na);
  }
  finish(tape, {a, b}, out, [a, b, out, m, na, nb] {
    const double* g = out.impl()->grad.data();
    if (a.needs_grad()) {
      double* da = ensure_grad(a.impl()).data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < na; ++j) da[i * na + j] += g[i * (na + nb) + j];
    }
    if (b.needs_grad()) {
      double* db = ensure_grad(b.impl()).data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < nb; ++j) db[i * nb + j] += g[i * (na + nb) + na + j];
    }
  });
  return out;
}

Tensor gather_rows(const Tensor& x, std::vector<int64_t> indices, Tape* tape) {
  require_2d(x, "gather_rows");
  const int64_t m = x.dim(0), n = x.dim(1);
  for (int64_t idx : indices)
    require(idx >= 0 && idx < m, "gather_rows: index " + std::to_string(idx) +
                                     " out of range for " + shape_str(x.shape()));
  Tensor out({static_cast<int64_t>(indices.size()), n});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy(xv + indices[i] * n, xv + (indices[i] + 1) * n, ov + static_cast<int64_t>(i) * n);
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(indices));
  finish(tape, {x}, out, [x, out, idx, n] {
    const double* g = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    for (size_t i = 0; i < idx->size(); ++i) {
      double* drow = dx + (*idx)[i] * n;
      const double* grow = g + static_cast<int64_t>(i) * n;
      for (int64_t j = 0; j < n; ++j) drow[j] += grow[j];
    }
  });
  return out;
}

Tensor scatter_add_rows(const Tensor& x, std::vector<int64_t> indices, int64_t out_rows,
                        Tape* tape) {
  require_2d(x, "scatter_add_rows");
  require(static_cast<int64_t>(indices.size()) == x.dim(0),
          "scatter_add_rows: " + std::to_string(indices.size()) + " indices for " +
              shape_str(x.shape()));
  const int64_t n = x.dim(1);
  for (int64_t idx : indices)
    require(idx >= 0 && idx < out_rows,
            "scatter_add_rows: index " + std::to_string(idx) + " out of range");
  Tensor out({out_rows, n});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (size_t i = 0; i < indices.size(); ++i) {
    double* orow = ov + indices[i] * n;
    const double* xrow = xv + static_cast<int64_t>(i) * n;
    for (int64_t j = 0; j < n; ++j) orow[j] += xrow[j];
  }
  auto idx = std::make_shared<std::vector<int64_t>>(std::move(indices));
  finish(tape, {x}, out, [x, out, idx, n] {
    const double* g = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    for (size_t i = 0; i < idx->size(); ++i) {
      const double* grow = g + (*idx)[i] * n;
      double* drow = dx + static_cast<int64_t>(i) * n;
      for (int64_t j = 0; j < n; ++j) drow[j] += grow[j];
    }
  });
  return out;
}

Tensor segment_max(const Tensor& x, std::vector<int64_t> segments, int64_t num_segments,
                   Tape* tape) {
  require_2d(x, "segment_max");
  require(static_cast<int64_t>(segments.size()) == x.dim(0),
          "segment_max: segment count does not match rows of " + shape_str(x.shape()));
  const int64_t n = x.dim(1);
  Tensor out({num_segments, n});
  auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(num_segments * n), -1);
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (size_t i = 0; i < segments.size(); ++i) {
    const int64_t s = segments[i];
    require(s >= 0 && s < num_segments, "segment_max: segment id out of range");
    for (int64_t j = 0; j < n; ++j) {
      int64_t& am = (*argmax)[static_cast<size_t>(s * n + j)];
      const double v = xv[static_cast<int64_t>(i) * n + j];
      if (am < 0 || v > ov[s * n + j]) {
        ov[s * n + j] = v;
        am = static_cast<int64_t>(i);
      }
    }
  }
  // empty segments keep the zero fill
  finish(tape, {x}, out, [x, out, argmax, n, num_segments] {
    const double* g = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    for (int64_t s = 0; s < num_segments; ++s)
      for (int64_t j = 0; j < n; ++j) {
        const int64_t am = (*argmax)[static_cast<size_t>(s * n + j)];
        if (am >= 0) dx[am * n + j] += g[s * n + j];
      }
  });
  return out;
}

Tensor segment_softmax(const Tensor& logits, std::vector<int64_t> segments, int64_t num_segments,
                       Tape* tape) {
  require(logits.rank() == 1, "segment_softmax: expected rank-1 logits, got " +
                                  shape_str(logits.shape()));
  require(static_cast<int64_t>(segments.size()) == logits.dim(0),
          "segment_softmax: segment count mismatch");
  const int64_t m = logits.dim(0);
  Tensor out({m});
  const double* lv = logits.values().data();
  double* ov = out.values().data();
  std::vector<double> seg_max(static_cast<size_t>(num_segments),
                              -std::numeric_limits<double>::infinity());
  std::vector<double> seg_sum(static_cast<size_t>(num_segments), 0.0);
  for (int64_t i = 0; i < m; ++i)
    seg_max[static_cast<size_t>(segments[i])] =
        std::max(seg_max[static_cast<size_t>(segments[i])], lv[i]);
  for (int64_t i = 0; i < m; ++i) {
    ov[i] = std::exp(lv[i] - seg_max[static_cast<size_t>(segments[i])]);
    seg_sum[static_cast<size_t>(segments[i])] += ov[i];
  }
  for (int64_t i = 0; i < m; ++i) ov[i] /= seg_sum[static_cast<size_t>(segments[i])];
  auto segs = std::make_shared<std::vector<int64_t>>(std::move(segments));
  finish(tape, {logits}, out, [logits, out, segs, num_segments, m] {
    const double* g = out.impl()->grad.data();
    const double* y = out.values().data();
    double* dx = ensure_grad(logits.impl()).data();
    std::vector<double> dot(static_cast<size_t>(num_segments), 0.0);
    for (int64_t i = 0; i < m; ++i) dot[static_cast<size_t>((*segs)[i])] += g[i] * y[i];
    for (int64_t i = 0; i < m; ++i)
      dx[i] += y[i] * (g[i] - dot[static_cast<size_t>((*segs)[i])]);
  });
  return out;
}

namespace {

Tensor reduce_impl(const Tensor& x, int axis, Tape* tape, int kind /*0 sum,1 mean,2 max*/) {
  const char* names[] = {"reduce_sum", "reduce_mean", "reduce_max"};
  require_2d(x, names[kind]);
  require(axis == 0 || axis == 1, std::string(names[kind]) + ": axis must be 0 or 1");
  const int64_t m = x.dim(0), n = x.dim(1);
  const int64_t out_len = axis == 0 ? n : m;
  const int64_t reduced = axis == 0 ? m : n;
  require(reduced > 0, std::string(names[kind]) + ": cannot reduce over empty axis of " +
                           shape_str(x.shape()));
  Tensor out({out_len});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  auto at = [&](int64_t r, int64_t o) { return axis == 0 ? xv[r * n + o] : xv[o * n + r]; };
  auto argmax = std::make_shared<std::vector<int64_t>>();
  if (kind == 2) argmax->assign(static_cast<size_t>(out_len), 0);
  for (int64_t o = 0; o < out_len; ++o) {
    if (kind == 2) {
      double best = at(0, o);
      int64_t bi = 0;
      for (int64_t r = 1; r < reduced; ++r)
        if (at(r, o) > best) {
          best = at(r, o);
          bi = r;
        }
      ov[o] = best;
      (*argmax)[static_cast<size_t>(o)] = bi;
    } else {
      double acc = 0.0;
      for (int64_t r = 0; r < reduced; ++r) acc += at(r, o);
      ov[o] = kind == 1 ? acc / static_cast<double>(reduced) : acc;
    }
  }
  finish(tape, {x}, out, [x, out, axis, kind, argmax, m, n, reduced, out_len] {
    const double* g = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    auto dat = [&](int64_t r, int64_t o) -> double& {
      return axis == 0 ? dx[r * n + o] : dx[o * n + r];
    };
    for (int64_t o = 0; o < out_len; ++o) {
      if (kind == 2) {
        dat((*argmax)[static_cast<size_t>(o)], o) += g[o];
      } else {
        const double v = kind == 1 ? g[o] / static_cast<double>(reduced) : g[o];
        for (int64_t r = 0; r < reduced; ++r) dat(r, o) += v;
      }
    }
    (void)m;
  });
  return out;
}

Tensor unary_impl(const Tensor& x, Tape* tape, int kind /*0 relu,1 tanh,2 sigmoid,3 sqrt*/) {
  Tensor out(x.shape());
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < x.size(); ++i) {
    switch (kind) {
      case 0: ov[i] = xv[i] > 0.0 ? xv[i] : 0.0; break;
      case 1: ov[i] = std::tanh(xv[i]); break;
      case 2: ov[i] = 1.0 / (1.0 + std::exp(-xv[i])); break;
      default: ov[i] = std::sqrt(xv[i]); break;
    }
  }
  finish(tape, {x}, out, [x, out, kind] {
    const double* g = out.impl()->grad.data();
    const double* y = out.values().data();
    const double* xv = x.values().data();
    double* dx = ensure_grad(x.impl()).data();
    for (int64_t i = 0; i < x.size(); ++i) {
      switch (kind) {
        case 0: dx[i] += xv[i] > 0.0 ? g[i] : 0.0; break;
        case 1: dx[i] += g[i] * (1.0 - y[i] * y[i]); break;
        case 2: dx[i] += g[i] * y[i] * (1.0 - y[i]); break;
        default: dx[i] += g[i] * 0.5 / y[i]; break;
      }
    }
  });
  return out;
}

}  // namespace

Tensor reduce_sum(const Tensor& x, int axis, Tape* tape) { return reduce_impl(x, axis, tape, 0); }
Tensor reduce_mean(const Tensor& x, int axis, Tape* tape) { return reduce_impl(x, axis, tape, 1); }
Tensor reduce_max(const Tensor& x, int axis, Tape* tape) { return reduce_impl(x, axis, tape, 2); }

Tensor relu(const Tensor& x, Tape* tape) { return unary_impl(x, tape, 0); }
Tensor tanh(const Tensor& x, Tape* tape) { return unary_impl(x, tape, 1); }
Tensor sigmoid(const Tensor& x, Tape* tape) { return unary_impl(x, tape, 2); }
Tensor vsqrt(const Tensor& x, Tape* tape) { return unary_impl(x, tape, 3); }

Tensor vdiv(const Tensor& a, const Tensor& b, Tape* tape) {
  require(a.shape() == b.shape(),
          "vdiv: shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out(a.shape());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < a.size(); ++i) ov[i] = av[i] / bv[i];
  finish(tape, {a, b}, out, [a, b, out] {
    const double* g = out.impl()->grad.data();
    const double* av = a.values().data();
    const double* bv = b.values().data();
    if (a.needs_grad()) {
      double* da = ensure_grad(a.impl()).data();
      for (int64_t i = 0; i < a.size(); ++i) da[i] += g[i] / bv[i];
    }
    if (b.needs_grad()) {
      double* db = ensure_grad(b.impl()).data();
      for (int64_t i = 0; i < b.size(); ++i) db[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
  return out;
}

Tensor softmax(const Tensor& x, Tape* tape) {
  require_2d(x, "softmax");
  const int64_t m = x.dim(0), n = x.dim(1);
  Tensor out({m, n});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (int64_t i = 0; i < m; ++i) {
    const double* row = xv + i * n;
    double* orow = ov + i * n;
    double mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int64_t j = 0; j < n; ++j) orow[j] /= sum;
  }
  finish(tape, {x}, out, [x, out, m, n] {
    const double* g = out.impl()->grad.data();
    const double* y = out.values().data();
    double* dx = ensure_grad(x.impl()).data();
    for (int64_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (int64_t j = 0; j < n; ++j) dx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tape* tape) {
  require_2d(logits, "cross_entropy");
  const int64_t m = logits.dim(0), n = logits.dim(1);
  require(static_cast<int64_t>(labels.size()) == m,
          "cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
              shape_str(logits.shape()));
  for (int l : labels)
    require(l >= 0 && l < n, "cross_entropy: label " + std::to_string(l) + " out of range");
  Tensor out({1});
  const double* lv = logits.values().data();
  double loss = 0.0;
  for (int64_t i = 0; i < m; ++i) {
    const double* row = lv + i * n;
    double mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
    loss += mx + std::log(sum) - row[labels[static_cast<size_t>(i)]];
  }
  out.values()[0] = loss / static_cast<double>(m);
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  finish(tape, {logits}, out, [logits, out, labels_copy, m, n] {
    const double g = out.impl()->grad[0] / static_cast<double>(m);
    const double* lv = logits.values().data();
    double* dx = ensure_grad(logits.impl()).data();
    for (int64_t i = 0; i < m; ++i) {
      const double* row = lv + i * n;
      double mx = row[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < n; ++j) sum += std::exp(row[j] - mx);
      for (int64_t j = 0; j < n; ++j) {
        const double p = std::exp(row[j] - mx) / sum;
        dx[i * n + j] += g * (p - (j == labels_copy->at(static_cast<size_t>(i)) ? 1.0 : 0.0));
      }
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
  Tensor out = Tensor::from_values(std::move(shape),
                                   std::vector<double>(x.values().begin(), x.values().end()));
  require(out.size() == x.size(), "reshape: size mismatch, " + shape_str(x.shape()) + " vs " +
                                      shape_str(out.shape()));
  finish(tape, {x}, out, [x, out] {
    const double* g = out.impl()->grad.data();
    double* dx = ensure_grad(x.impl()).data();
    for (int64_t i = 0; i < x.size(); ++i) dx[i] += g[i];
  });
  return out;
}

}  // namespace relchain
