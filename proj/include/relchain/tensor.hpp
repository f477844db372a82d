#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "relchain/rng.hpp"

namespace relchain {

using Shape = std::vector<int64_t>;

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;    // allocated lazily on first backward write
  bool requires_grad = false;  // leaf parameter flag
  bool needs_grad = false;     // true when gradients must flow through
};

// Dense row-major tensor of 64-bit floats with value semantics on the
// handle; copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  static Tensor from_values(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(impl_->value.size()); }
  int64_t rows() const;  // first axis
  int64_t cols() const;  // trailing flattened axes

  std::span<double> values() { return impl_->value; }
  std::span<const double> values() const { return impl_->value; }
  double scalar_value() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b);
  bool needs_grad() const { return impl_ && impl_->needs_grad; }

  // Gradient with the tensor's shape; zeros when never reached by backward.
  Tensor grad() const;
  void zero_grad();

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape. Ops append records in construction order, which is a
// topological order by construction; backward replays it in reverse.
class Tape {
 public:
  void record(std::vector<Tensor> inputs, const Tensor& output, std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // reachable tensor with needs_grad. Throws if loss is not scalar or the
  // tape was already consumed and not reset.
  void backward(const Tensor& loss);

  void reset();
  size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Record {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };
  std::vector<Record> records_;
  bool consumed_ = false;
};

// Ensures the grad buffer exists (zeroed) and returns it.
std::span<double> ensure_grad(const std::shared_ptr<TensorImpl>& impl);

}  // namespace relchain
