#include "relchain/tensor.hpp"

#include <numeric>
#include <sstream>

namespace relchain {

std::string shape_str(const Shape& s) {
  std::ostringstream out;
  out << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out << " x ";
    out << s[i];
  }
  out << ']';
  return out.str();
}

namespace {
int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(s));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) {
  impl_ = std::make_shared<TensorImpl>();
  impl_->value.assign(static_cast<size_t>(shape_numel(shape)), fill);
  impl_->shape = std::move(shape);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  Tensor t;
  t.impl_ = std::make_shared<TensorImpl>();
  t.impl_->shape = std::move(shape);
  t.impl_->value = std::move(values);
  return t;
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.impl_->value) v = rng.uniform(lo, hi);
  return t;
}

int64_t Tensor::rows() const { return impl_->shape.empty() ? 1 : impl_->shape[0]; }

int64_t Tensor::cols() const {
  if (impl_->shape.size() <= 1) return impl_->shape.empty() ? 1 : 1;
  int64_t n = 1;
  for (size_t i = 1; i < impl_->shape.size(); ++i) n *= impl_->shape[i];
  return n;
}

double Tensor::scalar_value() const {
  if (size() != 1) throw ShapeError("scalar_value on tensor of shape " + shape_str(shape()));
  return impl_->value[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
  impl_->requires_grad = b;
  impl_->needs_grad = b;
  return *this;
}

Tensor Tensor::grad() const {
  Tensor g(impl_->shape, 0.0);
  if (!impl_->grad.empty()) g.impl_->value = impl_->grad;
  return g;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

std::span<double> ensure_grad(const std::shared_ptr<TensorImpl>& impl) {
  if (impl->grad.empty()) impl->grad.assign(impl->value.size(), 0.0);
  return impl->grad;
}

void Tape::record(std::vector<Tensor> inputs, const Tensor& output,
                  std::function<void()> backward) {
  records_.push_back(Record{std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (consumed_) throw std::logic_error("backward: tape already consumed; call reset() first");
  consumed_ = true;
  ensure_grad(loss.impl())[0] = 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output.impl()->grad.empty()) continue;  // branch never reached the loss
    it->backward();
  }
}

void Tape::reset() {
  records_.clear();
  consumed_ = false;
}

}  // namespace relchain
