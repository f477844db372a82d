#include "relchain/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace relchain {

namespace {
std::vector<double>& grad_or_throw(Parameter& p) {
  auto& g = p.value.impl()->grad;
  if (g.empty())
    throw std::runtime_error("optimizer: parameter '" + p.name + "' has no gradient");
  return g;
}
}  // namespace

void Sgd::step(std::vector<Parameter>& params) {
  for (Parameter& p : params) {
    auto& g = grad_or_throw(p);
    auto v = p.value.values();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= lr_ * g[i];
  }
}

void Adam::step(std::vector<Parameter>& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter& p : params) {
    auto& g = grad_or_throw(p);
    State& s = state_[p.value.impl().get()];
    if (s.m.empty()) {
      s.m.assign(g.size(), 0.0);
      s.v.assign(g.size(), 0.0);
    }
    auto v = p.value.values();
    for (size_t i = 0; i < v.size(); ++i) {
      s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g[i];
      s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      v[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void zero_grads(std::vector<Parameter>& params) {
  for (Parameter& p : params) p.value.zero_grad();
}

}  // namespace relchain
