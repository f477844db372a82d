#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "relchain/tensor.hpp"

namespace relchain {

struct Parameter {
  std::string name;
  Tensor value;
};

// In-place updates from accumulated gradients. Both throw when a parameter
// has no gradient buffer (backward never ran).
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::vector<Parameter>& params);

 private:
  double lr_;
};

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<Parameter>& params);

 private:
  struct State {
    std::vector<double> m;
    std::vector<double> v;
  };
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::unordered_map<const TensorImpl*, State> state_;
};

void zero_grads(std::vector<Parameter>& params);

}  // namespace relchain
