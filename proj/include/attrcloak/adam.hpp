#pragma once

#include <cstdint>

#include "attrcloak/tensor.hpp"

namespace attrcloak {

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction. One optimizer instance per parameter tensor;
// state stays on the instance so steps are reproducible from (config, grads).
class Adam {
 public:
  Adam(std::vector<int64_t> shape, AdamConfig cfg = {});

  // var -= lr * mhat / (sqrt(vhat) + eps). Errors on shape mismatch or any
  // non-finite gradient element (reported with its flat index).
  void step(Tensor& var, const Tensor& grad);

  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<int64_t> shape_;
  Tensor m_, v_;
  int64_t t_ = 0;
  double b1t_ = 1.0, b2t_ = 1.0;  // running beta powers
};

}  // namespace attrcloak
