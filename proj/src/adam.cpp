#include "attrcloak/adam.hpp"

#include <cmath>
#include <string>

#include "attrcloak/errors.hpp"

namespace attrcloak {

Adam::Adam(std::vector<int64_t> shape, AdamConfig cfg)
    : cfg_(cfg), shape_(std::move(shape)), m_(shape_), v_(shape_) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0)) throw ConfigError("adam: beta1 must be in [0,1)");
  if (!(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) throw ConfigError("adam: beta2 must be in [0,1)");
  if (!(cfg_.eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

void Adam::step(Tensor& var, const Tensor& grad) {
  if (var.dims() != shape_ || grad.dims() != shape_)
    throw ShapeError("adam: parameter " + var.shape_str() + " / gradient " + grad.shape_str() +
                     " do not match optimizer shape " + shape_str(shape_));
  const double* g = grad.data();
  int64_t n = grad.size();
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i]))
      throw Error("adam: non-finite gradient " + std::to_string(g[i]) + " at flat index " +
                  std::to_string(i));
  }
  ++t_;
  b1t_ *= cfg_.beta1;
  b2t_ *= cfg_.beta2;
  double c1 = 1.0 / (1.0 - b1t_);
  double c2 = 1.0 / (1.0 - b2t_);
  double* m = m_.mut();
  double* v = v_.mut();
  double* x = var.mut();
  for (int64_t i = 0; i < n; ++i) {
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    double mhat = m[i] * c1;
    double vhat = v[i] * c2;
    x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
}

}  // namespace attrcloak
