#pragma once

#include <cstdint>
#include <vector>

#include "attrcloak/tensor.hpp"

namespace attrcloak {

// Handle into a Tape. Only meaningful for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Append-only reverse-mode autodiff tape. Ops evaluate eagerly, so values
// are readable while the graph is still being built; backward() then walks
// the recorded nodes once, newest to oldest.
//
// Gradient conventions at non-smooth points: relu and max-with-constant take
// subgradient 0 at the kink, sqrt takes 0 at x = 0. Nodes reachable only from
// constants are skipped in backward entirely.
class Tape {
 public:
  Tape();

  // Differentiable input. Gradients accumulate here.
  Var leaf(Tensor v);
  // Non-differentiable input (weights, data). Never receives gradients.
  Var constant(Tensor v);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  // (m x k) * (k x n) -> (m x n)
  Var matmul(Var a, Var b);
  // x: (n) or (batch x n), w: (m x n), bias: (m) -> (m) or (batch x m)
  Var affine(Var x, Var w, Var bias);
  Var relu(Var a);
  Var tanh(Var a);
  // Domain x > 0, checked at forward.
  Var log(Var a);
  // Domain x >= 0, checked at forward.
  Var sqrt(Var a);
  // Softmax over the last axis, numerically stabilized per row. Rows sum to
  // 1 within 1e-12; entries are strictly inside (0,1) provided the row's
  // logit spread stays below ~36 (beyond that the dominant entry rounds to
  // exactly 1 in double precision).
  Var softmax(Var a);
  Var sum(Var a);
  Var mean(Var a);
  // Sum of squares of all elements.
  Var sqnorm(Var a);
  // Elementwise max(x, c).
  Var maxc(Var a, double c);
  // out[i] = a.flat[idx[i]]; idx values must be in range.
  Var gather(Var a, std::vector<int64_t> idx);
  // Flat concatenation of 1-D views, in order.
  Var concat(const std::vector<Var>& parts);
  // v / ||v||2 for a 1-D vector; errors on the zero vector.
  Var l2_normalize(Var a);

  const Tensor& value(Var v) const;

  // Root must be scalar. Seeds d(root)/d(root) = 1 and accumulates adjoints
  // into every gradient-requiring node.
  void backward(Var root);

  // Adjoint of a node after backward(); zero tensor if the node never
  // received a contribution. Errors for constant-only nodes or before
  // backward() has run.
  Tensor grad(Var v) const;

  bool requires_grad(Var v) const;
  size_t size() const { return nodes_.size(); }
  void clear();

 private:
  enum class Op : uint8_t {
    kLeaf, kConst, kAdd, kSub, kMul, kScale, kMatmul, kAffine, kRelu, kTanh,
    kLog, kSqrt, kSoftmax, kSum, kMean, kSqnorm, kMaxc, kGather, kConcat, kL2norm,
  };
  struct Node {
    Op op;
    bool needs_grad;
    double sparam = 0.0;  // scale factor / max constant / cached l2 norm
    std::vector<int> parents;
    std::vector<int64_t> idx;  // gather indices
    Tensor value;
  };

  Var push(Op op, bool needs_grad, Tensor value, std::vector<int> parents, double sparam = 0.0,
           std::vector<int64_t> idx = {});
  const Node& at(Var v, const char* who) const;
  Tensor& adj(int i, const std::vector<int64_t>& dims);
  void backprop(int i);

  std::vector<Node> nodes_;
  std::vector<Tensor> adjoints_;
  bool backward_done_ = false;
};

}  // namespace attrcloak
