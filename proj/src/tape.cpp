#include "attrcloak/tape.hpp"

#include <cmath>
#include <string>

#include "attrcloak/kernels.hpp"

namespace attrcloak {

namespace {
const kern::Kernels& K() { return kern::active(); }

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}
}  // namespace

Tape::Tape() {
  nodes_.reserve(64);
  adjoints_.reserve(64);
}

Var Tape::push(Op op, bool needs_grad, Tensor value, std::vector<int> parents, double sparam,
               std::vector<int64_t> idx) {
  Node n;
  n.op = op;
  n.needs_grad = needs_grad;
  n.sparam = sparam;
  n.parents = std::move(parents);
  n.idx = std::move(idx);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  adjoints_.emplace_back();
  backward_done_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::at(Var v, const char* who) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw Error(std::string(who) + ": invalid tape handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::leaf(Tensor v) {
  if (!v.defined()) throw ShapeError("leaf: undefined tensor");
  return push(Op::kLeaf, true, std::move(v), {});
}

Var Tape::constant(Tensor v) {
  if (!v.defined()) throw ShapeError("constant: undefined tensor");
  return push(Op::kConst, false, std::move(v), {});
}

Var Tape::add(Var a, Var b) {
  const Node& na = at(a, "add");
  const Node& nb = at(b, "add");
  check_same_shape("add", na.value, nb.value);
  Tensor out(na.value.dims());
  K().add(na.value.data(), nb.value.data(), out.mut(), out.size());
  return push(Op::kAdd, na.needs_grad || nb.needs_grad, std::move(out), {a.id, b.id});
}

Var Tape::sub(Var a, Var b) {
  const Node& na = at(a, "subtract");
  const Node& nb = at(b, "subtract");
  check_same_shape("subtract", na.value, nb.value);
  Tensor out(na.value.dims());
  K().sub(na.value.data(), nb.value.data(), out.mut(), out.size());
  return push(Op::kSub, na.needs_grad || nb.needs_grad, std::move(out), {a.id, b.id});
}

Var Tape::mul(Var a, Var b) {
  const Node& na = at(a, "multiply");
  const Node& nb = at(b, "multiply");
  check_same_shape("multiply", na.value, nb.value);
  Tensor out(na.value.dims());
  K().mul(na.value.data(), nb.value.data(), out.mut(), out.size());
  return push(Op::kMul, na.needs_grad || nb.needs_grad, std::move(out), {a.id, b.id});
}

Var Tape::scale(Var a, double s) {
  const Node& na = at(a, "scale");
  Tensor out(na.value.dims());
  K().scale(na.value.data(), s, out.mut(), out.size());
  return push(Op::kScale, na.needs_grad, std::move(out), {a.id}, s);
}

Var Tape::matmul(Var a, Var b) {
  const Node& na = at(a, "matmul");
  const Node& nb = at(b, "matmul");
  if (na.value.ndim() != 2 || nb.value.ndim() != 2)
    throw ShapeError("matmul: operands must be 2-d, got " + na.value.shape_str() + " and " +
                     nb.value.shape_str());
  int64_t m = na.value.dims()[0], k = na.value.dims()[1];
  int64_t k2 = nb.value.dims()[0], n = nb.value.dims()[1];
  if (k != k2)
    throw ShapeError("matmul: inner dims differ, " + na.value.shape_str() + " vs " +
                     nb.value.shape_str());
  Tensor out({m, n});
  K().gemm_nn(na.value.data(), nb.value.data(), out.mut(), m, k, n);
  return push(Op::kMatmul, na.needs_grad || nb.needs_grad, std::move(out), {a.id, b.id});
}

Var Tape::affine(Var x, Var w, Var bias) {
  const Node& nx = at(x, "affine");
  const Node& nw = at(w, "affine");
  const Node& nb = at(bias, "affine");
  if (nw.value.ndim() != 2)
    throw ShapeError("affine: weight must be 2-d, got " + nw.value.shape_str());
  int64_t m = nw.value.dims()[0], n = nw.value.dims()[1];
  if (nb.value.ndim() != 1 || nb.value.dims()[0] != m)
    throw ShapeError("affine: bias " + nb.value.shape_str() + " does not match weight " +
                     nw.value.shape_str());
  bool batched = nx.value.ndim() == 2;
  if (!batched && nx.value.ndim() != 1)
    throw ShapeError("affine: input must be 1-d or 2-d, got " + nx.value.shape_str());
  int64_t batch = batched ? nx.value.dims()[0] : 1;
  int64_t in = batched ? nx.value.dims()[1] : nx.value.dims()[0];
  if (in != n)
    throw ShapeError("affine: input " + nx.value.shape_str() + " does not match weight " +
                     nw.value.shape_str());
  Tensor out(batched ? std::vector<int64_t>{batch, m} : std::vector<int64_t>{m});
  double* o = out.mut();
  for (int64_t r = 0; r < batch; ++r)
    for (int64_t i = 0; i < m; ++i) o[r * m + i] = nb.value[i];
  K().gemm_nt(nx.value.data(), nw.value.data(), o, batch, n, m);
  return push(Op::kAffine, nx.needs_grad || nw.needs_grad || nb.needs_grad, std::move(out),
              {x.id, w.id, bias.id});
}

Var Tape::relu(Var a) {
  const Node& na = at(a, "relu");
  Tensor out(na.value.dims());
  K().relu(na.value.data(), out.mut(), out.size());
  return push(Op::kRelu, na.needs_grad, std::move(out), {a.id});
}

Var Tape::tanh(Var a) {
  const Node& na = at(a, "tanh");
  Tensor out(na.value.dims());
  const double* in = na.value.data();
  double* o = out.mut();
  for (int64_t i = 0; i < out.size(); ++i) o[i] = std::tanh(in[i]);
  return push(Op::kTanh, na.needs_grad, std::move(out), {a.id});
}

Var Tape::log(Var a) {
  const Node& na = at(a, "log");
  Tensor out(na.value.dims());
  const double* in = na.value.data();
  double* o = out.mut();
  for (int64_t i = 0; i < out.size(); ++i) {
    if (!(in[i] > 0.0))
      throw Error("log: input must be strictly positive, got " + std::to_string(in[i]) +
                  " at flat index " + std::to_string(i));
    o[i] = std::log(in[i]);
  }
  return push(Op::kLog, na.needs_grad, std::move(out), {a.id});
}

Var Tape::sqrt(Var a) {
  const Node& na = at(a, "sqrt");
  Tensor out(na.value.dims());
  const double* in = na.value.data();
  double* o = out.mut();
  for (int64_t i = 0; i < out.size(); ++i) {
    if (in[i] < 0.0)
      throw Error("sqrt: input must be non-negative, got " + std::to_string(in[i]) +
                  " at flat index " + std::to_string(i));
    o[i] = std::sqrt(in[i]);
  }
  return push(Op::kSqrt, na.needs_grad, std::move(out), {a.id});
}

Var Tape::softmax(Var a) {
  const Node& na = at(a, "softmax");
  int64_t cols = na.value.dims().back();
  if (cols < 1) throw ShapeError("softmax: empty last axis");
  int64_t rows = na.value.size() / cols;
  Tensor out(na.value.dims());
  const double* in = na.value.data();
  double* o = out.mut();
  for (int64_t r = 0; r < rows; ++r) {
    const double* x = in + r * cols;
    double* y = o + r * cols;
    double hi = x[0];
    for (int64_t j = 1; j < cols; ++j) hi = x[j] > hi ? x[j] : hi;
    double z = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - hi);
      z += y[j];
    }
    double inv = 1.0 / z;
    for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
  }
  return push(Op::kSoftmax, na.needs_grad, std::move(out), {a.id});
}

Var Tape::sum(Var a) {
  const Node& na = at(a, "sum");
  return push(Op::kSum, na.needs_grad, Tensor::scalar(K().sum(na.value.data(), na.value.size())),
              {a.id});
}

Var Tape::mean(Var a) {
  const Node& na = at(a, "mean");
  double m = K().sum(na.value.data(), na.value.size()) / static_cast<double>(na.value.size());
  return push(Op::kMean, na.needs_grad, Tensor::scalar(m), {a.id});
}

Var Tape::sqnorm(Var a) {
  const Node& na = at(a, "squared-l2-norm");
  return push(Op::kSqnorm, na.needs_grad,
              Tensor::scalar(K().dot(na.value.data(), na.value.data(), na.value.size())), {a.id});
}

Var Tape::maxc(Var a, double c) {
  const Node& na = at(a, "max-with-constant");
  Tensor out(na.value.dims());
  K().maxc(na.value.data(), c, out.mut(), out.size());
  return push(Op::kMaxc, na.needs_grad, std::move(out), {a.id}, c);
}

Var Tape::gather(Var a, std::vector<int64_t> idx) {
  const Node& na = at(a, "gather");
  if (idx.empty()) throw ShapeError("gather: empty index list");
  Tensor out({static_cast<int64_t>(idx.size())});
  double* o = out.mut();
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= na.value.size())
      throw ShapeError("gather: index " + std::to_string(idx[i]) + " out of range for " +
                       na.value.shape_str());
    o[i] = na.value[idx[i]];
  }
  return push(Op::kGather, na.needs_grad, std::move(out), {a.id}, 0.0, std::move(idx));
}

Var Tape::concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concatenate: no inputs");
  int64_t total = 0;
  bool needs = false;
  std::vector<int> ps;
  for (Var p : parts) {
    const Node& np = at(p, "concatenate");
    total += np.value.size();
    needs = needs || np.needs_grad;
    ps.push_back(p.id);
  }
  Tensor out({total});
  double* o = out.mut();
  int64_t off = 0;
  for (Var p : parts) {
    const Tensor& v = nodes_[static_cast<size_t>(p.id)].value;
    for (int64_t i = 0; i < v.size(); ++i) o[off + i] = v[i];
    off += v.size();
  }
  return push(Op::kConcat, needs, std::move(out), std::move(ps));
}

Var Tape::l2_normalize(Var a) {
  const Node& na = at(a, "l2-normalize");
  if (na.value.ndim() != 1)
    throw ShapeError("l2-normalize: input must be 1-d, got " + na.value.shape_str());
  double r = std::sqrt(K().dot(na.value.data(), na.value.data(), na.value.size()));
  if (r == 0.0) throw Error("l2-normalize: zero vector");
  Tensor out(na.value.dims());
  K().scale(na.value.data(), 1.0 / r, out.mut(), out.size());
  return push(Op::kL2norm, na.needs_grad, std::move(out), {a.id}, r);
}

const Tensor& Tape::value(Var v) const { return at(v, "value").value; }

bool Tape::requires_grad(Var v) const { return at(v, "requires_grad").needs_grad; }

Tensor& Tape::adj(int i, const std::vector<int64_t>& dims) {
  Tensor& t = adjoints_[static_cast<size_t>(i)];
  if (!t.defined()) t = Tensor(dims);
  return t;
}

void Tape::backward(Var root) {
  if (nodes_.empty()) throw Error("backward: empty tape");
  const Node& r = at(root, "backward");
  if (r.value.size() != 1)
    throw Error("backward: root must be scalar, got " + r.value.shape_str());
  for (Tensor& t : adjoints_) t = Tensor();
  if (r.needs_grad) {
    adj(root.id, r.value.dims()).mut()[0] = 1.0;
    for (int i = root.id; i >= 0; --i) {
      if (!nodes_[static_cast<size_t>(i)].needs_grad) continue;
      if (!adjoints_[static_cast<size_t>(i)].defined()) continue;
      backprop(i);
    }
  }
  backward_done_ = true;
}

void Tape::backprop(int i) {
  Node& n = nodes_[static_cast<size_t>(i)];
  const Tensor& a = adjoints_[static_cast<size_t>(i)];
  const double* g = a.data();
  auto pnode = [&](int slot) -> Node& { return nodes_[static_cast<size_t>(n.parents[slot])]; };
  auto padj = [&](int slot) -> double* {
    Node& p = pnode(slot);
    return adj(n.parents[static_cast<size_t>(slot)], p.value.dims()).mut();
  };
  auto wants = [&](int slot) { return pnode(slot).needs_grad; };
  int64_t sz = n.value.size();

  switch (n.op) {
    case Op::kLeaf:
    case Op::kConst:
      break;
    case Op::kAdd:
      if (wants(0)) K().axpy(1.0, g, padj(0), sz);
      if (wants(1)) K().axpy(1.0, g, padj(1), sz);
      break;
    case Op::kSub:
      if (wants(0)) K().axpy(1.0, g, padj(0), sz);
      if (wants(1)) K().axpy(-1.0, g, padj(1), sz);
      break;
    case Op::kMul:
      if (wants(0)) K().madd(g, pnode(1).value.data(), padj(0), sz);
      if (wants(1)) K().madd(g, pnode(0).value.data(), padj(1), sz);
      break;
    case Op::kScale:
      if (wants(0)) K().axpy(n.sparam, g, padj(0), sz);
      break;
    case Op::kMatmul: {
      const Tensor& A = pnode(0).value;
      const Tensor& B = pnode(1).value;
      int64_t m = A.dims()[0], k = A.dims()[1], nn = B.dims()[1];
      if (wants(0)) K().gemm_nt(g, B.data(), padj(0), m, nn, k);
      if (wants(1)) K().gemm_tn(A.data(), g, padj(1), k, m, nn);
      break;
    }
    case Op::kAffine: {
      const Tensor& X = pnode(0).value;
      const Tensor& W = pnode(1).value;
      int64_t m = W.dims()[0], in = W.dims()[1];
      int64_t batch = X.ndim() == 2 ? X.dims()[0] : 1;
      if (wants(0)) K().gemm_nn(g, W.data(), padj(0), batch, m, in);
      if (wants(1)) K().gemm_tn(g, X.data(), padj(1), m, batch, in);
      if (wants(2)) {
        double* db = padj(2);
        for (int64_t r = 0; r < batch; ++r) K().axpy(1.0, g + r * m, db, m);
      }
      break;
    }
    case Op::kRelu:
      if (wants(0)) K().relu_bwd(pnode(0).value.data(), g, padj(0), sz);
      break;
    case Op::kTanh:
      if (wants(0)) {
        const double* y = n.value.data();
        double* d = padj(0);
        for (int64_t j = 0; j < sz; ++j) d[j] += g[j] * (1.0 - y[j] * y[j]);
      }
      break;
    case Op::kLog:
      if (wants(0)) {
        const double* x = pnode(0).value.data();
        double* d = padj(0);
        for (int64_t j = 0; j < sz; ++j) d[j] += g[j] / x[j];
      }
      break;
    case Op::kSqrt:
      if (wants(0)) {
        const double* y = n.value.data();
        double* d = padj(0);
        for (int64_t j = 0; j < sz; ++j)
          if (y[j] > 0.0) d[j] += g[j] * 0.5 / y[j];
      }
      break;
    case Op::kSoftmax:
      if (wants(0)) {
        const double* p = n.value.data();
        double* d = padj(0);
        int64_t cols = n.value.dims().back();
        int64_t rows = sz / cols;
        for (int64_t r = 0; r < rows; ++r) {
          const double* pr = p + r * cols;
          const double* gr = g + r * cols;
          double s = K().dot(gr, pr, cols);
          double* dr = d + r * cols;
          for (int64_t j = 0; j < cols; ++j) dr[j] += pr[j] * (gr[j] - s);
        }
      }
      break;
    case Op::kSum:
      if (wants(0)) {
        double* d = padj(0);
        double gv = g[0];
        int64_t pn = pnode(0).value.size();
        for (int64_t j = 0; j < pn; ++j) d[j] += gv;
      }
      break;
    case Op::kMean:
      if (wants(0)) {
        double* d = padj(0);
        int64_t pn = pnode(0).value.size();
        double gv = g[0] / static_cast<double>(pn);
        for (int64_t j = 0; j < pn; ++j) d[j] += gv;
      }
      break;
    case Op::kSqnorm:
      if (wants(0)) K().axpy(2.0 * g[0], pnode(0).value.data(), padj(0), pnode(0).value.size());
      break;
    case Op::kMaxc:
      if (wants(0)) K().maxc_bwd(pnode(0).value.data(), n.sparam, g, padj(0), sz);
      break;
    case Op::kGather:
      if (wants(0)) {
        double* d = padj(0);
        for (size_t j = 0; j < n.idx.size(); ++j) d[n.idx[j]] += g[j];
      }
      break;
    case Op::kConcat: {
      int64_t off = 0;
      for (size_t slot = 0; slot < n.parents.size(); ++slot) {
        int64_t pn = nodes_[static_cast<size_t>(n.parents[slot])].value.size();
        if (nodes_[static_cast<size_t>(n.parents[slot])].needs_grad) {
          Node& p = nodes_[static_cast<size_t>(n.parents[slot])];
          double* d = adj(n.parents[slot], p.value.dims()).mut();
          K().axpy(1.0, g + off, d, pn);
        }
        off += pn;
      }
      break;
    }
    case Op::kL2norm:
      if (wants(0)) {
        const double* y = n.value.data();
        double* d = padj(0);
        double s = K().dot(g, y, sz);
        double inv_r = 1.0 / n.sparam;
        for (int64_t j = 0; j < sz; ++j) d[j] += (g[j] - s * y[j]) * inv_r;
      }
      break;
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = at(v, "grad");
  if (!backward_done_) throw Error("grad: backward() has not run on this tape");
  if (!n.needs_grad)
    throw Error("grad: node is in a constant-only subgraph and has no gradient");
  const Tensor& a = adjoints_[static_cast<size_t>(v.id)];
  if (a.defined()) return a;
  return Tensor(n.value.dims());
}

void Tape::clear() {
  nodes_.clear();
  adjoints_.clear();
  backward_done_ = false;
}

}  // namespace attrcloak
