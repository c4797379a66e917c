#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "attrcloak/rng.hpp"
#include "attrcloak/tape.hpp"

using namespace attrcloak;

namespace {

// Replayable graph program: same instruction list, swappable leaf values.
// This is what lets central finite differences re-evaluate the whole graph.
enum class GK {
  leaf, cnst, add, sub, mul, scale, matmul, affine, relu, tanh_, log_, sqrt_,
  softmax, sum, mean, sqnorm, maxc, gather, concat, l2norm,
};

struct Instr {
  GK k;
  int a = -1, b = -1, c = -1;
  double s = 0.0;
  std::vector<int64_t> idx;
  std::vector<int> parts;
  Tensor cval;  // for cnst
};

struct Program {
  std::vector<Instr> instrs;
  std::vector<Tensor> base_leaves;
};

Var run_program(Tape& tp, const Program& pr, const std::vector<Tensor>& leaf_vals,
                std::vector<Var>* leaves_out) {
  std::vector<Var> vars;
  size_t li = 0;
  for (const Instr& in : pr.instrs) {
    switch (in.k) {
      case GK::leaf: {
        Var v = tp.leaf(leaf_vals.at(li++));
        if (leaves_out) leaves_out->push_back(v);
        vars.push_back(v);
        break;
      }
      case GK::cnst: vars.push_back(tp.constant(in.cval)); break;
      case GK::add: vars.push_back(tp.add(vars[in.a], vars[in.b])); break;
      case GK::sub: vars.push_back(tp.sub(vars[in.a], vars[in.b])); break;
      case GK::mul: vars.push_back(tp.mul(vars[in.a], vars[in.b])); break;
      case GK::scale: vars.push_back(tp.scale(vars[in.a], in.s)); break;
      case GK::matmul: vars.push_back(tp.matmul(vars[in.a], vars[in.b])); break;
      case GK::affine: vars.push_back(tp.affine(vars[in.a], vars[in.b], vars[in.c])); break;
      case GK::relu: vars.push_back(tp.relu(vars[in.a])); break;
      case GK::tanh_: vars.push_back(tp.tanh(vars[in.a])); break;
      case GK::log_: vars.push_back(tp.log(vars[in.a])); break;
      case GK::sqrt_: vars.push_back(tp.sqrt(vars[in.a])); break;
      case GK::softmax: vars.push_back(tp.softmax(vars[in.a])); break;
      case GK::sum: vars.push_back(tp.sum(vars[in.a])); break;
      case GK::mean: vars.push_back(tp.mean(vars[in.a])); break;
      case GK::sqnorm: vars.push_back(tp.sqnorm(vars[in.a])); break;
      case GK::maxc: vars.push_back(tp.maxc(vars[in.a], in.s)); break;
      case GK::gather: vars.push_back(tp.gather(vars[in.a], in.idx)); break;
      case GK::concat: {
        std::vector<Var> ps;
        for (int p : in.parts) ps.push_back(vars[p]);
        vars.push_back(tp.concat(ps));
        break;
      }
      case GK::l2norm: vars.push_back(tp.l2_normalize(vars[in.a])); break;
    }
  }
  return vars.back();
}

// Random graph generator. Builds eagerly on a scratch tape so domains
// (log positivity, l2 norms, value magnitudes) can be policed with real
// values while the replayable program is recorded.
Program gen_program(uint64_t seed) {
  CounterRng rng(seed);
  uint64_t ctr = 0;
  auto u = [&](uint64_t n) { return rng.uniform_int(0, ctr++, n); };
  auto ur = [&](double lo, double hi) { return rng.uniform(1, ctr++, lo, hi); };

  Program pr;
  Tape scratch;
  std::vector<Var> vars;
  std::vector<std::vector<int64_t>> shapes;

  auto rand_tensor = [&](const std::vector<int64_t>& sh) {
    Tensor t(sh);
    double* d = t.mut();
    for (int64_t i = 0; i < t.size(); ++i) d[i] = ur(-2.0, 2.0);
    return t;
  };
  auto emit = [&](Instr in, Var v) {
    pr.instrs.push_back(std::move(in));
    vars.push_back(v);
    shapes.push_back(scratch.value(v).dims());
    return static_cast<int>(vars.size()) - 1;
  };
  auto new_input = [&](std::vector<int64_t> sh) {
    Tensor t = rand_tensor(sh);
    bool as_leaf = pr.base_leaves.empty() || u(2) == 0;
    Instr in;
    if (as_leaf) {
      in.k = GK::leaf;
      pr.base_leaves.push_back(t);
      return emit(std::move(in), scratch.leaf(t));
    }
    in.k = GK::cnst;
    in.cval = t;
    return emit(std::move(in), scratch.constant(t));
  };
  auto rand_shape = [&]() -> std::vector<int64_t> {
    switch (u(5)) {
      case 0: return {1};
      case 1: return {static_cast<int64_t>(2 + u(4))};
      case 2: return {static_cast<int64_t>(2 + u(3)), static_cast<int64_t>(2 + u(3))};
      case 3: return {2, 2, 2};
      default: return {static_cast<int64_t>(2 + u(4))};
    }
  };
  auto tame = [&](int r) {
    // Keep magnitudes bounded so finite differences stay well conditioned.
    const Tensor& v = scratch.value(vars[static_cast<size_t>(r)]);
    double hi = 0.0;
    for (int64_t i = 0; i < v.size(); ++i) hi = std::max(hi, std::abs(v[i]));
    if (hi > 30.0) {
      Instr in;
      in.k = GK::scale;
      in.a = r;
      in.s = 0.125;
      return emit(std::move(in), scratch.scale(vars[static_cast<size_t>(r)], 0.125));
    }
    return r;
  };

  new_input(rand_shape());
  int n_ops = 8 + static_cast<int>(u(18));
  for (int step = 0; step < n_ops; ++step) {
    int r = static_cast<int>(u(vars.size()));
    switch (u(14)) {
      case 0:
      case 1: {  // add/sub/mul with a fresh same-shape partner
        int p = new_input(shapes[static_cast<size_t>(r)]);
        GK k = u(3) == 0 ? GK::add : (u(2) == 0 ? GK::sub : GK::mul);
        Instr in;
        in.k = k;
        in.a = r;
        in.b = p;
        Var v = k == GK::add   ? scratch.add(vars[r], vars[p])
                : k == GK::sub ? scratch.sub(vars[r], vars[p])
                               : scratch.mul(vars[r], vars[p]);
        tame(emit(std::move(in), v));
        break;
      }
      case 2: {
        Instr in;
        in.k = GK::scale;
        in.a = r;
        in.s = ur(-2.0, 2.0);
        emit(std::move(in), scratch.scale(vars[r], in.s));
        break;
      }
      case 3: {  // matmul: force a matrix operand into existence
        std::vector<int64_t> sa = shapes[static_cast<size_t>(r)];
        int a = r;
        if (sa.size() != 2) {
          a = new_input({static_cast<int64_t>(2 + u(2)), static_cast<int64_t>(2 + u(2))});
          sa = shapes[static_cast<size_t>(a)];
        }
        int b = new_input({sa[1], static_cast<int64_t>(1 + u(3))});
        Instr in;
        in.k = GK::matmul;
        in.a = a;
        in.b = b;
        tame(emit(std::move(in), scratch.matmul(vars[a], vars[b])));
        break;
      }
      case 4: {  // affine over a vector or batch input
        std::vector<int64_t> sx = shapes[static_cast<size_t>(r)];
        int x = r;
        if (sx.size() > 2) {
          x = new_input({static_cast<int64_t>(2 + u(3))});
          sx = shapes[static_cast<size_t>(x)];
        }
        int64_t n = sx.back();
        int64_t m = 2 + static_cast<int64_t>(u(3));
        int w = new_input({m, n});
        int bia = new_input({m});
        Instr in;
        in.k = GK::affine;
        in.a = x;
        in.b = w;
        in.c = bia;
        tame(emit(std::move(in), scratch.affine(vars[x], vars[w], vars[bia])));
        break;
      }
      case 5: {
        Instr in;
        in.k = GK::relu;
        in.a = r;
        emit(std::move(in), scratch.relu(vars[r]));
        break;
      }
      case 6: {
        Instr in;
        in.k = GK::tanh_;
        in.a = r;
        emit(std::move(in), scratch.tanh(vars[r]));
        break;
      }
      case 7: {  // log of a softmax stays in-domain
        Instr s1;
        s1.k = GK::softmax;
        s1.a = r;
        int sm = emit(std::move(s1), scratch.softmax(vars[r]));
        Instr in;
        in.k = GK::log_;
        in.a = sm;
        emit(std::move(in), scratch.log(vars[sm]));
        break;
      }
      case 8: {  // sqrt of sqnorm + 0.1 stays in-domain and off the kink
        Instr s1;
        s1.k = GK::sqnorm;
        s1.a = r;
        int q = emit(std::move(s1), scratch.sqnorm(vars[r]));
        Instr s2;
        s2.k = GK::cnst;
        s2.cval = Tensor::scalar(0.1);
        int c0 = emit(std::move(s2), scratch.constant(Tensor::scalar(0.1)));
        Instr s3;
        s3.k = GK::add;
        s3.a = q;
        s3.b = c0;
        int s = emit(std::move(s3), scratch.add(vars[q], vars[c0]));
        int t = tame(s);
        Instr in;
        in.k = GK::sqrt_;
        in.a = t;
        emit(std::move(in), scratch.sqrt(vars[t]));
        break;
      }
      case 9: {
        Instr in;
        in.k = GK::softmax;
        in.a = r;
        emit(std::move(in), scratch.softmax(vars[r]));
        break;
      }
      case 10: {
        GK k = u(3) == 0 ? GK::sum : (u(2) == 0 ? GK::mean : GK::sqnorm);
        Instr in;
        in.k = k;
        in.a = r;
        Var v = k == GK::sum    ? scratch.sum(vars[r])
                : k == GK::mean ? scratch.mean(vars[r])
                                : scratch.sqnorm(vars[r]);
        tame(emit(std::move(in), v));
        break;
      }
      case 11: {
        Instr in;
        in.k = GK::maxc;
        in.a = r;
        in.s = ur(-1.0, 1.0);
        emit(std::move(in), scratch.maxc(vars[r], in.s));
        break;
      }
      case 12: {
        int64_t sz = scratch.value(vars[r]).size();
        size_t k = 1 + u(3);
        std::vector<int64_t> idx;
        for (size_t i = 0; i < k; ++i) idx.push_back(static_cast<int64_t>(u(static_cast<uint64_t>(sz))));
        Instr in;
        in.k = GK::gather;
        in.a = r;
        in.idx = idx;
        emit(std::move(in), scratch.gather(vars[r], idx));
        break;
      }
      default: {
        size_t k = 2 + u(2);
        std::vector<int> parts;
        std::vector<Var> pvars;
        for (size_t i = 0; i < k; ++i) {
          int p = static_cast<int>(u(vars.size()));
          parts.push_back(p);
          pvars.push_back(vars[static_cast<size_t>(p)]);
        }
        Instr in;
        in.k = GK::concat;
        in.parts = parts;
        emit(std::move(in), scratch.concat(pvars));
        break;
      }
    }
  }
  // Reduce to a scalar root.
  int last = static_cast<int>(vars.size()) - 1;
  if (shapes.back() != std::vector<int64_t>{1}) {
    GK k = u(2) == 0 ? GK::mean : GK::sum;
    Instr in;
    in.k = k;
    in.a = last;
    emit(std::move(in), k == GK::mean ? scratch.mean(vars[last]) : scratch.sum(vars[last]));
  }
  return pr;
}

struct GradCheckResult {
  double max_rel = 0.0;
  double max_abs_small = 0.0;  // worst abs deviation among |analytic| < 1e-4
  int checked = 0;
  bool ok = true;
};

GradCheckResult gradcheck(const Program& pr) {
  GradCheckResult res;
  Tape tp;
  std::vector<Var> leaves;
  Var root = run_program(tp, pr, pr.base_leaves, &leaves);
  tp.backward(root);
  std::vector<Tensor> grads;
  for (Var l : leaves) grads.push_back(tp.grad(l));

  const double h = 1e-5;
  for (size_t li = 0; li < leaves.size(); ++li) {
    for (int64_t e = 0; e < pr.base_leaves[li].size(); ++e) {
      std::vector<Tensor> lv = pr.base_leaves;
      double orig = lv[li][e];
      lv[li].mut()[e] = orig + h;
      Tape t1;
      double fp = t1.value(run_program(t1, pr, lv, nullptr))[0];
      lv[li].mut()[e] = orig - h;
      Tape t2;
      double fm = t2.value(run_program(t2, pr, lv, nullptr))[0];
      double num = (fp - fm) / (2.0 * h);
      double ana = grads[li][e];
      ++res.checked;
      if (std::abs(ana) < 1e-4) {
        double abs_err = std::abs(ana - num);
        res.max_abs_small = std::max(res.max_abs_small, abs_err);
        if (abs_err > 1e-7) res.ok = false;
      } else {
        double rel = std::abs(ana - num) / std::abs(ana);
        res.max_rel = std::max(res.max_rel, rel);
        if (rel > 1e-4) res.ok = false;
      }
    }
  }
  return res;
}

Program single_op_program(GK k) {
  // Minimal graphs per primitive with hand-picked kink-free inputs.
  Program pr;
  auto leaf = [&](Tensor t) {
    Instr in;
    in.k = GK::leaf;
    pr.base_leaves.push_back(std::move(t));
    pr.instrs.push_back(std::move(in));
    return static_cast<int>(pr.instrs.size()) - 1;
  };
  auto cnst = [&](Tensor t) {
    Instr in;
    in.k = GK::cnst;
    in.cval = std::move(t);
    pr.instrs.push_back(std::move(in));
    return static_cast<int>(pr.instrs.size()) - 1;
  };
  auto op = [&](GK kk, int a, int b = -1, int c = -1, double s = 0.0,
                std::vector<int64_t> idx = {}, std::vector<int> parts = {}) {
    Instr in;
    in.k = kk;
    in.a = a;
    in.b = b;
    in.c = c;
    in.s = s;
    in.idx = std::move(idx);
    in.parts = std::move(parts);
    pr.instrs.push_back(std::move(in));
    return static_cast<int>(pr.instrs.size()) - 1;
  };

  Tensor va({3}, {1.2, -0.7, 0.4});
  Tensor vb({3}, {0.3, 1.5, -0.8});
  switch (k) {
    case GK::add: op(GK::sum, op(GK::add, leaf(va), leaf(vb))); break;
    case GK::sub: op(GK::sum, op(GK::sub, leaf(va), leaf(vb))); break;
    case GK::mul: op(GK::sum, op(GK::mul, leaf(va), leaf(vb))); break;
    case GK::scale: op(GK::sum, op(GK::scale, leaf(va), -1, -1, -1.7)); break;
    case GK::matmul: {
      int a = leaf(Tensor({2, 3}, {0.5, -1.0, 0.25, 2.0, 0.75, -0.5}));
      int b = leaf(Tensor({3, 2}, {1.0, 0.5, -0.25, 0.75, 1.5, -1.0}));
      op(GK::sqnorm, op(GK::matmul, a, b));
      break;
    }
    case GK::affine: {
      int x = leaf(Tensor({2, 3}, {0.4, -0.2, 0.9, 1.1, 0.3, -0.6}));
      int w = leaf(Tensor({2, 3}, {0.2, 0.8, -0.3, -0.5, 0.1, 0.6}));
      int b = leaf(Tensor({2}, {0.05, -0.4}));
      op(GK::sqnorm, op(GK::affine, x, w, b));
      break;
    }
    case GK::relu: op(GK::sum, op(GK::relu, leaf(va))); break;
    case GK::tanh_: op(GK::sum, op(GK::tanh_, leaf(va))); break;
    case GK::log_: op(GK::sum, op(GK::log_, op(GK::softmax, leaf(va)))); break;
    case GK::sqrt_: op(GK::sum, op(GK::sqrt_, op(GK::maxc, leaf(va), -1, -1, 0.3))); break;
    case GK::softmax: op(GK::sqnorm, op(GK::softmax, leaf(va))); break;
    case GK::sum: op(GK::sum, leaf(va)); break;
    case GK::mean: op(GK::mean, leaf(va)); break;
    case GK::sqnorm: op(GK::sqnorm, leaf(va)); break;
    case GK::maxc: op(GK::sum, op(GK::maxc, leaf(va), -1, -1, 0.1)); break;
    case GK::gather: op(GK::sum, op(GK::gather, leaf(va), -1, -1, 0.0, {2, 0, 2})); break;
    case GK::concat: {
      int a = leaf(va);
      int b = leaf(Tensor({2, 2}, {0.1, -0.9, 0.6, 1.3}));
      op(GK::sqnorm, op(GK::concat, -1, -1, -1, 0.0, {}, {a, b, a}));
      break;
    }
    case GK::l2norm: {
      int a = leaf(va);
      int c = cnst(Tensor({3}, {0.9, -0.4, 1.1}));
      op(GK::sum, op(GK::mul, op(GK::l2norm, a), c));
      break;
    }
    default: op(GK::sum, leaf(va)); break;
  }
  return pr;
}

// The attack objective in miniature: 4x4x1 image, tanh box reparameterization,
// 2-layer trunk, two softmax heads with margin terms, distortion, and an
// embedding-distance term. Only w is a leaf.
Program toy_objective_program(uint64_t seed) {
  CounterRng rng(seed);
  uint64_t ctr = 0;
  auto ur = [&](double lo, double hi) { return rng.uniform(9, ctr++, lo, hi); };
  auto rnd = [&](std::vector<int64_t> sh, double a) {
    Tensor t(sh);
    double* d = t.mut();
    for (int64_t i = 0; i < t.size(); ++i) d[i] = ur(-a, a);
    return t;
  };

  Program pr;
  auto cnst = [&](Tensor t) {
    Instr in;
    in.k = GK::cnst;
    in.cval = std::move(t);
    pr.instrs.push_back(std::move(in));
    return static_cast<int>(pr.instrs.size()) - 1;
  };
  auto op = [&](GK kk, int a, int b = -1, int c = -1, double s = 0.0,
                std::vector<int64_t> idx = {}) {
    Instr in;
    in.k = kk;
    in.a = a;
    in.b = b;
    in.c = c;
    in.s = s;
    in.idx = std::move(idx);
    pr.instrs.push_back(std::move(in));
    return static_cast<int>(pr.instrs.size()) - 1;
  };

  const int64_t n = 16;
  Tensor img(std::vector<int64_t>{n});
  {
    double* d = img.mut();
    for (int64_t i = 0; i < n; ++i) d[i] = 0.15 + 0.7 * rng.uniform(7, static_cast<uint64_t>(i));
  }
  Instr wleaf;
  wleaf.k = GK::leaf;
  pr.base_leaves.push_back(rnd({n}, 0.5));
  pr.instrs.push_back(std::move(wleaf));
  int w = 0;
  int I = cnst(img);
  // T = 0.5*(tanh(I + w) + 1)
  int T = op(GK::add, op(GK::scale, op(GK::tanh_, op(GK::add, I, w)), -1, -1, 0.5),
             cnst(Tensor::full({n}, 0.5)));
  // trunk: affine(16 -> 8) relu, affine(8 -> 6) relu
  int h1 = op(GK::relu, op(GK::affine, T, cnst(rnd({8, n}, 0.7)), cnst(rnd({8}, 0.2))));
  int h2 = op(GK::relu, op(GK::affine, h1, cnst(rnd({6, 8}, 0.7)), cnst(rnd({6}, 0.2))));
  // two heads, 2 and 3 classes
  int p0 = op(GK::softmax, op(GK::affine, h2, cnst(rnd({2, 6}, 0.9)), cnst(rnd({2}, 0.3))));
  int p1 = op(GK::softmax, op(GK::affine, h2, cnst(rnd({3, 6}, 0.9)), cnst(rnd({3}, 0.3))));
  // margin terms: max(P[a] - P[t], -c)
  int m0 = op(GK::maxc, op(GK::sub, op(GK::gather, p0, -1, -1, 0.0, {0}),
                           op(GK::gather, p0, -1, -1, 0.0, {1})),
              -1, -1, -0.1);
  int m1 = op(GK::maxc, op(GK::sub, op(GK::gather, p1, -1, -1, 0.0, {2}),
                           op(GK::gather, p1, -1, -1, 0.0, {0})),
              -1, -1, -0.1);
  // distortion ||I - T||^2
  int dist = op(GK::sqnorm, op(GK::sub, I, T));
  // identity distance via a small embedder on T vs on I
  int ew = cnst(rnd({4, 6}, 0.8));
  int eb = cnst(rnd({4}, 0.2));
  int eT = op(GK::l2norm, op(GK::affine, h2, ew, eb));
  // reference embedding as a constant unit vector
  Tensor eref({4}, {0.5, -0.5, 0.5, 0.5});
  int dId = op(GK::sqrt_, op(GK::sqnorm, op(GK::sub, eT, cnst(eref))));
  int loss = op(GK::add, op(GK::add, m0, m1),
                op(GK::add, dist, op(GK::scale, dId, -1, -1, 0.7)));
  (void)loss;
  return pr;
}

}  // namespace

TEST_CASE("frozen primitive values") {
  Tape tp;
  Var sm = tp.softmax(tp.constant(Tensor({2}, {0.0, 0.0})));
  CHECK(tp.value(sm)[0] == 0.5);
  CHECK(tp.value(sm)[1] == 0.5);

  Var th = tp.tanh(tp.constant(Tensor({2, 2}, {0, 0, 0, 0})));
  for (int64_t i = 0; i < 4; ++i) CHECK(tp.value(th)[i] == 0.0);

  Var q = tp.sqnorm(tp.constant(Tensor({2}, {3.0, 4.0})));
  CHECK(tp.value(q)[0] == 25.0);
}

TEST_CASE("frozen backward values") {
  {
    Tape tp;
    Var w = tp.leaf(Tensor({2, 3}, {1, -2, 3, 4, -5, 6}));
    tp.backward(tp.sum(w));
    Tensor g = tp.grad(w);
    for (int64_t i = 0; i < 6; ++i) CHECK(g[i] == 1.0);
  }
  {
    Tape tp;
    Var w = tp.leaf(Tensor({2}, {1.0, -2.0}));
    tp.backward(tp.sqnorm(w));
    Tensor g = tp.grad(w);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == -4.0);
  }
}

TEST_CASE("softmax rows sum to one with entries strictly inside (0,1)") {
  CounterRng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    int64_t cols = 2 + static_cast<int64_t>(rng.uniform_int(1, static_cast<uint64_t>(rep) * 2, 5));
    int64_t rows = 1 + static_cast<int64_t>(rng.uniform_int(1, static_cast<uint64_t>(rep) * 2 + 1, 3));
    Tensor x({rows, cols});
    double* d = x.mut();
    for (int64_t i = 0; i < x.size(); ++i)
      d[i] = rng.uniform(2, static_cast<uint64_t>(rep * 100 + i), -15.0, 15.0);
    Tape tp;
    Tensor p = tp.value(tp.softmax(tp.constant(x)));
    for (int64_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int64_t j = 0; j < cols; ++j) {
        double v = p[r * cols + j];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("shape and domain errors carry op names and shapes") {
  Tape tp;
  Var a = tp.leaf(Tensor({2}, {1, 2}));
  Var b = tp.leaf(Tensor({3}, {1, 2, 3}));
  CHECK_THROWS_WITH_AS(tp.add(a, b), doctest::Contains("add"), ShapeError);
  CHECK_THROWS_WITH_AS(tp.add(a, b), doctest::Contains("(2)"), ShapeError);
  CHECK_THROWS_WITH_AS(tp.mul(a, b), doctest::Contains("(3)"), ShapeError);
  Var m = tp.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_WITH_AS(tp.matmul(m, tp.leaf(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}))),
                       doctest::Contains("matmul"), ShapeError);
  CHECK_THROWS_AS(tp.affine(a, m, tp.leaf(Tensor({3}, {0, 0, 0}))), ShapeError);
  CHECK_THROWS_WITH_AS(tp.gather(a, {5}), doctest::Contains("out of range"), ShapeError);
  CHECK_THROWS_AS(tp.gather(a, {}), ShapeError);
  CHECK_THROWS_WITH_AS(tp.log(tp.constant(Tensor({2}, {1.0, -0.5}))),
                       doctest::Contains("positive"), Error);
  CHECK_THROWS_WITH_AS(tp.sqrt(tp.constant(Tensor({1}, {-4.0}))),
                       doctest::Contains("non-negative"), Error);
  CHECK_THROWS_WITH_AS(tp.l2_normalize(tp.constant(Tensor({2}, {0.0, 0.0}))),
                       doctest::Contains("zero"), Error);

  CHECK_THROWS_WITH_AS(tp.backward(m), doctest::Contains("scalar"), Error);
  Tape empty;
  CHECK_THROWS_WITH_AS(empty.backward(Var{0}), doctest::Contains("empty"), Error);

  Tape tg;
  Var x = tg.leaf(Tensor({1}, {2.0}));
  CHECK_THROWS_WITH_AS(tg.grad(x), doctest::Contains("backward"), Error);
  Var c = tg.constant(Tensor({1}, {3.0}));
  tg.backward(tg.mul(x, c));
  CHECK_THROWS_WITH_AS(tg.grad(c), doctest::Contains("constant"), Error);
  CHECK(tg.grad(x)[0] == 3.0);
}

TEST_CASE("matmul and affine match manual computation") {
  Tape tp;
  Var a = tp.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = tp.constant(Tensor({3, 2}, {7, 8, 9, 10, 11, 12}));
  Tensor c = tp.value(tp.matmul(a, b));
  CHECK(c[0] == 58.0);
  CHECK(c[1] == 64.0);
  CHECK(c[2] == 139.0);
  CHECK(c[3] == 154.0);

  // affine on a vector and on a batch row-by-row agree
  Var w = tp.constant(Tensor({2, 3}, {0.5, -1.0, 2.0, 1.5, 0.25, -0.75}));
  Var bias = tp.constant(Tensor({2}, {0.1, -0.2}));
  Var x1 = tp.constant(Tensor({3}, {1.0, 2.0, 3.0}));
  Tensor y1 = tp.value(tp.affine(x1, w, bias));
  CHECK(y1[0] == doctest::Approx(0.5 - 2.0 + 6.0 + 0.1).epsilon(1e-15));
  CHECK(y1[1] == doctest::Approx(1.5 + 0.5 - 2.25 - 0.2).epsilon(1e-15));
  Var xb = tp.constant(Tensor({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.5, 2.0}));
  Tensor yb = tp.value(tp.affine(xb, w, bias));
  CHECK(yb[0] == y1[0]);
  CHECK(yb[1] == y1[1]);
}

TEST_CASE("per-primitive gradient checks") {
  for (GK k : {GK::add, GK::sub, GK::mul, GK::scale, GK::matmul, GK::affine, GK::relu,
               GK::tanh_, GK::log_, GK::sqrt_, GK::softmax, GK::sum, GK::mean, GK::sqnorm,
               GK::maxc, GK::gather, GK::concat, GK::l2norm}) {
    Program pr = single_op_program(k);
    GradCheckResult res = gradcheck(pr);
    INFO("primitive ", static_cast<int>(k), " max_rel ", res.max_rel, " max_abs_small ",
         res.max_abs_small);
    CHECK(res.ok);
    CHECK(res.checked > 0);
  }
}

TEST_CASE("100 random graphs pass gradient check under 30s") {
  auto start = std::chrono::steady_clock::now();
  int total_checked = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Program pr = gen_program(1000 + seed);
    GradCheckResult res = gradcheck(pr);
    INFO("graph seed ", seed, " nodes ", pr.instrs.size(), " max_rel ", res.max_rel,
         " max_abs_small ", res.max_abs_small);
    CHECK(res.ok);
    total_checked += res.checked;
  }
  double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  INFO("checked ", total_checked, " partials in ", secs, "s");
  CHECK(total_checked > 100);
  CHECK(secs < 30.0);
}

TEST_CASE("full attack objective on 4x4x1 instances passes gradient check") {
  for (uint64_t seed : {21ull, 22ull, 23ull, 24ull}) {
    Program pr = toy_objective_program(seed);
    GradCheckResult res = gradcheck(pr);
    INFO("objective seed ", seed, " max_rel ", res.max_rel, " max_abs_small ",
         res.max_abs_small);
    CHECK(res.ok);
    CHECK(res.checked == 16);
  }
}

TEST_CASE("identical op sequence and inputs give bit-identical outputs and gradients") {
  Program pr = gen_program(777);
  Tape t1, t2;
  std::vector<Var> l1, l2;
  Var r1 = run_program(t1, pr, pr.base_leaves, &l1);
  Var r2 = run_program(t2, pr, pr.base_leaves, &l2);
  CHECK(t1.value(r1).equals(t2.value(r2)));
  t1.backward(r1);
  t2.backward(r2);
  for (size_t i = 0; i < l1.size(); ++i) CHECK(t1.grad(l1[i]).equals(t2.grad(l2[i])));
}

TEST_CASE("gradients flow only where leaves are reachable") {
  // y = relu(x) * c + const-only branch; the const branch contributes nothing.
  Tape tp;
  Var x = tp.leaf(Tensor({3}, {0.5, -1.0, 2.0}));
  Var c = tp.constant(Tensor({3}, {2.0, 3.0, 4.0}));
  Var dead = tp.sqnorm(tp.mul(c, c));
  (void)dead;
  Var y = tp.sum(tp.mul(tp.relu(x), c));
  tp.backward(y);
  Tensor g = tp.grad(x);
  CHECK(g[0] == 2.0);
  CHECK(g[1] == 0.0);  // relu kink side: subgradient 0
  CHECK(g[2] == 4.0);

  // A leaf disconnected from the root gets a zero gradient.
  Tape tq;
  Var a = tq.leaf(Tensor({2}, {1.0, 1.0}));
  Var b = tq.leaf(Tensor({2}, {2.0, 5.0}));
  (void)b;
  tq.backward(tq.sum(a));
  Tensor gb = tq.grad(b);
  CHECK(gb[0] == 0.0);
  CHECK(gb[1] == 0.0);
}
