#include "attrcloak/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include "attrcloak/adam.hpp"
#include "attrcloak/errors.hpp"
#include "attrcloak/ten_io.hpp"

namespace attrcloak {
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int argmax_of(const Tensor& t) {
  const double* p = t.data();
  int best = 0;
  for (int64_t i = 1; i < t.size(); ++i) {
    if (p[i] > p[best]) best = static_cast<int>(i);
  }
  return best;
}

double sq_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  const double* x = a.data();
  const double* y = b.data();
  for (int64_t i = 0; i < a.size(); ++i) {
    double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double psnr_of(double distortion, int64_t n) {
  if (distortion <= 0.0) return kInf;
  return 10.0 * std::log10(static_cast<double>(n) / distortion);
}

// Emit candidate: clamp strictly inside the box, then snap to the f32 grid
// the .ten files store, so every judged value survives a save/load round trip.
Tensor emit_candidate(const Tensor& t, double eps_box) {
  Tensor out = t;
  double* p = out.mut();
  double lo = eps_box, hi = 1.0 - eps_box;
  for (int64_t i = 0; i < out.size(); ++i) {
    double v = p[i] > lo ? p[i] : lo;
    p[i] = quantize_f32(v < hi ? v : hi);
  }
  return out;
}

// Probabilities and logits for every head in one forward pass.
struct HeadScores {
  std::vector<Tensor> probs;
  std::vector<Tensor> logits;
};

HeadScores forward_scores(const AttributeNet& net, const Tensor& flat) {
  Tape tape;
  std::vector<Var> logit_vars;
  std::vector<Var> prob_vars = net.forward(tape, tape.constant(flat), &logit_vars);
  HeadScores out;
  for (size_t i = 0; i < prob_vars.size(); ++i) {
    out.probs.push_back(tape.value(prob_vars[i]));
    out.logits.push_back(tape.value(logit_vars[i]));
  }
  return out;
}

int resolve_target(const Tensor& probs, int true_class, const SuppressTarget& target) {
  if (!target.any_other) return target.target_class;
  const double* p = probs.data();
  int best = -1;
  for (int64_t k = 0; k < probs.size(); ++k) {
    if (static_cast<int>(k) == true_class) continue;
    if (best < 0 || p[k] > p[best]) best = static_cast<int>(k);
  }
  return best;
}

// margin = best rival score - target score; the loss floor is -c.
double margin_against(const Tensor& scores, int target) {
  const double* p = scores.data();
  double best = -kInf;
  for (int64_t k = 0; k < scores.size(); ++k) {
    if (static_cast<int>(k) == target) continue;
    best = std::max(best, p[k]);
  }
  return best - p[target];
}

Var margin_loss_node(Tape& tape, Var scores, int64_t classes, int target, double c) {
  Var rival;
  bool first = true;
  for (int64_t k = 0; k < classes; ++k) {
    if (static_cast<int>(k) == target) continue;
    Var sk = tape.gather(scores, {k});
    if (first) {
      rival = sk;
      first = false;
    } else {
      rival = tape.add(rival, tape.relu(tape.sub(sk, rival)));
    }
  }
  Var st = tape.gather(scores, {target});
  return tape.maxc(tape.sub(rival, st), -c);
}

std::vector<int> constrained_attrs(const AttackSpec& spec) {
  std::vector<int> out;
  for (const auto& [u, t] : spec.suppress) {
    (void)t;
    out.push_back(u);
  }
  for (int u : spec.preserve) out.push_back(u);
  return out;
}

// Target class each constrained attribute must hold at feasibility time.
// AnyOther suppression has no fixed target; it only needs argmax != true.
struct Constraint {
  int attr;
  bool is_suppress;
  bool any_other;
  int target;  // fixed target class, or the true class for preservation
};

std::vector<Constraint> constraint_list(const AttackSpec& spec, const std::vector<int>& labels) {
  std::vector<Constraint> out;
  for (const auto& [u, t] : spec.suppress) {
    out.push_back({u, true, t.any_other, t.any_other ? -1 : t.target_class});
  }
  for (int u : spec.preserve) {
    out.push_back({u, false, false, labels[static_cast<size_t>(u)]});
  }
  return out;
}

// Full objective for the current w; also reports the per-iteration suppress
// targets it chased (j* for AnyOther).
Var objective_graph(Tape& tape, const Tensor& flat_image, Var wv, const AttackSpec& spec,
                    const AttributeNet& net, const EmbeddingNet* whitebox,
                    const Tensor* emb_original, const std::vector<int>& labels) {
  Var tv = reparameterize_graph(tape, flat_image, wv);
  std::vector<Var> logit_vars;
  std::vector<Var> prob_vars =
      AttributeNet::forward_graph(tape, tv, [&] {
        std::vector<Var> pv;
        for (const auto& [name, t] : net.named_params()) {
          (void)name;
          pv.push_back(tape.constant(*t));
        }
        return pv;
      }(), net.schema, &logit_vars);

  bool use_logits = spec.score_space == ScoreSpace::logit;
  Var loss;
  bool first = true;
  auto add_term = [&](Var term) {
    loss = first ? term : tape.add(loss, term);
    first = false;
  };
  for (const auto& [u, target] : spec.suppress) {
    int64_t classes = net.schema.attrs[static_cast<size_t>(u)].classes;
    int j = resolve_target(tape.value(prob_vars[static_cast<size_t>(u)]),
                           labels[static_cast<size_t>(u)], target);
    Var scores = use_logits ? logit_vars[static_cast<size_t>(u)] : prob_vars[static_cast<size_t>(u)];
    add_term(margin_loss_node(tape, scores, classes, j, spec.confidence));
  }
  for (int u : spec.preserve) {
    int64_t classes = net.schema.attrs[static_cast<size_t>(u)].classes;
    Var scores = use_logits ? logit_vars[static_cast<size_t>(u)] : prob_vars[static_cast<size_t>(u)];
    add_term(margin_loss_node(tape, scores, classes, labels[static_cast<size_t>(u)],
                              spec.confidence));
  }
  Var iv = tape.constant(flat_image);
  Var dist = tape.sqnorm(tape.sub(iv, tv));
  add_term(tape.scale(dist, spec.lambda_dist));
  if (spec.identity) {
    Var et = [&] {
      std::vector<Var> pv;
      for (const auto& [name, t] : whitebox->named_params()) {
        (void)name;
        pv.push_back(tape.constant(*t));
      }
      return EmbeddingNet::embed_graph(tape, tv, pv);
    }();
    Var diff = tape.sub(et, tape.constant(*emb_original));
    Var d = tape.sqrt(tape.sqnorm(diff));
    add_term(tape.scale(d, spec.identity->weight));
  }
  return loss;
}

struct CheckOutcome {
  ConstraintVerdicts verdicts;
  bool margins_met = true;  // constrained margins >= c in the loss score space
};

CheckOutcome check_candidate(const AttributeNet& net, const EmbeddingNet* whitebox,
                             const Tensor* emb_original, const Tensor& flat_candidate,
                             const AttackSpec& spec, const std::vector<int>& labels) {
  CheckOutcome out;
  HeadScores scores = forward_scores(net, flat_candidate);
  bool use_logits = spec.score_space == ScoreSpace::logit;
  bool all = true;
  for (const Constraint& c : constraint_list(spec, labels)) {
    const Tensor& probs = scores.probs[static_cast<size_t>(c.attr)];
    int am = argmax_of(probs);
    bool ok;
    if (c.is_suppress) {
      ok = c.any_other ? am != labels[static_cast<size_t>(c.attr)] : am == c.target;
      out.verdicts.suppressed.emplace_back(c.attr, ok);
    } else {
      ok = am == c.target;
      out.verdicts.preserved.emplace_back(c.attr, ok);
    }
    all = all && ok;
    int margin_target = c.any_other ? am : c.target;
    const Tensor& sc = use_logits ? scores.logits[static_cast<size_t>(c.attr)] : probs;
    if (!ok || -margin_against(sc, margin_target) < spec.confidence) out.margins_met = false;
  }
  if (spec.identity) {
    Tensor et = whitebox->embed_value(flat_candidate);
    bool ok = identity_distance(*emb_original, et) <= spec.identity->tau;
    out.verdicts.identity_ok = ok;
    all = all && ok;
  }
  out.verdicts.feasible = all;
  if (!all) out.margins_met = false;
  return out;
}

std::string join_names(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) out += ", ";
    out += names[i];
  }
  return out;
}

ojson result_to_json(int id, const AttackResult& r) {
  ojson s;
  s["id"] = id;
  s["success"] = r.success;
  s["distortion"] = r.distortion;
  if (std::isinf(r.psnr)) {
    s["psnr"] = nullptr;
  } else {
    s["psnr"] = r.psnr;
  }
  if (r.iterations_to_first_feasible < 0) {
    s["iterations_to_first_feasible"] = nullptr;
  } else {
    s["iterations_to_first_feasible"] = r.iterations_to_first_feasible;
  }
  ojson attrs = ojson::array();
  for (const AttrRecord& a : r.attributes) {
    attrs.push_back({{"name", a.name},
                     {"true_class", a.true_class},
                     {"pre_argmax", a.pre_argmax},
                     {"pre_score", a.pre_score},
                     {"post_argmax", a.post_argmax},
                     {"post_score", a.post_score}});
  }
  s["attributes"] = attrs;
  if (r.identity) {
    ojson id_j;
    if (r.identity->has_whitebox) {
      id_j["whitebox_pre"] = r.identity->whitebox_pre;
      id_j["whitebox_post"] = r.identity->whitebox_post;
    }
    if (r.identity->has_heldout) {
      id_j["heldout_pre"] = r.identity->heldout_pre;
      id_j["heldout_post"] = r.identity->heldout_post;
    }
    s["identity"] = id_j;
  } else {
    s["identity"] = nullptr;
  }
  s["files"] = {{"anonymized", "anonymized/" + std::to_string(id) + ".ten"},
                {"perturbation", "perturbation/" + std::to_string(id) + ".ten"}};
  return s;
}

AttackResult result_from_json(const ojson& s, const std::string& dir) {
  AttackResult r;
  r.success = s.at("success").get<bool>();
  r.distortion = s.at("distortion").get<double>();
  r.psnr = s.at("psnr").is_null() ? kInf : s.at("psnr").get<double>();
  r.iterations_to_first_feasible = s.at("iterations_to_first_feasible").is_null()
                                       ? -1
                                       : s.at("iterations_to_first_feasible").get<int>();
  for (const ojson& a : s.at("attributes")) {
    AttrRecord rec;
    rec.name = a.at("name").get<std::string>();
    rec.true_class = a.at("true_class").get<int>();
    rec.pre_argmax = a.at("pre_argmax").get<int>();
    rec.pre_score = a.at("pre_score").get<double>();
    rec.post_argmax = a.at("post_argmax").get<int>();
    rec.post_score = a.at("post_score").get<double>();
    r.attributes.push_back(rec);
  }
  if (!s.at("identity").is_null()) {
    const ojson& id_j = s.at("identity");
    IdentityReport rep;
    if (id_j.contains("whitebox_pre")) {
      rep.has_whitebox = true;
      rep.whitebox_pre = id_j.at("whitebox_pre").get<double>();
      rep.whitebox_post = id_j.at("whitebox_post").get<double>();
    }
    if (id_j.contains("heldout_pre")) {
      rep.has_heldout = true;
      rep.heldout_pre = id_j.at("heldout_pre").get<double>();
      rep.heldout_post = id_j.at("heldout_post").get<double>();
    }
    r.identity = rep;
  }
  r.anonymized = read_ten((fs::path(dir) / s.at("files").at("anonymized").get<std::string>()).string());
  r.perturbation =
      read_ten((fs::path(dir) / s.at("files").at("perturbation").get<std::string>()).string());
  return r;
}

}  // namespace

void AttackSpec::validate(const AttributeSchema& schema) const {
  schema.validate();
  int k = schema.k();
  auto check_attr = [&](int u) {
    if (u < 0 || u >= k) {
      throw ConfigError("attribute index " + std::to_string(u) + " out of range [0, " +
                        std::to_string(k) + ")");
    }
  };
  for (const auto& [u, target] : suppress) {
    check_attr(u);
    if (!target.any_other) {
      int classes = schema.attrs[static_cast<size_t>(u)].classes;
      if (target.target_class < 0 || target.target_class >= classes) {
        throw ConfigError("suppression target class " + std::to_string(target.target_class) +
                          " out of range for attribute '" + schema.attrs[static_cast<size_t>(u)].name +
                          "' (" + std::to_string(classes) + " classes)");
      }
    }
    if (preserve.count(u)) {
      throw ConfigError("attribute '" + schema.attrs[static_cast<size_t>(u)].name +
                        "' appears in both suppress and preserve");
    }
  }
  for (int u : preserve) check_attr(u);
  if (confidence < 0.0 || confidence > 1.0) {
    throw ConfigError("confidence must be in [0, 1], got " + std::to_string(confidence));
  }
  if (lambda_dist < 0.0) throw ConfigError("distortion weight must be nonnegative");
  if (identity) {
    if (identity->weight < 0.0) throw ConfigError("identity weight must be nonnegative");
    if (identity->tau < 0.0) throw ConfigError("identity threshold must be nonnegative");
  }
  if (iterations < 1) throw ConfigError("iterations must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(eps_box > 0.0) || eps_box > 0.25) {
    throw ConfigError("clamp epsilon must be in (0, 0.25]");
  }
}

ojson attack_spec_to_json(const AttackSpec& spec) {
  ojson j;
  ojson sup = ojson::array();
  for (const auto& [u, target] : spec.suppress) {
    ojson e;
    e["attribute"] = u;
    if (target.any_other) {
      e["mode"] = "any_other";
    } else {
      e["mode"] = "specific";
      e["target"] = target.target_class;
    }
    sup.push_back(e);
  }
  j["suppress"] = sup;
  j["preserve"] = ojson(spec.preserve);
  j["confidence"] = spec.confidence;
  j["lambda_dist"] = spec.lambda_dist;
  if (spec.identity) {
    j["identity"] = {{"weight", spec.identity->weight}, {"tau", spec.identity->tau}};
  } else {
    j["identity"] = nullptr;
  }
  j["iterations"] = spec.iterations;
  j["lr"] = spec.lr;
  j["score_space"] = spec.score_space == ScoreSpace::logit ? "logit" : "probability";
  j["eps_box"] = spec.eps_box;
  j["seed"] = spec.seed;
  return j;
}

AttackSpec attack_spec_from_json(const ojson& j) {
  AttackSpec spec;
  for (const ojson& e : j.value("suppress", ojson::array())) {
    int u = e.at("attribute").get<int>();
    std::string mode = e.value("mode", "any_other");
    if (mode == "any_other") {
      spec.suppress[u] = SuppressTarget::AnyOther();
    } else if (mode == "specific") {
      spec.suppress[u] = SuppressTarget::Specific(e.at("target").get<int>());
    } else {
      throw ConfigError("unknown suppression mode '" + mode + "'");
    }
  }
  for (const ojson& e : j.value("preserve", ojson::array())) {
    spec.preserve.insert(e.get<int>());
  }
  spec.confidence = j.value("confidence", 0.0);
  spec.lambda_dist = j.value("lambda_dist", 1.0);
  if (j.contains("identity") && !j["identity"].is_null()) {
    IdentitySpec id;
    id.weight = j["identity"].value("weight", 1.0);
    id.tau = j["identity"].at("tau").get<double>();
    spec.identity = id;
  }
  spec.iterations = j.value("iterations", 10000);
  spec.lr = j.value("lr", 0.01);
  std::string space = j.value("score_space", "probability");
  if (space == "probability") {
    spec.score_space = ScoreSpace::probability;
  } else if (space == "logit") {
    spec.score_space = ScoreSpace::logit;
  } else {
    throw ConfigError("unknown score space '" + space + "'");
  }
  spec.eps_box = j.value("eps_box", 1e-6);
  spec.seed = j.value("seed", 0ull);
  return spec;
}

Tensor init_perturbation(const Tensor& image, double eps_box) {
  Tensor w = image;
  double* p = w.mut();
  double lo = eps_box, hi = 1.0 - eps_box;
  const double* img = image.data();
  for (int64_t i = 0; i < w.size(); ++i) {
    double v = img[i] > lo ? img[i] : lo;
    v = v < hi ? v : hi;
    p[i] = std::atanh(2.0 * v - 1.0) - img[i];
  }
  return w;
}

Tensor reparameterize(const Tensor& image, const Tensor& w) {
  if (image.size() != w.size()) {
    throw ShapeError("reparameterize: image has " + std::to_string(image.size()) +
                     " values, w has " + std::to_string(w.size()));
  }
  Tensor t = w;
  double* p = t.mut();
  const double* img = image.data();
  for (int64_t i = 0; i < t.size(); ++i) {
    p[i] = 0.5 * (std::tanh(img[i] + p[i]) + 1.0);
  }
  return t;
}

Var reparameterize_graph(Tape& tape, const Tensor& image, Var w) {
  const Tensor& wv = tape.value(w);
  if (image.size() != wv.size()) {
    throw ShapeError("reparameterize: image has " + std::to_string(image.size()) +
                     " values, w has " + std::to_string(wv.size()));
  }
  Var iv = tape.constant(image.reshaped(wv.dims()));
  Var ones = tape.constant(Tensor::full(wv.dims(), 1.0));
  return tape.scale(tape.add(tape.tanh(tape.add(iv, w)), ones), 0.5);
}

double attribute_objective(const std::vector<double>& scores, int true_class, ObjectiveMode mode,
                           int specific_class, double c) {
  int classes = static_cast<int>(scores.size());
  if (classes < 2) throw ConfigError("attribute objective needs at least 2 classes");
  if (true_class < 0 || true_class >= classes) {
    throw ConfigError("true class " + std::to_string(true_class) + " out of range [0, " +
                      std::to_string(classes) + ")");
  }
  int target = -1;
  switch (mode) {
    case ObjectiveMode::preserve:
      target = true_class;
      break;
    case ObjectiveMode::suppress_specific:
      if (specific_class < 0 || specific_class >= classes) {
        throw ConfigError("target class " + std::to_string(specific_class) +
                          " out of range [0, " + std::to_string(classes) + ")");
      }
      target = specific_class;
      break;
    case ObjectiveMode::suppress_any_other: {
      target = -1;
      for (int k = 0; k < classes; ++k) {
        if (k == true_class) continue;
        if (target < 0 || scores[static_cast<size_t>(k)] > scores[static_cast<size_t>(target)]) {
          target = k;
        }
      }
      break;
    }
  }
  double rival = -kInf;
  for (int k = 0; k < classes; ++k) {
    if (k == target) continue;
    rival = std::max(rival, scores[static_cast<size_t>(k)]);
  }
  return std::max(rival - scores[static_cast<size_t>(target)], -c);
}

double total_objective(const Tensor& image, const Tensor& w, const AttackSpec& spec,
                       const AttributeNet& net, const EmbeddingNet* whitebox,
                       const std::vector<int>& labels, Tensor* grad_out) {
  spec.validate(net.schema);
  if (spec.identity && !whitebox) {
    throw ConfigError("the identity term requires the white-box embedder");
  }
  int64_t n = net.input_size();
  Tensor flat = image.reshaped({n});
  Tensor emb_i;
  if (spec.identity) emb_i = whitebox->embed_value(flat);
  Tape tape;
  Var wv = tape.leaf(w.reshaped({n}));
  Var loss = objective_graph(tape, flat, wv, spec, net, whitebox,
                             spec.identity ? &emb_i : nullptr, labels);
  if (grad_out) {
    tape.backward(loss);
    *grad_out = tape.grad(wv).reshaped(w.dims());
  }
  return tape.value(loss).data()[0];
}

ConstraintVerdicts check_constraints(const AttributeNet& net, const EmbeddingNet* whitebox,
                                     const Tensor& image, const Tensor& anonymized,
                                     const AttackSpec& spec, const std::vector<int>& labels) {
  spec.validate(net.schema);
  if (labels.size() != net.schema.attrs.size()) {
    throw ShapeError("expected " + std::to_string(net.schema.attrs.size()) + " labels, got " +
                     std::to_string(labels.size()));
  }
  if (spec.identity && !whitebox) {
    throw ConfigError("the identity term requires the white-box embedder");
  }
  int64_t n = net.input_size();
  Tensor emb_i;
  if (spec.identity) emb_i = whitebox->embed_value(image.reshaped({n}));
  return check_candidate(net, whitebox, spec.identity ? &emb_i : nullptr,
                         anonymized.reshaped({n}), spec, labels)
      .verdicts;
}

AttackResult run_attack(const AttributeNet& net, const EmbeddingNet* whitebox,
                        const EmbeddingNet* heldout, const LabeledSample& sample,
                        const AttackSpec& spec) {
  spec.validate(net.schema);
  size_t heads = net.schema.attrs.size();
  if (sample.labels.size() != heads) {
    throw ShapeError("sample has " + std::to_string(sample.labels.size()) + " labels, schema has " +
                     std::to_string(heads));
  }
  if (spec.identity && !whitebox) {
    throw ConfigError("the identity term requires the white-box embedder");
  }
  for (const auto& [u, target] : spec.suppress) {
    if (!target.any_other && target.target_class == sample.labels[static_cast<size_t>(u)]) {
      throw ConfigError("suppression target for attribute '" +
                        net.schema.attrs[static_cast<size_t>(u)].name +
                        "' equals the sample's true class " +
                        std::to_string(target.target_class));
    }
  }

  int64_t n = net.input_size();
  Tensor flat = sample.image.reshaped({n});
  HeadScores pre = forward_scores(net, flat);
  std::vector<std::string> bad;
  for (int u : constrained_attrs(spec)) {
    if (argmax_of(pre.probs[static_cast<size_t>(u)]) != sample.labels[static_cast<size_t>(u)]) {
      bad.push_back(net.schema.attrs[static_cast<size_t>(u)].name);
    }
  }
  if (!bad.empty()) {
    throw Error("attack precondition failed: sample " + std::to_string(sample.id) +
                " is misclassified on: " + join_names(bad));
  }

  Tensor emb_i, emb_i_ho;
  if (whitebox) emb_i = whitebox->embed_value(flat);
  if (heldout) emb_i_ho = heldout->embed_value(flat);
  const Tensor* emb_ptr = spec.identity ? &emb_i : nullptr;

  Tensor w = init_perturbation(flat, spec.eps_box);
  AdamConfig acfg;
  acfg.lr = spec.lr;
  Adam opt(w.dims(), acfg);

  bool have_best = false;
  double best_dist = kInf;
  Tensor best_t, best_w;
  int first_feasible = -1;
  std::vector<std::pair<int, double>> trace;

  for (int it = 1; it <= spec.iterations; ++it) {
    Tape tape;
    Var wv = tape.leaf(w);
    Var loss = objective_graph(tape, flat, wv, spec, net, whitebox, emb_ptr, sample.labels);
    tape.backward(loss);
    opt.step(w, tape.grad(wv));

    Tensor cand = emit_candidate(reparameterize(flat, w), spec.eps_box);
    double d = sq_distance(flat, cand);
    bool worth_checking = first_feasible < 0 || !have_best || d < best_dist;
    if (!worth_checking) continue;
    CheckOutcome oc = check_candidate(net, whitebox, emb_ptr, cand, spec, sample.labels);
    if (oc.verdicts.feasible && first_feasible < 0) first_feasible = it;
    if (oc.verdicts.feasible && oc.margins_met && (!have_best || d < best_dist)) {
      have_best = true;
      best_dist = d;
      best_t = cand;
      best_w = w;
      trace.emplace_back(it, d);
    }
  }

  AttackResult r;
  r.success = have_best;
  if (have_best) {
    r.anonymized = best_t.reshaped(sample.image.dims());
    r.perturbation = best_w.reshaped(sample.image.dims());
    r.distortion = best_dist;
  } else {
    Tensor cand = emit_candidate(reparameterize(flat, w), spec.eps_box);
    r.anonymized = cand.reshaped(sample.image.dims());
    r.perturbation = w.reshaped(sample.image.dims());
    r.distortion = sq_distance(flat, cand);
  }
  r.psnr = psnr_of(r.distortion, n);
  r.iterations_to_first_feasible = first_feasible;
  r.feasible_trace = std::move(trace);

  Tensor emitted_flat = r.anonymized.reshaped({n});
  HeadScores post = forward_scores(net, emitted_flat);
  for (size_t a = 0; a < heads; ++a) {
    AttrRecord rec;
    rec.name = net.schema.attrs[a].name;
    rec.true_class = sample.labels[a];
    rec.pre_argmax = argmax_of(pre.probs[a]);
    rec.pre_score = pre.probs[a].data()[rec.pre_argmax];
    rec.post_argmax = argmax_of(post.probs[a]);
    rec.post_score = post.probs[a].data()[rec.post_argmax];
    r.attributes.push_back(rec);
  }

  if (whitebox || heldout) {
    IdentityReport rep;
    Tensor init_q = emit_candidate(flat, spec.eps_box);
    if (whitebox) {
      rep.has_whitebox = true;
      rep.whitebox_pre = identity_distance(emb_i, whitebox->embed_value(init_q));
      rep.whitebox_post = identity_distance(emb_i, whitebox->embed_value(emitted_flat));
    }
    if (heldout) {
      rep.has_heldout = true;
      rep.heldout_pre = identity_distance(emb_i_ho, heldout->embed_value(init_q));
      rep.heldout_post = identity_distance(emb_i_ho, heldout->embed_value(emitted_flat));
    }
    r.identity = rep;
  }
  return r;
}

BatchResult batch_attack(const Dataset& ds, Split split, const AttackSpec& spec,
                         const AttributeNet& net, const EmbeddingNet* whitebox,
                         const EmbeddingNet* heldout, int jobs) {
  spec.validate(net.schema);
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  const std::vector<int>& ids = ds.ids(split);
  if (ids.empty()) {
    throw Error("split '" + std::string(split_name(split)) + "' is empty");
  }

  std::vector<int> eligible;
  for (int id : ids) {
    const LabeledSample& s = ds.by_id(id);
    HeadScores pre = forward_scores(net, s.image.reshaped({net.input_size()}));
    bool ok = true;
    for (int u : constrained_attrs(spec)) {
      if (argmax_of(pre.probs[static_cast<size_t>(u)]) != s.labels[static_cast<size_t>(u)]) {
        ok = false;
        break;
      }
    }
    for (const auto& [u, target] : spec.suppress) {
      if (!target.any_other && target.target_class == s.labels[static_cast<size_t>(u)]) {
        ok = false;
        break;
      }
    }
    if (ok) eligible.push_back(id);
  }
  if (eligible.empty()) {
    throw Error("no eligible samples in split '" + std::string(split_name(split)) +
                "': every sample is misclassified on a constrained attribute");
  }

  BatchResult out;
  out.per_sample.resize(eligible.size());
  int workers = std::min<int>(jobs, static_cast<int>(eligible.size()));
  if (workers <= 1) {
    for (size_t i = 0; i < eligible.size(); ++i) {
      out.per_sample[i] = {eligible[i],
                           run_attack(net, whitebox, heldout, ds.by_id(eligible[i]), spec)};
    }
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (size_t i = next.fetch_add(1); i < eligible.size(); i = next.fetch_add(1)) {
            out.per_sample[i] = {eligible[i],
                                 run_attack(net, whitebox, heldout, ds.by_id(eligible[i]), spec)};
          }
        } catch (...) {
          errors[static_cast<size_t>(t)] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  BatchSummary& s = out.summary;
  s.requested = static_cast<int>(ids.size());
  s.eligible = static_cast<int>(eligible.size());
  s.filtered_out = s.requested - s.eligible;
  double dist_sum = 0.0, psnr_sum = 0.0, iter_sum = 0.0;
  int feas = 0;
  for (const auto& [id, r] : out.per_sample) {
    (void)id;
    if (r.success) {
      ++s.successes;
      dist_sum += r.distortion;
      psnr_sum += r.psnr;
    }
    if (r.iterations_to_first_feasible >= 0) {
      ++feas;
      iter_sum += r.iterations_to_first_feasible;
    }
  }
  s.success_rate = static_cast<double>(s.successes) / static_cast<double>(s.eligible);
  s.mean_distortion = s.successes ? dist_sum / s.successes : 0.0;
  s.mean_psnr = s.successes ? psnr_sum / s.successes : 0.0;
  s.mean_iterations_to_first_feasible = feas ? iter_sum / feas : 0.0;
  return out;
}

void save_batch_results(const BatchResult& out, const AttackSpec& spec, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "anonymized");
  fs::create_directories(fs::path(dir) / "perturbation");
  ojson j;
  j["format_version"] = 1;
  j["spec"] = attack_spec_to_json(spec);
  const BatchSummary& s = out.summary;
  j["summary"] = {{"requested", s.requested},
                  {"eligible", s.eligible},
                  {"filtered_out", s.filtered_out},
                  {"successes", s.successes},
                  {"success_rate", s.success_rate},
                  {"mean_distortion", s.mean_distortion},
                  {"mean_psnr", std::isinf(s.mean_psnr) ? ojson(nullptr) : ojson(s.mean_psnr)},
                  {"mean_iterations_to_first_feasible", s.mean_iterations_to_first_feasible}};
  ojson samples = ojson::array();
  for (const auto& [id, r] : out.per_sample) {
    samples.push_back(result_to_json(id, r));
    write_ten((fs::path(dir) / "anonymized" / (std::to_string(id) + ".ten")).string(),
              r.anonymized);
    write_ten((fs::path(dir) / "perturbation" / (std::to_string(id) + ".ten")).string(),
              r.perturbation);
  }
  j["samples"] = samples;
  std::ofstream f(fs::path(dir) / "results.json", std::ios::binary);
  if (!f) throw IoError("cannot write " + (fs::path(dir) / "results.json").string());
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + (fs::path(dir) / "results.json").string());
}

std::pair<BatchResult, AttackSpec> load_batch_results(const std::string& dir) {
  fs::path path = fs::path(dir) / "results.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open attack results: " + path.string());
  ojson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("invalid results json in " + path.string() + ": " + e.what());
  }
  if (!j.contains("format_version") || j["format_version"] != 1) {
    throw Error("unsupported results format version");
  }
  AttackSpec spec = attack_spec_from_json(j.at("spec"));
  BatchResult out;
  const ojson& s = j.at("summary");
  out.summary.requested = s.at("requested").get<int>();
  out.summary.eligible = s.at("eligible").get<int>();
  out.summary.filtered_out = s.at("filtered_out").get<int>();
  out.summary.successes = s.at("successes").get<int>();
  out.summary.success_rate = s.at("success_rate").get<double>();
  out.summary.mean_distortion = s.at("mean_distortion").get<double>();
  out.summary.mean_psnr = s.at("mean_psnr").is_null() ? kInf : s.at("mean_psnr").get<double>();
  out.summary.mean_iterations_to_first_feasible =
      s.at("mean_iterations_to_first_feasible").get<double>();
  for (const ojson& e : j.at("samples")) {
    out.per_sample.emplace_back(e.at("id").get<int>(), result_from_json(e, dir));
  }
  return {std::move(out), spec};
}

}  // namespace attrcloak
