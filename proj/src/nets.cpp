#include "attrcloak/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "attrcloak/adam.hpp"
#include "attrcloak/errors.hpp"
#include "attrcloak/json_util.hpp"
#include "attrcloak/rng.hpp"
#include "attrcloak/ten_io.hpp"

namespace attrcloak {
namespace fs = std::filesystem;

namespace {

// RNG stream tags used by this module (synth owns 1..4).
constexpr uint64_t kStreamInit = 10;     // (param index, net salt)
constexpr uint64_t kStreamShuffle = 20;  // (epoch)

Tensor xavier(const std::vector<int64_t>& dims, int64_t fan_in, int64_t fan_out,
              const CounterRng& rng, uint64_t stream) {
  Tensor t(dims);
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  double* p = t.mut();
  for (int64_t i = 0; i < t.size(); ++i) {
    p[i] = rng.uniform(stream, static_cast<uint64_t>(i), -limit, limit);
  }
  return t;
}

// params[0..3] = trunk; heads follow in pairs.
Var trunk_graph(Tape& tape, Var x, const std::vector<Var>& params) {
  Var h1 = tape.relu(tape.affine(x, params[0], params[1]));
  return tape.relu(tape.affine(h1, params[2], params[3]));
}

Tensor flat_image(const Tensor& image, int64_t n, const char* who) {
  if (image.size() != n) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(image.size()) +
                     " values, expected " + std::to_string(n));
  }
  return image.reshaped({n});
}

Tensor batch_rows(const std::vector<const Tensor*>& rows, int64_t n) {
  Tensor x({static_cast<int64_t>(rows.size()), n});
  double* p = x.mut();
  for (size_t r = 0; r < rows.size(); ++r) {
    std::memcpy(p + static_cast<int64_t>(r) * n, rows[r]->data(), sizeof(double) * n);
  }
  return x;
}

std::vector<int> shuffled_order(int n, const CounterRng& rng, uint64_t stream) {
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  for (int i = n - 1; i > 0; --i) {
    auto j = rng.uniform_int(stream, static_cast<uint64_t>(i), static_cast<uint64_t>(i) + 1);
    std::swap(order[i], order[static_cast<size_t>(j)]);
  }
  return order;
}

int argmax_of(const Tensor& t) {
  const double* p = t.data();
  int best = 0;
  for (int64_t i = 1; i < t.size(); ++i) {
    if (p[i] > p[best]) best = static_cast<int>(i);
  }
  return best;
}

void write_model_json(const ojson& j, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "weights");
  std::ofstream out(fs::path(dir) / "model.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (fs::path(dir) / "model.json").string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + (fs::path(dir) / "model.json").string());
}

ojson read_model_json(const std::string& dir) {
  fs::path path = fs::path(dir) / "model.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  ojson j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("invalid checkpoint json in " + path.string() + ": " + e.what());
  }
  return j;
}

void save_params(const std::vector<std::pair<std::string, const Tensor*>>& params,
                 const std::string& dir) {
  for (const auto& [name, t] : params) {
    write_ten((fs::path(dir) / "weights" / (name + ".ten")).string(), *t);
  }
}

void load_params(const std::vector<std::pair<std::string, Tensor*>>& params,
                 const std::string& dir) {
  for (const auto& [name, t] : params) {
    fs::path path = fs::path(dir) / "weights" / (name + ".ten");
    if (!fs::exists(path)) {
      throw IoError("checkpoint is missing the weight file for parameter '" + name +
                    "': " + path.string());
    }
    Tensor loaded = read_ten(path.string());
    if (loaded.dims() != t->dims()) {
      throw Error("checkpoint architecture mismatch for parameter '" + name + "': expected " +
                  t->shape_str() + ", found " + loaded.shape_str());
    }
    *t = loaded;
  }
}

void require_format(const ojson& j, const char* want_type) {
  if (!j.contains("format_version") || j["format_version"] != 1) {
    throw Error("unsupported checkpoint format version");
  }
  std::string type = j.value("type", "");
  if (type != want_type) {
    throw Error("checkpoint type mismatch: expected '" + std::string(want_type) + "', found '" +
                type + "'");
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("epochs must be positive, got " + std::to_string(epochs));
  if (batch <= 0) throw ConfigError("batch size must be positive, got " + std::to_string(batch));
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive, got " + std::to_string(lr));
}

TrainConfig default_attribute_train() { return {40, 16, 0.003, 7}; }
TrainConfig default_embedding_train() { return {80, 16, 0.003, 11}; }

AttributeNet AttributeNet::init(const AttributeSchema& schema, int64_t h, int64_t w, int64_t c,
                                uint64_t seed, int64_t t1, int64_t t2) {
  schema.validate();
  if (h <= 0 || w <= 0 || c <= 0) throw ConfigError("input dimensions must be positive");
  if (t1 <= 0 || t2 <= 0) throw ConfigError("trunk widths must be positive");
  AttributeNet net;
  net.schema = schema;
  net.in_h = h;
  net.in_w = w;
  net.in_c = c;
  net.trunk1 = t1;
  net.trunk2 = t2;
  net.init_seed = seed;
  CounterRng rng(seed);
  int64_t n = net.input_size();
  uint64_t p = 0;
  net.w1 = xavier({t1, n}, n, t1, rng, stream_id(kStreamInit, p++, 0));
  net.b1 = Tensor({t1});
  ++p;
  net.w2 = xavier({t2, t1}, t1, t2, rng, stream_id(kStreamInit, p++, 0));
  net.b2 = Tensor({t2});
  ++p;
  for (const auto& attr : schema.attrs) {
    int64_t cls = attr.classes;
    net.head_w.push_back(xavier({cls, t2}, t2, cls, rng, stream_id(kStreamInit, p++, 0)));
    net.head_b.push_back(Tensor({cls}));
    ++p;
  }
  return net;
}

std::vector<std::pair<std::string, const Tensor*>> AttributeNet::named_params() const {
  std::vector<std::pair<std::string, const Tensor*>> out = {
      {"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}};
  for (size_t i = 0; i < head_w.size(); ++i) {
    out.emplace_back("head" + std::to_string(i) + "_w", &head_w[i]);
    out.emplace_back("head" + std::to_string(i) + "_b", &head_b[i]);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> AttributeNet::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out = {
      {"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}};
  for (size_t i = 0; i < head_w.size(); ++i) {
    out.emplace_back("head" + std::to_string(i) + "_w", &head_w[i]);
    out.emplace_back("head" + std::to_string(i) + "_b", &head_b[i]);
  }
  return out;
}

std::vector<Var> AttributeNet::forward_graph(Tape& tape, Var x, const std::vector<Var>& params,
                                             const AttributeSchema& schema,
                                             std::vector<Var>* logits_out) {
  size_t want = 4 + 2 * schema.attrs.size();
  if (params.size() != want) {
    throw ShapeError("forward_graph: expected " + std::to_string(want) + " parameters, got " +
                     std::to_string(params.size()));
  }
  Var h2 = trunk_graph(tape, x, params);
  std::vector<Var> probs;
  if (logits_out) logits_out->clear();
  for (size_t i = 0; i < schema.attrs.size(); ++i) {
    Var logits = tape.affine(h2, params[4 + 2 * i], params[5 + 2 * i]);
    if (logits_out) logits_out->push_back(logits);
    probs.push_back(tape.softmax(logits));
  }
  return probs;
}

std::vector<Var> AttributeNet::forward(Tape& tape, Var x, std::vector<Var>* logits_out) const {
  std::vector<Var> pv;
  for (const auto& [name, t] : named_params()) {
    (void)name;
    pv.push_back(tape.constant(*t));
  }
  return forward_graph(tape, x, pv, schema, logits_out);
}

std::vector<Tensor> AttributeNet::predict(const Tensor& image) const {
  Tape tape;
  Var x = tape.constant(flat_image(image, input_size(), "predict"));
  std::vector<Var> probs = forward(tape, x);
  std::vector<Tensor> out;
  for (Var v : probs) out.push_back(tape.value(v));
  return out;
}

std::vector<int> AttributeNet::predict_argmax(const Tensor& image) const {
  std::vector<int> out;
  for (const Tensor& p : predict(image)) out.push_back(argmax_of(p));
  return out;
}

std::pair<AttributeNet, AttrTrainReport> train_attribute_net(const Dataset& ds,
                                                             const TrainConfig& cfg) {
  cfg.validate();
  const auto& train_ids = ds.ids(Split::train);
  const auto& test_ids = ds.ids(Split::test);
  if (train_ids.empty()) throw Error("attribute training: the train split is empty");
  if (test_ids.empty()) throw Error("attribute training: the test split is empty");

  const AttributeSchema& schema = ds.schema();
  int64_t n = ds.spec.pixels();
  AttributeNet net = AttributeNet::init(schema, ds.spec.height, ds.spec.width, ds.spec.channels,
                                        cfg.seed);
  auto params = net.named_params();
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  std::vector<Adam> opt;
  for (const auto& [name, t] : params) {
    (void)name;
    opt.emplace_back(t->dims(), acfg);
  }

  std::vector<Tensor> flats;
  flats.reserve(train_ids.size());
  for (int id : train_ids) flats.push_back(ds.by_id(id).image.reshaped({n}));

  CounterRng rng(cfg.seed);
  int total = static_cast<int>(train_ids.size());
  size_t heads = schema.attrs.size();
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled_order(total, rng, stream_id(kStreamShuffle, static_cast<uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (int start = 0; start < total; start += cfg.batch) {
      int bc = std::min(cfg.batch, total - start);
      std::vector<const Tensor*> rows;
      std::vector<std::vector<int64_t>> picks(heads);
      for (int r = 0; r < bc; ++r) {
        const LabeledSample& s = ds.by_id(train_ids[static_cast<size_t>(order[start + r])]);
        rows.push_back(&flats[static_cast<size_t>(order[start + r])]);
        for (size_t a = 0; a < heads; ++a) {
          int64_t cls = schema.attrs[a].classes;
          picks[a].push_back(static_cast<int64_t>(r) * cls + s.labels[a]);
        }
      }
      Tape tape;
      std::vector<Var> pv;
      for (const auto& [name, t] : params) {
        (void)name;
        pv.push_back(tape.leaf(*t));
      }
      Var x = tape.constant(batch_rows(rows, n));
      std::vector<Var> probs = AttributeNet::forward_graph(tape, x, pv, schema);
      Var loss;
      for (size_t a = 0; a < heads; ++a) {
        Var picked = tape.gather(probs[a], picks[a]);
        Var head_loss = tape.scale(tape.sum(tape.log(picked)), -1.0 / bc);
        loss = (a == 0) ? head_loss : tape.add(loss, head_loss);
      }
      tape.backward(loss);
      loss_sum += tape.value(loss).data()[0] * bc;
      for (size_t p = 0; p < params.size(); ++p) opt[p].step(*params[p].second, tape.grad(pv[p]));
    }
    last_epoch_loss = loss_sum / total;
  }

  AttrTrainReport report;
  report.epochs = cfg.epochs;
  report.final_loss = last_epoch_loss;
  report.train_accuracy.assign(heads, 0.0);
  report.test_accuracy.assign(heads, 0.0);
  auto tally = [&](const std::vector<int>& ids, std::vector<double>& acc) {
    std::vector<int64_t> hits(heads, 0);
    for (int id : ids) {
      const LabeledSample& s = ds.by_id(id);
      std::vector<int> pred = net.predict_argmax(s.image);
      for (size_t a = 0; a < heads; ++a) {
        if (pred[a] == s.labels[a]) ++hits[a];
      }
    }
    for (size_t a = 0; a < heads; ++a) {
      acc[a] = static_cast<double>(hits[a]) / static_cast<double>(ids.size());
    }
  };
  tally(train_ids, report.train_accuracy);
  tally(test_ids, report.test_accuracy);
  return {std::move(net), std::move(report)};
}

const char* variant_name(EmbedVariant v) {
  return v == EmbedVariant::whitebox ? "whitebox" : "heldout";
}

EmbedVariant variant_from_name(const std::string& s) {
  if (s == "whitebox") return EmbedVariant::whitebox;
  if (s == "heldout") return EmbedVariant::heldout;
  throw ConfigError("unknown embedder variant '" + s + "' (use whitebox or heldout)");
}

EmbeddingNet EmbeddingNet::init(EmbedVariant variant, int subjects, int64_t h, int64_t w,
                                int64_t c, uint64_t seed) {
  if (subjects < 2) {
    throw Error("embedding net requires at least 2 subjects, got " + std::to_string(subjects));
  }
  if (h <= 0 || w <= 0 || c <= 0) throw ConfigError("input dimensions must be positive");
  EmbeddingNet net;
  net.variant = variant;
  net.subjects = subjects;
  net.in_h = h;
  net.in_w = w;
  net.in_c = c;
  net.trunk1 = variant == EmbedVariant::heldout ? 192 : 256;
  net.trunk2 = variant == EmbedVariant::heldout ? 96 : 128;
  net.init_seed = seed;
  // Distinct salt per variant keeps the two embedders different even under
  // the same seed.
  uint64_t salt = variant == EmbedVariant::heldout ? 2 : 1;
  CounterRng rng(seed);
  int64_t n = net.input_size();
  int64_t t1 = net.trunk1, t2 = net.trunk2, d = net.dim;
  int64_t s = subjects;
  uint64_t p = 0;
  net.w1 = xavier({t1, n}, n, t1, rng, stream_id(kStreamInit, p++, salt));
  net.b1 = Tensor({t1});
  ++p;
  net.w2 = xavier({t2, t1}, t1, t2, rng, stream_id(kStreamInit, p++, salt));
  net.b2 = Tensor({t2});
  ++p;
  net.we = xavier({d, t2}, t2, d, rng, stream_id(kStreamInit, p++, salt));
  net.be = Tensor({d});
  ++p;
  net.head_w = xavier({s, d}, d, s, rng, stream_id(kStreamInit, p++, salt));
  net.head_b = Tensor({s});
  return net;
}

std::vector<std::pair<std::string, const Tensor*>> EmbeddingNet::named_params() const {
  return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2},
          {"we", &we}, {"be", &be}, {"head_w", &head_w}, {"head_b", &head_b}};
}

std::vector<std::pair<std::string, Tensor*>> EmbeddingNet::named_params() {
  return {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2},
          {"we", &we}, {"be", &be}, {"head_w", &head_w}, {"head_b", &head_b}};
}

Var EmbeddingNet::embed_graph(Tape& tape, Var x, const std::vector<Var>& params) {
  if (params.size() != 8) {
    throw ShapeError("embed_graph: expected 8 parameters, got " + std::to_string(params.size()));
  }
  Var h2 = trunk_graph(tape, x, params);
  return tape.l2_normalize(tape.affine(h2, params[4], params[5]));
}

Var EmbeddingNet::head_graph(Tape& tape, Var embedding, const std::vector<Var>& params) {
  return tape.affine(embedding, params[6], params[7]);
}

Var EmbeddingNet::embed(Tape& tape, Var x) const {
  std::vector<Var> pv;
  for (const auto& [name, t] : named_params()) {
    (void)name;
    pv.push_back(tape.constant(*t));
  }
  return embed_graph(tape, x, pv);
}

Tensor EmbeddingNet::embed_value(const Tensor& image) const {
  Tape tape;
  Var x = tape.constant(flat_image(image, input_size(), "embed"));
  return tape.value(embed(tape, x));
}

std::pair<EmbeddingNet, EmbedTrainReport> train_embedding_net(const Dataset& ds,
                                                              const TrainConfig& cfg,
                                                              EmbedVariant variant) {
  cfg.validate();
  if (ds.spec.subjects < 2) {
    throw Error("embedding training requires at least 2 subjects, got " +
                std::to_string(ds.spec.subjects));
  }
  const auto& train_ids = ds.ids(Split::train);
  const auto& test_ids = ds.ids(Split::test);
  if (train_ids.empty()) throw Error("embedding training: the train split is empty");
  if (test_ids.empty()) throw Error("embedding training: the test split is empty");

  int64_t n = ds.spec.pixels();
  EmbeddingNet net = EmbeddingNet::init(variant, ds.spec.subjects, ds.spec.height, ds.spec.width,
                                        ds.spec.channels, cfg.seed);
  net.schema_hash = ds.schema().hash();
  auto params = net.named_params();
  AdamConfig acfg;
  acfg.lr = cfg.lr;
  std::vector<Adam> opt;
  for (const auto& [name, t] : params) {
    (void)name;
    opt.emplace_back(t->dims(), acfg);
  }

  std::vector<Tensor> flats;
  flats.reserve(train_ids.size());
  for (int id : train_ids) flats.push_back(ds.by_id(id).image.reshaped({n}));

  CounterRng rng(cfg.seed);
  int total = static_cast<int>(train_ids.size());
  double last_epoch_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = shuffled_order(total, rng, stream_id(kStreamShuffle, static_cast<uint64_t>(epoch)));
    double loss_sum = 0.0;
    for (int start = 0; start < total; start += cfg.batch) {
      int bc = std::min(cfg.batch, total - start);
      Tape tape;
      std::vector<Var> pv;
      for (const auto& [name, t] : params) {
        (void)name;
        pv.push_back(tape.leaf(*t));
      }
      Var ce_sum;
      for (int r = 0; r < bc; ++r) {
        const LabeledSample& s = ds.by_id(train_ids[static_cast<size_t>(order[start + r])]);
        Var x = tape.constant(flats[static_cast<size_t>(order[start + r])]);
        Var e = EmbeddingNet::embed_graph(tape, x, pv);
        Var probs = tape.softmax(EmbeddingNet::head_graph(tape, e, pv));
        Var picked = tape.gather(probs, {static_cast<int64_t>(s.subject)});
        Var ce = tape.log(picked);
        ce_sum = (r == 0) ? ce : tape.add(ce_sum, ce);
      }
      Var loss = tape.scale(tape.sum(ce_sum), -1.0 / bc);
      tape.backward(loss);
      loss_sum += tape.value(loss).data()[0] * bc;
      for (size_t p = 0; p < params.size(); ++p) opt[p].step(*params[p].second, tape.grad(pv[p]));
    }
    last_epoch_loss = loss_sum / total;
  }

  EmbedTrainReport report;
  report.epochs = cfg.epochs;
  report.final_loss = last_epoch_loss;

  int64_t hits = 0;
  for (int id : train_ids) {
    const LabeledSample& s = ds.by_id(id);
    Tape tape;
    std::vector<Var> pv;
    for (const auto& [name, t] : params) {
      (void)name;
      pv.push_back(tape.constant(*t));
    }
    Var x = tape.constant(s.image.reshaped({n}));
    Var logits = EmbeddingNet::head_graph(tape, EmbeddingNet::embed_graph(tape, x, pv), pv);
    if (argmax_of(tape.value(logits)) == s.subject) ++hits;
  }
  report.train_accuracy = static_cast<double>(hits) / static_cast<double>(train_ids.size());

  std::vector<Tensor> emb;
  std::vector<int> subj;
  for (int id : test_ids) {
    const LabeledSample& s = ds.by_id(id);
    emb.push_back(net.embed_value(s.image));
    subj.push_back(s.subject);
  }
  std::vector<double> genuine, impostor;
  for (size_t i = 0; i < emb.size(); ++i) {
    for (size_t j = i + 1; j < emb.size(); ++j) {
      double d = identity_distance(emb[i], emb[j]);
      (subj[i] == subj[j] ? genuine : impostor).push_back(d);
    }
  }
  report.mean_genuine = mean_of(genuine);
  report.mean_impostor = mean_of(impostor);
  return {std::move(net), std::move(report)};
}

double identity_distance(const Tensor& e1, const Tensor& e2) {
  if (e1.dims() != e2.dims()) {
    throw ShapeError("identity_distance: shape mismatch " + e1.shape_str() + " vs " +
                     e2.shape_str());
  }
  const double* a = e1.data();
  const double* b = e2.data();
  double s = 0.0;
  for (int64_t i = 0; i < e1.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

MatchThreshold eer_threshold(const std::vector<double>& genuine,
                             const std::vector<double>& impostor) {
  if (genuine.empty()) {
    throw Error("threshold calibration requires at least one genuine pair");
  }
  if (impostor.empty()) {
    throw Error("threshold calibration requires at least one impostor pair");
  }
  std::vector<double> gen = genuine, imp = impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> cand = gen;
  cand.insert(cand.end(), imp.begin(), imp.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  double ng = static_cast<double>(gen.size());
  double ni = static_cast<double>(imp.size());
  MatchThreshold best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double t : cand) {
    // Accept when distance <= t: FAR counts accepted impostors, FRR rejected
    // genuine pairs.
    double far = static_cast<double>(std::upper_bound(imp.begin(), imp.end(), t) - imp.begin()) /
                 ni;
    double frr = static_cast<double>(gen.end() - std::upper_bound(gen.begin(), gen.end(), t)) / ng;
    double gap = std::abs(far - frr);
    if (gap < best_gap) {
      best_gap = gap;
      best.tau = t;
      best.eer = 0.5 * (far + frr);
    }
  }
  best.genuine_pairs = static_cast<int>(gen.size());
  best.impostor_pairs = static_cast<int>(imp.size());
  return best;
}

MatchThreshold calibrate_threshold(const EmbeddingNet& net, const Dataset& ds) {
  const auto& train_ids = ds.ids(Split::train);
  std::vector<Tensor> emb;
  std::vector<int> subj;
  for (int id : train_ids) {
    const LabeledSample& s = ds.by_id(id);
    emb.push_back(net.embed_value(s.image));
    subj.push_back(s.subject);
  }
  std::vector<double> genuine, impostor;
  for (size_t i = 0; i < emb.size(); ++i) {
    for (size_t j = i + 1; j < emb.size(); ++j) {
      double d = identity_distance(emb[i], emb[j]);
      (subj[i] == subj[j] ? genuine : impostor).push_back(d);
    }
  }
  if (genuine.empty()) {
    throw Error("threshold calibration requires at least one genuine pair in the train split");
  }
  MatchThreshold best = eer_threshold(genuine, impostor);
  best.split = "train";
  return best;
}

void save_attribute_checkpoint(const AttributeNet& net, const std::string& dir) {
  ojson j;
  j["format_version"] = 1;
  j["type"] = "attribute";
  j["input"] = {{"height", net.in_h}, {"width", net.in_w}, {"channels", net.in_c}};
  j["trunk"] = {net.trunk1, net.trunk2};
  j["schema"] = schema_to_json(net.schema);
  j["schema_hash"] = net.schema.hash();
  j["init_seed"] = net.init_seed;
  ojson names = ojson::array();
  for (const auto& [name, t] : net.named_params()) {
    (void)t;
    names.push_back(name);
  }
  j["params"] = names;
  write_model_json(j, dir);
  save_params(net.named_params(), dir);
}

AttributeNet load_attribute_checkpoint(const std::string& dir) {
  ojson j = read_model_json(dir);
  require_format(j, "attribute");
  AttributeSchema schema = schema_from_json(j.at("schema"));
  schema.validate();
  if (j.value("schema_hash", "") != schema.hash()) {
    throw Error("checkpoint schema hash does not match its schema definition");
  }
  const ojson& in = j.at("input");
  AttributeNet net;
  net.schema = schema;
  net.in_h = in.at("height").get<int64_t>();
  net.in_w = in.at("width").get<int64_t>();
  net.in_c = in.at("channels").get<int64_t>();
  net.trunk1 = j.at("trunk").at(0).get<int64_t>();
  net.trunk2 = j.at("trunk").at(1).get<int64_t>();
  net.init_seed = j.value("init_seed", 0ull);
  if (net.in_h <= 0 || net.in_w <= 0 || net.in_c <= 0 || net.trunk1 <= 0 || net.trunk2 <= 0) {
    throw Error("checkpoint declares non-positive dimensions");
  }
  int64_t n = net.input_size();
  net.w1 = Tensor({net.trunk1, n});
  net.b1 = Tensor({net.trunk1});
  net.w2 = Tensor({net.trunk2, net.trunk1});
  net.b2 = Tensor({net.trunk2});
  for (const auto& attr : schema.attrs) {
    net.head_w.push_back(Tensor({attr.classes, net.trunk2}));
    net.head_b.push_back(Tensor({attr.classes}));
  }
  ojson names = ojson::array();
  for (const auto& [name, t] : net.named_params()) {
    (void)t;
    names.push_back(name);
  }
  if (j.at("params") != names) throw Error("checkpoint parameter list mismatch");
  load_params(net.named_params(), dir);
  return net;
}

void save_embedding_checkpoint(const EmbeddingNet& net,
                               const std::optional<MatchThreshold>& threshold,
                               const std::string& dir) {
  ojson j;
  j["format_version"] = 1;
  j["type"] = "embedding";
  j["variant"] = variant_name(net.variant);
  j["input"] = {{"height", net.in_h}, {"width", net.in_w}, {"channels", net.in_c}};
  j["trunk"] = {net.trunk1, net.trunk2};
  j["embed_dim"] = net.dim;
  j["subjects"] = net.subjects;
  j["schema_hash"] = net.schema_hash;
  j["init_seed"] = net.init_seed;
  if (threshold) {
    j["threshold"] = {{"tau", threshold->tau},
                      {"eer", threshold->eer},
                      {"genuine_pairs", threshold->genuine_pairs},
                      {"impostor_pairs", threshold->impostor_pairs},
                      {"split", threshold->split}};
  } else {
    j["threshold"] = nullptr;
  }
  ojson names = ojson::array();
  for (const auto& [name, t] : net.named_params()) {
    (void)t;
    names.push_back(name);
  }
  j["params"] = names;
  write_model_json(j, dir);
  save_params(net.named_params(), dir);
}

std::pair<EmbeddingNet, std::optional<MatchThreshold>> load_embedding_checkpoint(
    const std::string& dir) {
  ojson j = read_model_json(dir);
  require_format(j, "embedding");
  EmbeddingNet net;
  net.variant = variant_from_name(j.at("variant").get<std::string>());
  const ojson& in = j.at("input");
  net.in_h = in.at("height").get<int64_t>();
  net.in_w = in.at("width").get<int64_t>();
  net.in_c = in.at("channels").get<int64_t>();
  net.trunk1 = j.at("trunk").at(0).get<int64_t>();
  net.trunk2 = j.at("trunk").at(1).get<int64_t>();
  net.dim = j.at("embed_dim").get<int64_t>();
  net.subjects = j.at("subjects").get<int>();
  net.schema_hash = j.value("schema_hash", "");
  net.init_seed = j.value("init_seed", 0ull);
  if (net.in_h <= 0 || net.in_w <= 0 || net.in_c <= 0 || net.trunk1 <= 0 || net.trunk2 <= 0 ||
      net.dim <= 0 || net.subjects < 2) {
    throw Error("checkpoint declares invalid dimensions");
  }
  int64_t n = net.input_size();
  net.w1 = Tensor({net.trunk1, n});
  net.b1 = Tensor({net.trunk1});
  net.w2 = Tensor({net.trunk2, net.trunk1});
  net.b2 = Tensor({net.trunk2});
  net.we = Tensor({net.dim, net.trunk2});
  net.be = Tensor({net.dim});
  net.head_w = Tensor({static_cast<int64_t>(net.subjects), net.dim});
  net.head_b = Tensor({static_cast<int64_t>(net.subjects)});
  ojson names = ojson::array();
  for (const auto& [name, t] : net.named_params()) {
    (void)t;
    names.push_back(name);
  }
  if (j.at("params") != names) throw Error("checkpoint parameter list mismatch");
  load_params(net.named_params(), dir);
  std::optional<MatchThreshold> th;
  if (j.contains("threshold") && !j["threshold"].is_null()) {
    const ojson& t = j["threshold"];
    MatchThreshold m;
    m.tau = t.at("tau").get<double>();
    m.eer = t.at("eer").get<double>();
    m.genuine_pairs = t.value("genuine_pairs", 0);
    m.impostor_pairs = t.value("impostor_pairs", 0);
    m.split = t.value("split", "train");
    th = m;
  }
  return {std::move(net), th};
}

}  // namespace attrcloak
