#include "attrcloak/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <thread>

#include "attrcloak/errors.hpp"

namespace attrcloak {
namespace fs = std::filesystem;

namespace {

constexpr uint64_t kDefaultSeed = 20260822ull;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Stage failures keep their class (config vs runtime) but carry the stage name.
template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError("stage '" + std::string(name) + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error("stage '" + std::string(name) + "': " + e.what());
  }
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " not found: " + path);
  }
}

void require_schema_match(const std::string& net_hash, const std::string& ds_hash,
                          const char* what) {
  if (net_hash != ds_hash) {
    throw ConfigError(std::string(what) + " was trained against a different attribute schema (" +
                      net_hash + ") than the dataset (" + ds_hash + ")");
  }
}

SyntheticSpec dataset_spec_from_config(const ojson& j, uint64_t default_seed) {
  SyntheticSpec s;
  s.height = j.value("height", s.height);
  s.width = j.value("width", s.width);
  s.channels = j.value("channels", s.channels);
  s.subjects = j.value("subjects", s.subjects);
  s.images_per_subject = j.value("images_per_subject", s.images_per_subject);
  s.pattern_amplitude = j.value("pattern_amplitude", s.pattern_amplitude);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.band_overlap = j.value("band_overlap", s.band_overlap);
  s.seed = j.value("seed", default_seed);
  if (j.contains("attrs")) s.schema = schema_from_json(j.at("attrs"));
  s.validate();
  return s;
}

ojson dataset_spec_to_config(const SyntheticSpec& s) {
  return ojson{{"height", s.height},
               {"width", s.width},
               {"channels", s.channels},
               {"subjects", s.subjects},
               {"images_per_subject", s.images_per_subject},
               {"pattern_amplitude", s.pattern_amplitude},
               {"noise_sigma", s.noise_sigma},
               {"band_overlap", s.band_overlap},
               {"seed", s.seed},
               {"attrs", schema_to_json(s.schema)}};
}

TrainConfig train_from_config(const ojson& j, TrainConfig base, uint64_t default_seed) {
  base.seed = default_seed;
  base.epochs = j.value("epochs", base.epochs);
  base.batch = j.value("batch", base.batch);
  base.lr = j.value("lr", base.lr);
  base.seed = j.value("seed", base.seed);
  base.validate();
  return base;
}

ojson train_to_config(const TrainConfig& c) {
  return ojson{{"epochs", c.epochs}, {"batch", c.batch}, {"lr", c.lr}, {"seed", c.seed}};
}

ojson summary_to_json(const BatchSummary& s) {
  return ojson{{"requested", s.requested},
               {"eligible", s.eligible},
               {"filtered_out", s.filtered_out},
               {"successes", s.successes},
               {"success_rate", s.success_rate},
               {"mean_distortion", s.mean_distortion},
               {"mean_psnr", std::isinf(s.mean_psnr) ? ojson(nullptr) : ojson(s.mean_psnr)},
               {"mean_iterations_to_first_feasible", s.mean_iterations_to_first_feasible}};
}

void write_json_file(const ojson& j, const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace

AttackSpec AttackRequest::resolve(const AttributeSchema& schema,
                                  const std::optional<MatchThreshold>& threshold) const {
  AttackSpec spec;
  for (const auto& [name, cls] : suppress) {
    int u = schema.resolve(name);
    if (spec.suppress.count(u)) {
      throw ConfigError("attribute '" + schema.attrs[static_cast<size_t>(u)].name +
                        "' is listed twice in suppress");
    }
    spec.suppress[u] = cls ? SuppressTarget::Specific(*cls) : SuppressTarget::AnyOther();
  }
  for (const std::string& name : preserve) {
    spec.preserve.insert(schema.resolve(name));
  }
  spec.confidence = confidence;
  spec.lambda_dist = lambda_dist;
  if (preserve_identity) {
    double tau;
    if (identity_tau) {
      tau = *identity_tau;
    } else if (threshold) {
      tau = threshold->tau;
    } else {
      throw ConfigError(
          "identity preservation needs a calibrated match threshold or an explicit tau");
    }
    spec.identity = IdentitySpec{identity_weight, tau};
  }
  spec.iterations = iterations;
  spec.lr = lr;
  if (score_space == "probability") {
    spec.score_space = ScoreSpace::probability;
  } else if (score_space == "logit") {
    spec.score_space = ScoreSpace::logit;
  } else {
    throw ConfigError("unknown score space '" + score_space + "'");
  }
  spec.eps_box = eps_box;
  spec.seed = seed;
  spec.validate(schema);
  return spec;
}

ojson AttackRequest::to_json() const {
  ojson sup = ojson::array();
  for (const auto& [name, cls] : suppress) {
    ojson e;
    e["attribute"] = name;
    e["target"] = cls ? ojson(*cls) : ojson(nullptr);
    sup.push_back(e);
  }
  return ojson{{"suppress", sup},
               {"preserve", preserve},
               {"confidence", confidence},
               {"lambda_dist", lambda_dist},
               {"preserve_identity", preserve_identity},
               {"identity_weight", identity_weight},
               {"identity_tau", identity_tau ? ojson(*identity_tau) : ojson(nullptr)},
               {"iterations", iterations},
               {"lr", lr},
               {"score_space", score_space},
               {"eps_box", eps_box},
               {"seed", seed}};
}

AttackRequest AttackRequest::from_json(const ojson& j) {
  AttackRequest r;
  for (const ojson& e : j.value("suppress", ojson::array())) {
    if (e.is_string()) {
      std::string s = e.get<std::string>();
      size_t eq = s.find('=');
      if (eq == std::string::npos) {
        r.suppress.emplace_back(s, std::nullopt);
      } else {
        std::string num = s.substr(eq + 1);
        int cls = 0;
        auto [p, ec] = std::from_chars(num.data(), num.data() + num.size(), cls);
        if (ec != std::errc() || p != num.data() + num.size()) {
          throw ConfigError("bad suppress entry '" + s + "' (want name or name=class)");
        }
        r.suppress.emplace_back(s.substr(0, eq), cls);
      }
    } else {
      std::optional<int> cls;
      if (e.contains("target") && !e.at("target").is_null()) cls = e.at("target").get<int>();
      r.suppress.emplace_back(e.at("attribute").get<std::string>(), cls);
    }
  }
  for (const ojson& e : j.value("preserve", ojson::array())) {
    r.preserve.push_back(e.get<std::string>());
  }
  r.confidence = j.value("confidence", r.confidence);
  r.lambda_dist = j.value("lambda_dist", r.lambda_dist);
  r.preserve_identity = j.value("preserve_identity", false);
  r.identity_weight = j.value("identity_weight", r.identity_weight);
  if (j.contains("identity_tau") && !j.at("identity_tau").is_null()) {
    r.identity_tau = j.at("identity_tau").get<double>();
  }
  r.iterations = j.value("iterations", r.iterations);
  r.lr = j.value("lr", r.lr);
  r.score_space = j.value("score_space", r.score_space);
  r.eps_box = j.value("eps_box", r.eps_box);
  r.seed = j.value("seed", r.seed);
  return r;
}

std::optional<uint64_t> env_seed() {
  const char* v = std::getenv("ATTRCLOAK_SEED");
  if (!v || !*v) return std::nullopt;
  uint64_t out = 0;
  const char* end = v + std::char_traits<char>::length(v);
  auto [p, ec] = std::from_chars(v, end, out);
  if (ec != std::errc() || p != end) {
    throw ConfigError("ATTRCLOAK_SEED must be a nonnegative integer, got '" + std::string(v) +
                      "'");
  }
  return out;
}

ReportInputs evaluate_results(const Dataset& ds, const AttributeNet& net,
                              const EmbeddingNet* whitebox, const EmbeddingNet* heldout,
                              const BatchResult& results, const AttackSpec& spec, Split split,
                              int bins) {
  spec.validate(net.schema);
  if (results.per_sample.empty()) throw Error("no attack results to evaluate");
  if (bins < 2) throw ConfigError("histogram bins must be at least 2");

  ReportInputs out;
  std::vector<int> constrained;
  for (const auto& [u, t] : spec.suppress) {
    (void)t;
    constrained.push_back(u);
  }
  for (int u : spec.preserve) constrained.push_back(u);

  for (int u : constrained) {
    const std::string& name = net.schema.attrs[static_cast<size_t>(u)].name;
    int classes = net.schema.attrs[static_cast<size_t>(u)].classes;
    std::vector<int> truths, pre, post;
    for (const auto& [id, r] : results.per_sample) {
      truths.push_back(ds.by_id(id).labels[static_cast<size_t>(u)]);
      pre.push_back(r.attributes[static_cast<size_t>(u)].pre_argmax);
      post.push_back(r.attributes[static_cast<size_t>(u)].post_argmax);
    }
    out.confusions.push_back(confusion_matrix(pre, truths, name + "_before", classes));
    out.confusions.push_back(confusion_matrix(post, truths, name + "_after", classes));
  }

  for (const auto& [u, target] : spec.suppress) {
    (void)target;
    const std::string& name = net.schema.attrs[static_cast<size_t>(u)].name;
    std::vector<double> before, after;
    for (const auto& [id, r] : results.per_sample) {
      const LabeledSample& s = ds.by_id(id);
      int label = s.labels[static_cast<size_t>(u)];
      before.push_back(net.predict(s.image)[static_cast<size_t>(u)].data()[label]);
      after.push_back(net.predict(r.anonymized)[static_cast<size_t>(u)].data()[label]);
    }
    out.histograms.push_back({name + "_true_class_score",
                              {score_histogram(before, bins, "before"),
                               score_histogram(after, bins, "after")}});
  }

  auto add_embedder = [&](const EmbeddingNet& emb, const std::string& tag) {
    if (ds.gallery_ids.empty()) return;
    std::vector<Tensor> gal;
    std::vector<int> gal_subj;
    for (int id : ds.gallery_ids) {
      gal.push_back(emb.embed_value(ds.by_id(id).image));
      gal_subj.push_back(ds.by_id(id).subject);
    }
    std::vector<Tensor> orig, anon;
    std::vector<int> subj;
    for (const auto& [id, r] : results.per_sample) {
      orig.push_back(emb.embed_value(ds.by_id(id).image));
      anon.push_back(emb.embed_value(r.anonymized));
      subj.push_back(ds.by_id(id).subject);
    }
    out.cmc.push_back({tag + "_original", cmc_curve(gal, gal_subj, orig, subj)});
    out.cmc.push_back({tag + "_anonymized", cmc_curve(gal, gal_subj, anon, subj)});
    std::vector<double> gen_o, imp_o, gen_a, imp_a;
    for (size_t i = 0; i < orig.size(); ++i) {
      for (size_t g = 0; g < gal.size(); ++g) {
        double d_o = identity_distance(orig[i], gal[g]);
        double d_a = identity_distance(anon[i], gal[g]);
        if (subj[i] == gal_subj[g]) {
          gen_o.push_back(d_o);
          gen_a.push_back(d_a);
        } else {
          imp_o.push_back(d_o);
          imp_a.push_back(d_a);
        }
      }
    }
    if (!gen_o.empty() && !imp_o.empty()) {
      out.roc.push_back({tag + "_original", roc_curve(gen_o, imp_o)});
      out.roc.push_back({tag + "_anonymized", roc_curve(gen_a, imp_a)});
    }
  };
  if (whitebox) add_embedder(*whitebox, "whitebox");
  if (heldout) add_embedder(*heldout, "heldout");

  std::vector<Tensor> origs, anons;
  for (const auto& [id, r] : results.per_sample) {
    origs.push_back(ds.by_id(id).image);
    anons.push_back(r.anonymized);
  }
  out.quality = quality_stats(origs, anons);

  ojson extra;
  extra["split"] = split_name(split);
  extra["attack_spec"] = attack_spec_to_json(spec);
  extra["summary"] = summary_to_json(results.summary);
  auto identity_means = [&](bool heldout_side) -> ojson {
    double pre = 0.0, post = 0.0;
    int n = 0;
    for (const auto& [id, r] : results.per_sample) {
      (void)id;
      if (!r.identity) continue;
      const IdentityReport& rep = *r.identity;
      if (heldout_side ? !rep.has_heldout : !rep.has_whitebox) continue;
      pre += heldout_side ? rep.heldout_pre : rep.whitebox_pre;
      post += heldout_side ? rep.heldout_post : rep.whitebox_post;
      ++n;
    }
    if (n == 0) return ojson(nullptr);
    return ojson{{"mean_pre", pre / n}, {"mean_post", post / n}, {"samples", n}};
  };
  extra["identity_distance"] = {{"whitebox", identity_means(false)},
                               {"heldout", identity_means(true)}};
  out.extra = extra;
  return out;
}

ojson report_inputs_to_json(const ReportInputs& in) {
  ojson j;
  j["format_version"] = 1;
  ojson confs = ojson::array();
  for (const ConfusionMatrix& m : in.confusions) {
    ojson rows = ojson::array();
    for (int r = 0; r < m.classes; ++r) {
      ojson row = ojson::array();
      for (int c = 0; c < m.classes; ++c) row.push_back(m.counts.data()[r * m.classes + c]);
      rows.push_back(row);
    }
    confs.push_back({{"attribute", m.attribute}, {"classes", m.classes}, {"counts", rows}});
  }
  j["confusions"] = confs;
  ojson hists = ojson::array();
  for (const auto& [name, series] : in.histograms) {
    ojson sj = ojson::array();
    for (const HistogramSeries& h : series) {
      sj.push_back({{"label", h.label}, {"bins", h.bins}, {"counts", h.counts}});
    }
    hists.push_back({{"name", name}, {"series", sj}});
  }
  j["histograms"] = hists;
  ojson cmcs = ojson::array();
  for (const auto& [name, curve] : in.cmc) {
    cmcs.push_back({{"name", name}, {"rate", curve.rate}});
  }
  j["cmc"] = cmcs;
  ojson rocs = ojson::array();
  for (const auto& [name, curve] : in.roc) {
    rocs.push_back({{"name", name}, {"far", curve.far}, {"tar", curve.tar}, {"auc", curve.auc}});
  }
  j["roc"] = rocs;
  if (in.quality) {
    const QualityStats& q = *in.quality;
    ojson psnr = ojson::array();
    for (double v : q.psnr) psnr.push_back(std::isinf(v) ? ojson(nullptr) : ojson(v));
    j["quality"] = {{"sq_l2", q.sq_l2},
                    {"psnr", psnr},
                    {"mean_sq_l2", q.mean_sq_l2},
                    {"median_sq_l2", q.median_sq_l2},
                    {"min_sq_l2", q.min_sq_l2},
                    {"max_sq_l2", q.max_sq_l2},
                    {"mean_psnr", std::isinf(q.mean_psnr) ? ojson(nullptr) : ojson(q.mean_psnr)},
                    {"median_psnr",
                     std::isinf(q.median_psnr) ? ojson(nullptr) : ojson(q.median_psnr)},
                    {"min_psnr", std::isinf(q.min_psnr) ? ojson(nullptr) : ojson(q.min_psnr)}};
  } else {
    j["quality"] = nullptr;
  }
  j["extra"] = in.extra.is_null() ? ojson(nullptr) : in.extra;
  return j;
}

ReportInputs report_inputs_from_json(const ojson& j) {
  if (!j.contains("format_version") || j["format_version"] != 1) {
    throw Error("unsupported metrics format version");
  }
  ReportInputs in;
  for (const ojson& e : j.at("confusions")) {
    ConfusionMatrix m;
    m.attribute = e.at("attribute").get<std::string>();
    m.classes = e.at("classes").get<int>();
    m.counts = Tensor({m.classes, m.classes});
    const ojson& rows = e.at("counts");
    for (int r = 0; r < m.classes; ++r) {
      for (int c = 0; c < m.classes; ++c) {
        m.counts.mut()[r * m.classes + c] = rows.at(static_cast<size_t>(r)).at(static_cast<size_t>(c)).get<double>();
      }
    }
    in.confusions.push_back(std::move(m));
  }
  for (const ojson& e : j.at("histograms")) {
    std::vector<HistogramSeries> series;
    for (const ojson& s : e.at("series")) {
      HistogramSeries h;
      h.label = s.at("label").get<std::string>();
      h.bins = s.at("bins").get<int>();
      h.counts = s.at("counts").get<std::vector<int64_t>>();
      series.push_back(std::move(h));
    }
    in.histograms.push_back({e.at("name").get<std::string>(), std::move(series)});
  }
  for (const ojson& e : j.at("cmc")) {
    CmcCurve c;
    c.rate = e.at("rate").get<std::vector<double>>();
    in.cmc.push_back({e.at("name").get<std::string>(), std::move(c)});
  }
  for (const ojson& e : j.at("roc")) {
    RocCurve c;
    c.far = e.at("far").get<std::vector<double>>();
    c.tar = e.at("tar").get<std::vector<double>>();
    c.auc = e.at("auc").get<double>();
    in.roc.push_back({e.at("name").get<std::string>(), std::move(c)});
  }
  if (!j.at("quality").is_null()) {
    const ojson& q = j.at("quality");
    QualityStats qs;
    qs.sq_l2 = q.at("sq_l2").get<std::vector<double>>();
    for (const ojson& v : q.at("psnr")) {
      qs.psnr.push_back(v.is_null() ? kInf : v.get<double>());
    }
    qs.mean_sq_l2 = q.at("mean_sq_l2").get<double>();
    qs.median_sq_l2 = q.at("median_sq_l2").get<double>();
    qs.min_sq_l2 = q.at("min_sq_l2").get<double>();
    qs.max_sq_l2 = q.at("max_sq_l2").get<double>();
    qs.mean_psnr = q.at("mean_psnr").is_null() ? kInf : q.at("mean_psnr").get<double>();
    qs.median_psnr = q.at("median_psnr").is_null() ? kInf : q.at("median_psnr").get<double>();
    qs.min_psnr = q.at("min_psnr").is_null() ? kInf : q.at("min_psnr").get<double>();
    in.quality = std::move(qs);
  }
  in.extra = j.value("extra", ojson(nullptr));
  return in;
}

std::string run_experiment(const ojson& config, const std::string& out_override,
                           std::optional<uint64_t> cli_seed) {
  if (!config.is_object()) throw ConfigError("experiment config must be a json object");
  std::string out = !out_override.empty() ? out_override : config.value("out", "");
  if (out.empty()) {
    throw ConfigError("experiment config needs an output directory ('out' key or --out)");
  }
  uint64_t seed;
  if (cli_seed) {
    seed = *cli_seed;
  } else if (config.contains("seed")) {
    seed = config.at("seed").get<uint64_t>();
  } else if (std::optional<uint64_t> env = env_seed()) {
    seed = *env;
  } else {
    seed = kDefaultSeed;
  }

  ojson dcfg = config.value("dataset", ojson::object());
  ojson acfg = config.value("attr_net", ojson::object());
  ojson ecfg = config.value("embed_net", ojson(nullptr));
  ojson hcfg = config.value("heldout_net", ojson(nullptr));
  std::string split_s = config.value("split", "probe");
  Split split = split_from_name(split_s);
  int jobs = config.value("jobs", 0);
  if (jobs < 0) throw ConfigError("jobs must be nonnegative");
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  int bins = config.value("bins", 10);
  if (bins < 2) throw ConfigError("histogram bins must be at least 2");
  bool svg = config.value("svg", true);
  AttackRequest req = AttackRequest::from_json(config.value("attack", ojson::object()));
  if (!config.value("attack", ojson::object()).contains("seed")) req.seed = seed;

  fs::create_directories(out);

  Dataset ds = stage("dataset", [&] {
    if (dcfg.contains("path")) {
      std::string path = dcfg.at("path").get<std::string>();
      require_exists(path, "dataset");
      return load_dataset(path);
    }
    SyntheticSpec sspec = dataset_spec_from_config(dcfg, seed);
    Dataset d = generate_dataset(sspec);
    save_dataset(d, (fs::path(out) / "data").string());
    return d;
  });
  std::cout << "[dataset] " << ds.samples.size() << " samples, schema "
            << ds.schema().hash() << "\n";

  std::optional<AttrTrainReport> attr_report;
  TrainConfig attr_cfg;
  AttributeNet attr = stage("train-attr", [&] {
    if (acfg.contains("checkpoint")) {
      std::string path = acfg.at("checkpoint").get<std::string>();
      require_exists(path, "attribute checkpoint");
      AttributeNet net = load_attribute_checkpoint(path);
      require_schema_match(net.schema.hash(), ds.schema().hash(), "attribute checkpoint");
      return net;
    }
    attr_cfg = train_from_config(acfg, default_attribute_train(), seed + 1);
    auto [net, rep] = train_attribute_net(ds, attr_cfg);
    save_attribute_checkpoint(net, (fs::path(out) / "checkpoints" / "attr").string());
    attr_report = rep;
    return net;
  });
  if (attr_report) {
    std::cout << "[train-attr] final loss " << attr_report->final_loss << "\n";
  }

  std::optional<EmbeddingNet> whitebox;
  std::optional<MatchThreshold> threshold;
  TrainConfig embed_cfg;
  bool embed_trained = false;
  bool need_whitebox = !ecfg.is_null() || req.preserve_identity;
  if (need_whitebox) {
    stage("train-embed", [&] {
      ojson cfg = ecfg.is_null() ? ojson::object() : ecfg;
      if (cfg.contains("checkpoint")) {
        std::string path = cfg.at("checkpoint").get<std::string>();
        require_exists(path, "embedder checkpoint");
        auto [net, thr] = load_embedding_checkpoint(path);
        require_schema_match(net.schema_hash, ds.schema().hash(), "embedder checkpoint");
        whitebox = std::move(net);
        threshold = thr;
        return 0;
      }
      embed_cfg = train_from_config(cfg, default_embedding_train(), seed + 2);
      auto [net, rep] = train_embedding_net(ds, embed_cfg, EmbedVariant::whitebox);
      (void)rep;
      threshold = calibrate_threshold(net, ds);
      save_embedding_checkpoint(net, threshold,
                                (fs::path(out) / "checkpoints" / "embed").string());
      whitebox = std::move(net);
      embed_trained = true;
      return 0;
    });
    std::cout << "[train-embed] "
              << (threshold ? "tau " + std::to_string(threshold->tau) : std::string("no threshold"))
              << "\n";
  }

  std::optional<EmbeddingNet> heldout;
  TrainConfig heldout_cfg;
  bool heldout_trained = false;
  if (!hcfg.is_null()) {
    stage("train-heldout", [&] {
      if (hcfg.contains("checkpoint")) {
        std::string path = hcfg.at("checkpoint").get<std::string>();
        require_exists(path, "held-out embedder checkpoint");
        auto [net, thr] = load_embedding_checkpoint(path);
        (void)thr;
        require_schema_match(net.schema_hash, ds.schema().hash(), "held-out embedder checkpoint");
        heldout = std::move(net);
        return 0;
      }
      heldout_cfg = train_from_config(hcfg, default_embedding_train(), seed + 3);
      auto [net, rep] = train_embedding_net(ds, heldout_cfg, EmbedVariant::heldout);
      (void)rep;
      save_embedding_checkpoint(net, std::nullopt,
                                (fs::path(out) / "checkpoints" / "heldout").string());
      heldout = std::move(net);
      heldout_trained = true;
      return 0;
    });
  }

  AttackSpec spec = stage("attack", [&] { return req.resolve(attr.schema, threshold); });

  ojson resolved;
  resolved["out"] = out;
  resolved["seed"] = seed;
  resolved["dataset"] = dcfg.contains("path") ? ojson{{"path", dcfg.at("path")}}
                                              : dataset_spec_to_config(ds.spec);
  resolved["attr_net"] = acfg.contains("checkpoint") ? ojson{{"checkpoint", acfg.at("checkpoint")}}
                                                     : train_to_config(attr_cfg);
  if (need_whitebox) {
    ojson cfg = ecfg.is_null() ? ojson::object() : ecfg;
    resolved["embed_net"] = cfg.contains("checkpoint")
                                ? ojson{{"checkpoint", cfg.at("checkpoint")}}
                                : train_to_config(embed_cfg);
  } else {
    resolved["embed_net"] = nullptr;
  }
  if (!hcfg.is_null()) {
    resolved["heldout_net"] = hcfg.contains("checkpoint")
                                  ? ojson{{"checkpoint", hcfg.at("checkpoint")}}
                                  : train_to_config(heldout_cfg);
  } else {
    resolved["heldout_net"] = nullptr;
  }
  AttackRequest echo = req;
  if (spec.identity) echo.identity_tau = spec.identity->tau;
  resolved["attack"] = echo.to_json();
  resolved["resolved_attack_spec"] = attack_spec_to_json(spec);
  resolved["split"] = split_s;
  resolved["jobs"] = jobs;
  resolved["bins"] = bins;
  resolved["svg"] = svg;
  write_json_file(resolved, fs::path(out) / "config.resolved.json");

  BatchResult batch = stage("attack", [&] {
    BatchResult b = batch_attack(ds, split, spec, attr, whitebox ? &*whitebox : nullptr,
                                 heldout ? &*heldout : nullptr, jobs);
    save_batch_results(b, spec, (fs::path(out) / "attack").string());
    return b;
  });
  std::cout << "[attack] " << batch.summary.successes << "/" << batch.summary.eligible
            << " succeeded (rate " << batch.summary.success_rate << ")\n";

  ReportInputs inputs = stage("eval", [&] {
    ReportInputs in = evaluate_results(ds, attr, whitebox ? &*whitebox : nullptr,
                                       heldout ? &*heldout : nullptr, batch, spec, split, bins);
    if (attr_report) {
      ojson accs;
      accs["train_accuracy"] = attr_report->train_accuracy;
      accs["test_accuracy"] = attr_report->test_accuracy;
      in.extra["attribute_training"] = accs;
    }
    if (threshold) {
      in.extra["match_threshold"] = {{"tau", threshold->tau},
                                     {"eer", threshold->eer},
                                     {"genuine_pairs", threshold->genuine_pairs},
                                     {"impostor_pairs", threshold->impostor_pairs},
                                     {"split", threshold->split}};
    }
    write_json_file(report_inputs_to_json(in), fs::path(out) / "metrics.json");
    return in;
  });

  stage("report", [&] {
    write_report(inputs, (fs::path(out) / "report").string(), svg);
    return 0;
  });
  std::cout << "[report] " << (fs::path(out) / "report" / "report.json").string() << "\n";

  (void)embed_trained;
  (void)heldout_trained;
  return out;
}

}  // namespace attrcloak
