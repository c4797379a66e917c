#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "attrcloak/errors.hpp"
#include "attrcloak/experiment.hpp"
#include "attrcloak/json_util.hpp"

namespace fs = std::filesystem;
using namespace attrcloak;

namespace {

ojson read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config " + path);
  try {
    ojson j;
    f >> j;
    return j;
  } catch (const std::exception& e) {
    throw ConfigError("invalid json in " + path + ": " + e.what());
  }
}

void write_json_file(const ojson& j, const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + path.string());
}

void require_exists(const std::string& path, const char* what) {
  if (!fs::exists(path)) {
    throw ConfigError(std::string(what) + " not found: " + path);
  }
}

void require_schema(const std::string& net_hash, const Dataset& ds, const char* what) {
  if (net_hash != ds.schema().hash()) {
    throw ConfigError(std::string(what) + " was trained against schema " + net_hash +
                      " but the dataset uses " + ds.schema().hash());
  }
}

// CLI > config file > defaults: a flag the user typed stays; otherwise the
// config file value (when present) replaces the built-in default.
template <class T>
void merge(const CLI::App& cmd, const std::string& flag, const ojson& cfg, const std::string& key,
           T& var) {
  if (cmd.count(flag) == 0 && cfg.contains(key)) {
    try {
      var = cfg.at(key).get<T>();
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

// Seed precedence adds an environment fallback below flag and config.
uint64_t pick_seed(const CLI::App& cmd, const ojson& cfg, uint64_t flag_value,
                   uint64_t fallback) {
  if (cmd.count("--seed") > 0) return flag_value;
  if (cfg.contains("seed")) return cfg.at("seed").get<uint64_t>();
  if (std::optional<uint64_t> env = env_seed()) return *env;
  return fallback;
}

int effective_jobs(int jobs) {
  if (jobs < 0) throw ConfigError("jobs must be nonnegative");
  if (jobs == 0) return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return jobs;
}

struct GenDataArgs {
  std::string out, config;
  SyntheticSpec spec;
};

void run_gen_data(const CLI::App& cmd, GenDataArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : read_json_file(a.config);
  SyntheticSpec& s = a.spec;
  merge(cmd, "--height", cfg, "height", s.height);
  merge(cmd, "--width", cfg, "width", s.width);
  merge(cmd, "--channels", cfg, "channels", s.channels);
  merge(cmd, "--subjects", cfg, "subjects", s.subjects);
  merge(cmd, "--images-per-subject", cfg, "images_per_subject", s.images_per_subject);
  merge(cmd, "--pattern-amplitude", cfg, "pattern_amplitude", s.pattern_amplitude);
  merge(cmd, "--noise-sigma", cfg, "noise_sigma", s.noise_sigma);
  merge(cmd, "--band-overlap", cfg, "band_overlap", s.band_overlap);
  merge(cmd, "--out", cfg, "out", a.out);
  if (cfg.contains("attrs")) s.schema = schema_from_json(cfg.at("attrs"));
  s.seed = pick_seed(cmd, cfg, s.seed, s.seed);
  if (a.out.empty()) throw ConfigError("gen-data needs an output directory (--out)");
  s.validate();

  Dataset ds = generate_dataset(s);
  save_dataset(ds, a.out);
  ojson resolved{{"command", "gen-data"},
                 {"out", a.out},
                 {"height", s.height},
                 {"width", s.width},
                 {"channels", s.channels},
                 {"subjects", s.subjects},
                 {"images_per_subject", s.images_per_subject},
                 {"pattern_amplitude", s.pattern_amplitude},
                 {"noise_sigma", s.noise_sigma},
                 {"band_overlap", s.band_overlap},
                 {"seed", s.seed},
                 {"attrs", schema_to_json(s.schema)}};
  write_json_file(resolved, fs::path(a.out) / "config.resolved.json");
  std::cout << "[gen-data] " << ds.samples.size() << " samples, " << s.subjects
            << " subjects -> " << a.out << "\n";
}

struct TrainArgs {
  std::string data, out, config, variant = "whitebox";
  TrainConfig train;
  bool no_calibrate = false;
};

void run_train_attr(const CLI::App& cmd, TrainArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : read_json_file(a.config);
  merge(cmd, "--data", cfg, "data", a.data);
  merge(cmd, "--out", cfg, "out", a.out);
  merge(cmd, "--epochs", cfg, "epochs", a.train.epochs);
  merge(cmd, "--batch", cfg, "batch", a.train.batch);
  merge(cmd, "--lr", cfg, "lr", a.train.lr);
  a.train.seed = pick_seed(cmd, cfg, a.train.seed, a.train.seed);
  if (a.data.empty()) throw ConfigError("train-attr needs a dataset directory (--data)");
  if (a.out.empty()) throw ConfigError("train-attr needs an output directory (--out)");
  require_exists(a.data, "dataset");
  a.train.validate();

  Dataset ds = load_dataset(a.data);
  auto [net, report] = train_attribute_net(ds, a.train);
  save_attribute_checkpoint(net, a.out);
  ojson resolved{{"command", "train-attr"}, {"data", a.data},       {"out", a.out},
                 {"epochs", a.train.epochs}, {"batch", a.train.batch}, {"lr", a.train.lr},
                 {"seed", a.train.seed}};
  write_json_file(resolved, fs::path(a.out) / "config.resolved.json");
  ojson rep{{"train_accuracy", report.train_accuracy},
            {"test_accuracy", report.test_accuracy},
            {"final_loss", report.final_loss},
            {"epochs", report.epochs}};
  write_json_file(rep, fs::path(a.out) / "train_report.json");
  std::cout << "[train-attr] final loss " << report.final_loss << ", test accuracy";
  for (double acc : report.test_accuracy) std::cout << " " << acc;
  std::cout << " -> " << a.out << "\n";
}

void run_train_embed(const CLI::App& cmd, TrainArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : read_json_file(a.config);
  merge(cmd, "--data", cfg, "data", a.data);
  merge(cmd, "--out", cfg, "out", a.out);
  merge(cmd, "--variant", cfg, "variant", a.variant);
  merge(cmd, "--epochs", cfg, "epochs", a.train.epochs);
  merge(cmd, "--batch", cfg, "batch", a.train.batch);
  merge(cmd, "--lr", cfg, "lr", a.train.lr);
  merge(cmd, "--no-calibrate", cfg, "no_calibrate", a.no_calibrate);
  a.train.seed = pick_seed(cmd, cfg, a.train.seed, a.train.seed);
  if (a.data.empty()) throw ConfigError("train-embed needs a dataset directory (--data)");
  if (a.out.empty()) throw ConfigError("train-embed needs an output directory (--out)");
  require_exists(a.data, "dataset");
  a.train.validate();
  EmbedVariant variant = variant_from_name(a.variant);

  Dataset ds = load_dataset(a.data);
  auto [net, report] = train_embedding_net(ds, a.train, variant);
  std::optional<MatchThreshold> threshold;
  if (variant == EmbedVariant::whitebox && !a.no_calibrate) {
    threshold = calibrate_threshold(net, ds);
  }
  save_embedding_checkpoint(net, threshold, a.out);
  ojson resolved{{"command", "train-embed"}, {"data", a.data},
                 {"out", a.out},             {"variant", a.variant},
                 {"epochs", a.train.epochs}, {"batch", a.train.batch},
                 {"lr", a.train.lr},         {"seed", a.train.seed},
                 {"no_calibrate", a.no_calibrate}};
  write_json_file(resolved, fs::path(a.out) / "config.resolved.json");
  ojson rep{{"final_loss", report.final_loss},
            {"train_accuracy", report.train_accuracy},
            {"mean_genuine", report.mean_genuine},
            {"mean_impostor", report.mean_impostor},
            {"epochs", report.epochs}};
  if (threshold) {
    rep["threshold"] = {{"tau", threshold->tau},
                        {"eer", threshold->eer},
                        {"genuine_pairs", threshold->genuine_pairs},
                        {"impostor_pairs", threshold->impostor_pairs},
                        {"split", threshold->split}};
  }
  write_json_file(rep, fs::path(a.out) / "train_report.json");
  std::cout << "[train-embed] " << a.variant << " final loss " << report.final_loss
            << ", genuine/impostor " << report.mean_genuine << "/" << report.mean_impostor;
  if (threshold) std::cout << ", tau " << threshold->tau;
  std::cout << " -> " << a.out << "\n";
}

struct AttackArgs {
  std::string data, attr_net, embed_net, heldout_net, split = "test", out, config;
  int jobs = 0;
  std::vector<std::string> suppress, preserve;
  double confidence = 0.0, lambda_dist = 1.0, identity_weight = 1.0, identity_tau = 0.0;
  bool preserve_identity = false;
  int iters = 500;
  double lr = 0.01, eps_box = 1e-6;
  std::string score_space = "probability";
  uint64_t seed = 0;
};

void run_attack_cmd(const CLI::App& cmd, AttackArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : read_json_file(a.config);
  merge(cmd, "--data", cfg, "data", a.data);
  merge(cmd, "--attr-net", cfg, "attr_net", a.attr_net);
  merge(cmd, "--embed-net", cfg, "embed_net", a.embed_net);
  merge(cmd, "--heldout-net", cfg, "heldout_net", a.heldout_net);
  merge(cmd, "--split", cfg, "split", a.split);
  merge(cmd, "--jobs", cfg, "jobs", a.jobs);
  merge(cmd, "--out", cfg, "out", a.out);

  ojson rcfg = cfg;
  if (cmd.count("--suppress")) rcfg["suppress"] = a.suppress;
  if (cmd.count("--preserve")) rcfg["preserve"] = a.preserve;
  if (cmd.count("--confidence")) rcfg["confidence"] = a.confidence;
  if (cmd.count("--lambda-dist")) rcfg["lambda_dist"] = a.lambda_dist;
  if (cmd.count("--preserve-identity")) rcfg["preserve_identity"] = true;
  if (cmd.count("--identity-weight")) rcfg["identity_weight"] = a.identity_weight;
  if (cmd.count("--identity-tau")) rcfg["identity_tau"] = a.identity_tau;
  if (cmd.count("--iters")) rcfg["iterations"] = a.iters;
  if (cmd.count("--lr")) rcfg["lr"] = a.lr;
  if (cmd.count("--score-space")) rcfg["score_space"] = a.score_space;
  if (cmd.count("--eps-box")) rcfg["eps_box"] = a.eps_box;
  rcfg["seed"] = pick_seed(cmd, cfg, a.seed, 0);
  AttackRequest req = AttackRequest::from_json(rcfg);

  if (a.data.empty()) throw ConfigError("attack needs a dataset directory (--data)");
  if (a.attr_net.empty()) throw ConfigError("attack needs an attribute checkpoint (--attr-net)");
  if (a.out.empty()) throw ConfigError("attack needs an output directory (--out)");
  require_exists(a.data, "dataset");
  require_exists(a.attr_net, "attribute checkpoint");
  if (!a.embed_net.empty()) require_exists(a.embed_net, "embedder checkpoint");
  if (!a.heldout_net.empty()) require_exists(a.heldout_net, "held-out embedder checkpoint");

  Dataset ds = load_dataset(a.data);
  AttributeNet net = load_attribute_checkpoint(a.attr_net);
  require_schema(net.schema.hash(), ds, "attribute checkpoint");
  std::optional<EmbeddingNet> whitebox, heldout;
  std::optional<MatchThreshold> threshold;
  if (!a.embed_net.empty()) {
    auto [emb, thr] = load_embedding_checkpoint(a.embed_net);
    require_schema(emb.schema_hash, ds, "embedder checkpoint");
    whitebox = std::move(emb);
    threshold = thr;
  }
  if (!a.heldout_net.empty()) {
    auto [emb, thr] = load_embedding_checkpoint(a.heldout_net);
    (void)thr;
    require_schema(emb.schema_hash, ds, "held-out embedder checkpoint");
    heldout = std::move(emb);
  }
  AttackSpec spec = req.resolve(net.schema, threshold);
  Split split = split_from_name(a.split);
  int jobs = effective_jobs(a.jobs);

  AttackRequest echo = req;
  if (spec.identity) echo.identity_tau = spec.identity->tau;
  ojson resolved = echo.to_json();
  resolved["command"] = "attack";
  resolved["data"] = a.data;
  resolved["attr_net"] = a.attr_net;
  resolved["embed_net"] = a.embed_net.empty() ? ojson(nullptr) : ojson(a.embed_net);
  resolved["heldout_net"] = a.heldout_net.empty() ? ojson(nullptr) : ojson(a.heldout_net);
  resolved["split"] = a.split;
  resolved["jobs"] = jobs;
  resolved["out"] = a.out;
  resolved["resolved_attack_spec"] = attack_spec_to_json(spec);
  write_json_file(resolved, fs::path(a.out) / "config.resolved.json");

  BatchResult batch = batch_attack(ds, split, spec, net, whitebox ? &*whitebox : nullptr,
                                   heldout ? &*heldout : nullptr, jobs);
  save_batch_results(batch, spec, a.out);
  const BatchSummary& s = batch.summary;
  std::cout << "[attack] " << s.successes << "/" << s.eligible << " succeeded (rate "
            << s.success_rate << ", mean distortion " << s.mean_distortion << ") -> " << a.out
            << "\n";
}

struct EvalArgs {
  std::string data, attr_net, embed_net, heldout_net, results, split = "test", out, config;
  int bins = 10;
};

void run_eval(const CLI::App& cmd, EvalArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : read_json_file(a.config);
  merge(cmd, "--data", cfg, "data", a.data);
  merge(cmd, "--attr-net", cfg, "attr_net", a.attr_net);
  merge(cmd, "--embed-net", cfg, "embed_net", a.embed_net);
  merge(cmd, "--heldout-net", cfg, "heldout_net", a.heldout_net);
  merge(cmd, "--results", cfg, "results", a.results);
  merge(cmd, "--split", cfg, "split", a.split);
  merge(cmd, "--bins", cfg, "bins", a.bins);
  merge(cmd, "--out", cfg, "out", a.out);
  if (a.data.empty()) throw ConfigError("eval needs a dataset directory (--data)");
  if (a.attr_net.empty()) throw ConfigError("eval needs an attribute checkpoint (--attr-net)");
  if (a.results.empty()) throw ConfigError("eval needs an attack results directory (--results)");
  if (a.out.empty()) throw ConfigError("eval needs an output directory (--out)");
  require_exists(a.data, "dataset");
  require_exists(a.attr_net, "attribute checkpoint");
  require_exists(a.results, "attack results");
  if (!a.embed_net.empty()) require_exists(a.embed_net, "embedder checkpoint");
  if (!a.heldout_net.empty()) require_exists(a.heldout_net, "held-out embedder checkpoint");

  Dataset ds = load_dataset(a.data);
  AttributeNet net = load_attribute_checkpoint(a.attr_net);
  require_schema(net.schema.hash(), ds, "attribute checkpoint");
  std::optional<EmbeddingNet> whitebox, heldout;
  if (!a.embed_net.empty()) {
    auto [emb, thr] = load_embedding_checkpoint(a.embed_net);
    (void)thr;
    require_schema(emb.schema_hash, ds, "embedder checkpoint");
    whitebox = std::move(emb);
  }
  if (!a.heldout_net.empty()) {
    auto [emb, thr] = load_embedding_checkpoint(a.heldout_net);
    (void)thr;
    require_schema(emb.schema_hash, ds, "held-out embedder checkpoint");
    heldout = std::move(emb);
  }
  auto [batch, spec] = load_batch_results(a.results);
  Split split = split_from_name(a.split);

  ReportInputs inputs =
      evaluate_results(ds, net, whitebox ? &*whitebox : nullptr, heldout ? &*heldout : nullptr,
                       batch, spec, split, a.bins);
  ojson resolved{{"command", "eval"},
                 {"data", a.data},
                 {"attr_net", a.attr_net},
                 {"embed_net", a.embed_net.empty() ? ojson(nullptr) : ojson(a.embed_net)},
                 {"heldout_net", a.heldout_net.empty() ? ojson(nullptr) : ojson(a.heldout_net)},
                 {"results", a.results},
                 {"split", a.split},
                 {"bins", a.bins},
                 {"out", a.out}};
  write_json_file(resolved, fs::path(a.out) / "config.resolved.json");
  write_json_file(report_inputs_to_json(inputs), fs::path(a.out) / "metrics.json");
  std::cout << "[eval] " << inputs.confusions.size() << " confusion matrices, "
            << inputs.cmc.size() << " cmc curves -> " << (fs::path(a.out) / "metrics.json").string()
            << "\n";
}

struct ReportArgs {
  std::string metrics, out, config;
  bool svg = true;
};

void run_report_cmd(const CLI::App& cmd, ReportArgs& a) {
  ojson cfg = a.config.empty() ? ojson::object() : read_json_file(a.config);
  merge(cmd, "--metrics", cfg, "metrics", a.metrics);
  merge(cmd, "--out", cfg, "out", a.out);
  merge(cmd, "--svg", cfg, "svg", a.svg);
  if (a.metrics.empty()) throw ConfigError("report needs a metrics file (--metrics)");
  if (a.out.empty()) throw ConfigError("report needs an output directory (--out)");
  require_exists(a.metrics, "metrics file");

  ReportInputs inputs = report_inputs_from_json(read_json_file(a.metrics));
  write_report(inputs, a.out, a.svg);
  ojson resolved{
      {"command", "report"}, {"metrics", a.metrics}, {"out", a.out}, {"svg", a.svg}};
  write_json_file(resolved, fs::path(a.out) / "config.resolved.json");
  std::cout << "[report] -> " << (fs::path(a.out) / "report.json").string() << "\n";
}

struct ExperimentArgs {
  std::string config, out;
  uint64_t seed = 0;
  int jobs = 0;
};

void run_experiment_cmd(const CLI::App& cmd, ExperimentArgs& a) {
  ojson cfg = read_json_file(a.config);
  if (cmd.count("--jobs")) cfg["jobs"] = a.jobs;
  std::optional<uint64_t> cli_seed;
  if (cmd.count("--seed")) cli_seed = a.seed;
  std::string out = run_experiment(cfg, a.out, cli_seed);
  std::cout << "[run-experiment] artifacts in " << out << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attrcloak: gradient-optimized facial attribute anonymization pipeline"};
  app.require_subcommand(1);

  GenDataArgs gen;
  CLI::App* cg = app.add_subcommand("gen-data", "Generate a synthetic labeled face dataset");
  cg->add_option("--out", gen.out, "Output dataset directory");
  cg->add_option("--config", gen.config, "JSON config file");
  cg->add_option("--height", gen.spec.height, "Image height");
  cg->add_option("--width", gen.spec.width, "Image width");
  cg->add_option("--channels", gen.spec.channels, "Image channels");
  cg->add_option("--subjects", gen.spec.subjects, "Number of subjects");
  cg->add_option("--images-per-subject", gen.spec.images_per_subject, "Images per subject");
  cg->add_option("--pattern-amplitude", gen.spec.pattern_amplitude, "Attribute pattern strength");
  cg->add_option("--noise-sigma", gen.spec.noise_sigma, "Per-image noise level");
  cg->add_option("--band-overlap", gen.spec.band_overlap, "Attribute band overlap in [0,1)");
  cg->add_option("--seed", gen.spec.seed, "Generation seed");

  TrainArgs ta;
  ta.train = default_attribute_train();
  CLI::App* ca = app.add_subcommand("train-attr", "Train the multi-head attribute classifier");
  ca->add_option("--data", ta.data, "Dataset directory");
  ca->add_option("--out", ta.out, "Checkpoint output directory");
  ca->add_option("--config", ta.config, "JSON config file");
  ca->add_option("--epochs", ta.train.epochs, "Training epochs");
  ca->add_option("--batch", ta.train.batch, "Batch size");
  ca->add_option("--lr", ta.train.lr, "Learning rate");
  ca->add_option("--seed", ta.train.seed, "Training seed");

  TrainArgs te;
  te.train = default_embedding_train();
  CLI::App* ce = app.add_subcommand("train-embed", "Train an identity embedder");
  ce->add_option("--data", te.data, "Dataset directory");
  ce->add_option("--out", te.out, "Checkpoint output directory");
  ce->add_option("--config", te.config, "JSON config file");
  ce->add_option("--variant", te.variant, "whitebox or heldout");
  ce->add_option("--epochs", te.train.epochs, "Training epochs");
  ce->add_option("--batch", te.train.batch, "Batch size");
  ce->add_option("--lr", te.train.lr, "Learning rate");
  ce->add_option("--seed", te.train.seed, "Training seed");
  ce->add_flag("--no-calibrate", te.no_calibrate, "Skip match-threshold calibration");

  AttackArgs at;
  CLI::App* ct = app.add_subcommand("attack", "Anonymize a dataset split");
  ct->add_option("--data", at.data, "Dataset directory");
  ct->add_option("--attr-net", at.attr_net, "Attribute classifier checkpoint");
  ct->add_option("--embed-net", at.embed_net, "White-box embedder checkpoint");
  ct->add_option("--heldout-net", at.heldout_net, "Held-out embedder checkpoint");
  ct->add_option("--split", at.split, "Dataset split to attack");
  ct->add_option("--jobs", at.jobs, "Parallel samples (0: all processors)");
  ct->add_option("--out", at.out, "Attack output directory");
  ct->add_option("--config", at.config, "JSON config file");
  ct->add_option("--suppress", at.suppress, "Attribute to flip, name or name=class (repeatable)");
  ct->add_option("--preserve", at.preserve, "Attribute to hold fixed (repeatable)");
  ct->add_option("--confidence", at.confidence, "Margin c each constraint must clear");
  ct->add_option("--lambda-dist", at.lambda_dist, "Distortion weight in the loss");
  ct->add_flag("--preserve-identity", at.preserve_identity, "Keep the white-box embedding close");
  ct->add_option("--identity-weight", at.identity_weight, "Identity loss weight");
  ct->add_option("--identity-tau", at.identity_tau, "Identity feasibility distance bound");
  ct->add_option("--iters", at.iters, "Optimizer iterations");
  ct->add_option("--lr", at.lr, "Optimizer learning rate");
  ct->add_option("--score-space", at.score_space, "probability or logit margins");
  ct->add_option("--eps-box", at.eps_box, "Box clamp distance from 0 and 1");
  ct->add_option("--seed", at.seed, "Bookkeeping seed");

  EvalArgs ev;
  CLI::App* cv = app.add_subcommand("eval", "Compute metrics from attack results");
  cv->add_option("--data", ev.data, "Dataset directory");
  cv->add_option("--attr-net", ev.attr_net, "Attribute classifier checkpoint");
  cv->add_option("--embed-net", ev.embed_net, "White-box embedder checkpoint");
  cv->add_option("--heldout-net", ev.heldout_net, "Held-out embedder checkpoint");
  cv->add_option("--results", ev.results, "Attack output directory");
  cv->add_option("--split", ev.split, "Split the results came from");
  cv->add_option("--bins", ev.bins, "Score histogram bins");
  cv->add_option("--out", ev.out, "Metrics output directory");
  cv->add_option("--config", ev.config, "JSON config file");

  ReportArgs rp;
  CLI::App* cr = app.add_subcommand("report", "Render report artifacts from metrics");
  cr->add_option("--metrics", rp.metrics, "metrics.json produced by eval");
  cr->add_option("--out", rp.out, "Report output directory");
  cr->add_option("--config", rp.config, "JSON config file");
  cr->add_flag("--svg,!--no-svg", rp.svg, "Emit SVG charts");

  ExperimentArgs ex;
  CLI::App* cx = app.add_subcommand("run-experiment", "Run a full config-driven pipeline");
  cx->add_option("--config", ex.config, "Experiment config file")->required();
  cx->add_option("--out", ex.out, "Override the config output directory");
  cx->add_option("--seed", ex.seed, "Override the config seed");
  cx->add_option("--jobs", ex.jobs, "Override parallelism (0: all processors)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(cg)) run_gen_data(*cg, gen);
    if (app.got_subcommand(ca)) run_train_attr(*ca, ta);
    if (app.got_subcommand(ce)) run_train_embed(*ce, te);
    if (app.got_subcommand(ct)) run_attack_cmd(*ct, at);
    if (app.got_subcommand(cv)) run_eval(*cv, ev);
    if (app.got_subcommand(cr)) run_report_cmd(*cr, rp);
    if (app.got_subcommand(cx)) run_experiment_cmd(*cx, ex);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
