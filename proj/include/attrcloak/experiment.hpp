#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attrcloak/attack.hpp"
#include "attrcloak/metrics.hpp"
#include "attrcloak/nets.hpp"
#include "attrcloak/synth.hpp"

namespace attrcloak {

// Name-level attack description as it appears on the CLI and in experiment
// configs; indices only exist after resolving against a schema.
struct AttackRequest {
  // Attribute name -> fixed target class, or nullopt for any-other.
  std::vector<std::pair<std::string, std::optional<int>>> suppress;
  std::vector<std::string> preserve;
  double confidence = 0.0;
  double lambda_dist = 1.0;
  bool preserve_identity = false;
  double identity_weight = 1.0;
  std::optional<double> identity_tau;  // absent: use the calibrated threshold
  int iterations = 500;
  double lr = 0.01;
  std::string score_space = "probability";
  double eps_box = 1e-6;
  uint64_t seed = 0;

  // threshold supplies tau when preserve_identity is set without an explicit
  // tau; ConfigError when neither is available.
  AttackSpec resolve(const AttributeSchema& schema,
                     const std::optional<MatchThreshold>& threshold) const;
  ojson to_json() const;
  static AttackRequest from_json(const ojson& j);
};

// Seed from the ATTRCLOAK_SEED environment variable, when set and numeric.
std::optional<uint64_t> env_seed();

// Turns a finished batch into every report artifact: confusion matrices and
// true-class score histograms per constrained attribute, CMC/ROC against the
// gallery for each supplied embedder, quality stats, and a context block.
ReportInputs evaluate_results(const Dataset& ds, const AttributeNet& net,
                              const EmbeddingNet* whitebox, const EmbeddingNet* heldout,
                              const BatchResult& results, const AttackSpec& spec, Split split,
                              int bins = 10);

ojson report_inputs_to_json(const ReportInputs& in);
ReportInputs report_inputs_from_json(const ojson& j);

// End-to-end pipeline from a config document: dataset (generate or load),
// nets (train or load), batch attack, evaluation, report. Returns the output
// directory. Stage failures rethrow with the stage name prefixed.
// cli_seed overrides the config seed (command line beats config file).
std::string run_experiment(const ojson& config, const std::string& out_override = "",
                           std::optional<uint64_t> cli_seed = std::nullopt);

}  // namespace attrcloak
