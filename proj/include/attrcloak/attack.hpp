#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "attrcloak/json_util.hpp"
#include "attrcloak/nets.hpp"
#include "attrcloak/synth.hpp"
#include "attrcloak/tensor.hpp"

namespace attrcloak {

// How a suppressed attribute must move away from its true class.
struct SuppressTarget {
  bool any_other = true;  // flip to whichever rival currently scores best
  int target_class = -1;  // fixed class when any_other is false

  static SuppressTarget AnyOther() { return {true, -1}; }
  static SuppressTarget Specific(int cls) { return {false, cls}; }
};

struct IdentitySpec {
  double weight = 1.0;  // loss weight on the embedding distance
  double tau = 0.0;     // feasibility: whitebox distance <= tau
};

enum class ScoreSpace { probability, logit };

struct AttackSpec {
  std::map<int, SuppressTarget> suppress;  // attribute index -> target
  std::set<int> preserve;                  // attribute indices held fixed
  double confidence = 0.0;                 // margin c in [0, 1]
  double lambda_dist = 1.0;
  std::optional<IdentitySpec> identity;
  int iterations = 10000;
  double lr = 0.01;
  // Space the margin losses (and the admission margin gate) are computed in.
  ScoreSpace score_space = ScoreSpace::probability;
  double eps_box = 1e-6;
  // Carried for bookkeeping; the optimization is deterministic and does not
  // consume randomness.
  uint64_t seed = 0;

  void validate(const AttributeSchema& schema) const;
};

ojson attack_spec_to_json(const AttackSpec& spec);
AttackSpec attack_spec_from_json(const ojson& j);

// w0 such that reparameterize(I, w0) = clamp(I, eps, 1 - eps).
Tensor init_perturbation(const Tensor& image, double eps_box);

// T = (tanh(I + w) + 1) / 2, elementwise.
Tensor reparameterize(const Tensor& image, const Tensor& w);
// Same map on a tape: image enters as a constant, w as given.
Var reparameterize_graph(Tape& tape, const Tensor& image, Var w);

// Margin loss over one attribute's scores (probabilities or logits):
// max(best rival - target, -c), rivals excluding the target class.
enum class ObjectiveMode { suppress_any_other, suppress_specific, preserve };
double attribute_objective(const std::vector<double>& scores, int true_class, ObjectiveMode mode,
                           int specific_class, double c);

// Full loss at a given w; identity pulls T's whitebox embedding toward
// embed_i when enabled in the spec. grad_out, when given, receives dL/dw.
double total_objective(const Tensor& image, const Tensor& w, const AttackSpec& spec,
                       const AttributeNet& net, const EmbeddingNet* whitebox,
                       const std::vector<int>& labels, Tensor* grad_out = nullptr);

struct ConstraintVerdicts {
  std::vector<std::pair<int, bool>> suppressed;  // attribute index -> satisfied
  std::vector<std::pair<int, bool>> preserved;
  std::optional<bool> identity_ok;
  bool feasible = false;
};

// Argmax-only feasibility of T against the spec; margins live in the loss.
ConstraintVerdicts check_constraints(const AttributeNet& net, const EmbeddingNet* whitebox,
                                     const Tensor& image, const Tensor& anonymized,
                                     const AttackSpec& spec, const std::vector<int>& labels);

struct AttrRecord {
  std::string name;
  int true_class = -1;
  int pre_argmax = -1;
  double pre_score = 0.0;  // probability of pre_argmax
  int post_argmax = -1;
  double post_score = 0.0;
};

struct IdentityReport {
  bool has_whitebox = false;
  double whitebox_pre = 0.0;  // d(emb(I), emb(quantized clamp of I))
  double whitebox_post = 0.0;
  bool has_heldout = false;
  double heldout_pre = 0.0;
  double heldout_post = 0.0;
};

struct AttackResult {
  bool success = false;
  Tensor anonymized;     // emitted T, f32-quantized, strictly inside (0, 1)
  Tensor perturbation;   // w producing the emitted T
  double distortion = 0.0;  // squared L2 between image and emitted T
  double psnr = 0.0;
  int iterations_to_first_feasible = -1;  // -1: never feasible
  std::vector<AttrRecord> attributes;     // every schema attribute
  std::optional<IdentityReport> identity;
  // (iteration, distortion) each time the best feasible iterate improved.
  std::vector<std::pair<int, double>> feasible_trace;
};

// Runs exactly spec.iterations Adam steps on w; among quantized iterates that
// pass check_constraints and meet every constrained margin >= c, the one with
// minimum distortion is emitted. Errors if any constrained attribute is
// misclassified on the original image.
AttackResult run_attack(const AttributeNet& net, const EmbeddingNet* whitebox,
                        const EmbeddingNet* heldout, const LabeledSample& sample,
                        const AttackSpec& spec);

struct BatchSummary {
  int requested = 0;
  int eligible = 0;
  int filtered_out = 0;
  int successes = 0;
  double success_rate = 0.0;       // successes / eligible
  double mean_distortion = 0.0;    // over successes
  double mean_psnr = 0.0;          // over successes
  double mean_iterations_to_first_feasible = 0.0;  // over feasible runs
};

struct BatchResult {
  std::vector<std::pair<int, AttackResult>> per_sample;  // sample id -> result
  BatchSummary summary;
};

// Attacks every eligible sample of the split (correctly classified on all
// constrained attributes; SpecificClass targets equal to the true class make
// a sample ineligible). jobs > 1 runs samples concurrently; results are
// identical to the sequential order.
BatchResult batch_attack(const Dataset& ds, Split split, const AttackSpec& spec,
                         const AttributeNet& net, const EmbeddingNet* whitebox,
                         const EmbeddingNet* heldout, int jobs = 1);

// Layout: <dir>/results.json + anonymized/<id>.ten + perturbation/<id>.ten.
void save_batch_results(const BatchResult& out, const AttackSpec& spec, const std::string& dir);
// Rebuilds results from disk (feasible traces are not persisted).
std::pair<BatchResult, AttackSpec> load_batch_results(const std::string& dir);

}  // namespace attrcloak
