#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attrcloak/schema.hpp"
#include "attrcloak/synth.hpp"
#include "attrcloak/tape.hpp"
#include "attrcloak/tensor.hpp"

namespace attrcloak {

struct TrainConfig {
  int epochs = 0;
  int batch = 0;
  double lr = 0.0;
  uint64_t seed = 0;

  void validate() const;  // epochs, batch, lr must all be positive
};

// Frozen presets that meet the accuracy contracts on the default dataset.
TrainConfig default_attribute_train();
TrainConfig default_embedding_train();

// Shared-trunk multi-head attribute classifier:
// flatten -> affine(-> 256) -> relu -> affine(-> 128) -> relu,
// then per attribute i: affine(128 -> C_i) -> softmax.
struct AttributeNet {
  AttributeSchema schema;
  int64_t in_h = 0, in_w = 0, in_c = 0;
  int64_t trunk1 = 256, trunk2 = 128;
  uint64_t init_seed = 0;
  Tensor w1, b1, w2, b2;
  std::vector<Tensor> head_w, head_b;

  static AttributeNet init(const AttributeSchema& schema, int64_t h, int64_t w, int64_t c,
                           uint64_t seed, int64_t t1 = 256, int64_t t2 = 128);

  int64_t input_size() const { return in_h * in_w * in_c; }

  // Fixed parameter order: w1, b1, w2, b2, head<i>_w, head<i>_b.
  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
  std::vector<std::pair<std::string, Tensor*>> named_params();

  // Differentiable forward from a flat (n) or batched (B x n) input whose
  // parameters are already on the tape (leaves for training, constants
  // otherwise). Returns one probability Var per head; optionally the
  // pre-softmax logits.
  static std::vector<Var> forward_graph(Tape& tape, Var x, const std::vector<Var>& params,
                                        const AttributeSchema& schema,
                                        std::vector<Var>* logits_out = nullptr);

  // Convenience forward with parameters pushed as constants.
  std::vector<Var> forward(Tape& tape, Var x, std::vector<Var>* logits_out = nullptr) const;

  // Plain evaluation on one image tensor (any shape with matching size).
  std::vector<Tensor> predict(const Tensor& image) const;
  std::vector<int> predict_argmax(const Tensor& image) const;
};

struct AttrTrainReport {
  std::vector<double> train_accuracy, test_accuracy;  // per attribute
  double final_loss = 0.0;
  int epochs = 0;
};

// Minimizes summed per-head cross-entropy with Adam over the train split.
// Deterministic under fixed config.
std::pair<AttributeNet, AttrTrainReport> train_attribute_net(const Dataset& ds,
                                                             const TrainConfig& cfg);

enum class EmbedVariant { whitebox, heldout };
const char* variant_name(EmbedVariant v);
EmbedVariant variant_from_name(const std::string& s);

// Identity embedder: trunk like the classifier (whitebox 256/128, heldout
// 192/96) -> affine(-> 64) -> L2 normalize. The subject-classification head
// exists only for training and stays dormant afterward.
struct EmbeddingNet {
  EmbedVariant variant = EmbedVariant::whitebox;
  int subjects = 0;
  int64_t in_h = 0, in_w = 0, in_c = 0;
  int64_t trunk1 = 256, trunk2 = 128, dim = 64;
  uint64_t init_seed = 0;
  std::string schema_hash;  // dataset schema this net was trained against
  Tensor w1, b1, w2, b2, we, be;
  Tensor head_w, head_b;

  static EmbeddingNet init(EmbedVariant variant, int subjects, int64_t h, int64_t w, int64_t c,
                           uint64_t seed);

  int64_t input_size() const { return in_h * in_w * in_c; }

  std::vector<std::pair<std::string, const Tensor*>> named_params() const;
  std::vector<std::pair<std::string, Tensor*>> named_params();

  // Unit-norm embedding of a flat (n) input; parameters already on the tape.
  static Var embed_graph(Tape& tape, Var x, const std::vector<Var>& params);
  // Training-head logits over subjects from the normalized embedding.
  static Var head_graph(Tape& tape, Var embedding, const std::vector<Var>& params);

  Var embed(Tape& tape, Var x) const;
  Tensor embed_value(const Tensor& image) const;
};

struct EmbedTrainReport {
  double final_loss = 0.0;
  double train_accuracy = 0.0;      // subject classification on train split
  double mean_genuine = 0.0;        // test-split pair distances
  double mean_impostor = 0.0;
  int epochs = 0;
};

std::pair<EmbeddingNet, EmbedTrainReport> train_embedding_net(const Dataset& ds,
                                                              const TrainConfig& cfg,
                                                              EmbedVariant variant);

// Euclidean distance between two equal-length vectors ([0,2] for unit inputs).
double identity_distance(const Tensor& e1, const Tensor& e2);

struct MatchThreshold {
  double tau = 0.0;
  double eer = 0.0;
  int genuine_pairs = 0;
  int impostor_pairs = 0;
  std::string split = "train";
};

// Equal-error-rate threshold from explicit pair-distance lists. Candidates
// are the observed distances; among candidates with the same |FAR - FRR| the
// smallest wins. Errors when either list is empty.
MatchThreshold eer_threshold(const std::vector<double>& genuine,
                             const std::vector<double>& impostor);

// eer_threshold over all train-split pairs of the dataset.
MatchThreshold calibrate_threshold(const EmbeddingNet& net, const Dataset& ds);

// Checkpoints: <dir>/model.json + <dir>/weights/<param>.ten (f32).
void save_attribute_checkpoint(const AttributeNet& net, const std::string& dir);
AttributeNet load_attribute_checkpoint(const std::string& dir);
void save_embedding_checkpoint(const EmbeddingNet& net,
                               const std::optional<MatchThreshold>& threshold,
                               const std::string& dir);
std::pair<EmbeddingNet, std::optional<MatchThreshold>> load_embedding_checkpoint(
    const std::string& dir);

}  // namespace attrcloak
