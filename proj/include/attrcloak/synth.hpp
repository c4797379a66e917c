#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attrcloak/schema.hpp"
#include "attrcloak/tensor.hpp"

namespace attrcloak {

// Recipe for a synthetic face-stand-in dataset. Each attribute writes a
// fixed pseudo-random pattern into its own horizontal band; each subject
// carries a smooth per-subject texture; labels are uniform per image.
struct SyntheticSpec {
  int64_t height = 32;
  int64_t width = 32;
  int64_t channels = 3;
  int subjects = 40;
  int images_per_subject = 10;
  AttributeSchema schema = AttributeSchema::default_schema();
  double pattern_amplitude = 0.3;
  double noise_sigma = 0.05;
  double band_overlap = 0.0;  // rho in [0,1): widens bands symmetrically
  uint64_t seed = 20260822;

  void validate() const;
  int64_t pixels() const { return height * width * channels; }
};

enum class Split { train, test, gallery, probe };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct LabeledSample {
  int id = -1;
  int subject = -1;
  std::vector<int> labels;
  Split split = Split::train;
  Tensor image;  // H x W x C, values in [0,1], f32-quantized
};

struct Dataset {
  SyntheticSpec spec;
  std::vector<LabeledSample> samples;
  // Disjoint id lists covering every sample exactly once.
  std::vector<int> train_ids, test_ids, gallery_ids, probe_ids;

  const AttributeSchema& schema() const { return spec.schema; }
  const std::vector<int>& ids(Split s) const;
  const LabeledSample& by_id(int id) const;
};

// Row range [lo, hi) of attribute band i out of k, near-equal partition.
std::pair<int64_t, int64_t> band_rows(int64_t height, int k, int i);
// Same band widened symmetrically by overlap fraction rho, clamped to the image.
std::pair<int64_t, int64_t> band_rows_widened(int64_t height, int k, int i, double rho);

// Fixed pattern a given (attribute, class) stamps into its band; zero outside.
Tensor attribute_pattern(const SyntheticSpec& spec, int attr, int cls);
// Smooth per-subject texture field in [0,1].
Tensor identity_texture(const SyntheticSpec& spec, int subject);

// Per-subject image roles by index: 0 gallery, 1-2 train, 3 probe, rest test.
Split split_for_image_index(int j);

Dataset generate_dataset(const SyntheticSpec& spec);

// Layout: <dir>/manifest.json + <dir>/images/<id>.ten. Round trips are
// byte-exact: what load returns is exactly what save wrote.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace attrcloak
