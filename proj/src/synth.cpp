#include "attrcloak/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "attrcloak/errors.hpp"
#include "attrcloak/json_util.hpp"
#include "attrcloak/rng.hpp"
#include "attrcloak/ten_io.hpp"

namespace fs = std::filesystem;

namespace attrcloak {

namespace {
// RNG stream tags; the sub-ids keep every (subject, attribute, sample) lane
// independent so any single sample can be regenerated in isolation.
constexpr uint64_t kTexTag = 1;
constexpr uint64_t kPatTag = 2;
constexpr uint64_t kLabelTag = 3;
constexpr uint64_t kNoiseTag = 4;
constexpr int kTexGrid = 5;
}  // namespace

void SyntheticSpec::validate() const {
  if (height < 1 || width < 1 || channels < 1)
    throw ConfigError("synth: image dims must be positive");
  if (subjects < 1) throw ConfigError("synth: zero subjects");
  if (images_per_subject < 1) throw ConfigError("synth: zero images per subject");
  schema.validate();
  if (height < schema.k())
    throw ConfigError("synth: height " + std::to_string(height) + " cannot host " +
                      std::to_string(schema.k()) + " attribute bands");
  if (!(pattern_amplitude >= 0.0)) throw ConfigError("synth: pattern amplitude must be >= 0");
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth: noise sigma must be >= 0");
  if (!(band_overlap >= 0.0 && band_overlap < 1.0))
    throw ConfigError("synth: band overlap must lie in [0, 1)");
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::test: return "test";
    case Split::gallery: return "gallery";
    case Split::probe: return "probe";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  if (name == "gallery") return Split::gallery;
  if (name == "probe") return Split::probe;
  throw ConfigError("unknown split '" + name + "'");
}

const std::vector<int>& Dataset::ids(Split s) const {
  switch (s) {
    case Split::train: return train_ids;
    case Split::test: return test_ids;
    case Split::gallery: return gallery_ids;
    case Split::probe: return probe_ids;
  }
  throw Error("ids: bad split");
}

const LabeledSample& Dataset::by_id(int id) const {
  if (id < 0 || id >= static_cast<int>(samples.size()))
    throw Error("dataset: sample id " + std::to_string(id) + " out of range");
  return samples[static_cast<size_t>(id)];
}

std::pair<int64_t, int64_t> band_rows(int64_t height, int k, int i) {
  return {i * height / k, (static_cast<int64_t>(i) + 1) * height / k};
}

std::pair<int64_t, int64_t> band_rows_widened(int64_t height, int k, int i, double rho) {
  auto [lo, hi] = band_rows(height, k, i);
  int64_t extra = static_cast<int64_t>(std::floor(rho * static_cast<double>(height) /
                                                  (2.0 * static_cast<double>(k))));
  lo = std::max<int64_t>(0, lo - extra);
  hi = std::min<int64_t>(height, hi + extra);
  return {lo, hi};
}

Tensor attribute_pattern(const SyntheticSpec& spec, int attr, int cls) {
  CounterRng rng(spec.seed);
  Tensor p({spec.height, spec.width, spec.channels});
  auto [lo, hi] = band_rows_widened(spec.height, spec.schema.k(), attr, spec.band_overlap);
  double* d = p.mut();
  uint64_t stream = stream_id(kPatTag, static_cast<uint64_t>(attr), static_cast<uint64_t>(cls));
  for (int64_t y = lo; y < hi; ++y)
    for (int64_t x = 0; x < spec.width; ++x)
      for (int64_t c = 0; c < spec.channels; ++c) {
        int64_t flat = (y * spec.width + x) * spec.channels + c;
        d[flat] = rng.uniform(stream, static_cast<uint64_t>(flat), -spec.pattern_amplitude,
                              spec.pattern_amplitude);
      }
  return p;
}

Tensor identity_texture(const SyntheticSpec& spec, int subject) {
  CounterRng rng(spec.seed);
  // Coarse random grid per channel, bilinearly upsampled: smooth by construction.
  Tensor t({spec.height, spec.width, spec.channels});
  double* d = t.mut();
  const int g = kTexGrid;
  std::vector<double> grid(static_cast<size_t>(g * g * spec.channels));
  for (int64_t c = 0; c < spec.channels; ++c) {
    uint64_t stream = stream_id(kTexTag, static_cast<uint64_t>(subject), static_cast<uint64_t>(c));
    for (int i = 0; i < g * g; ++i)
      grid[static_cast<size_t>(c * g * g + i)] = rng.uniform(stream, static_cast<uint64_t>(i));
  }
  for (int64_t y = 0; y < spec.height; ++y) {
    double fy = spec.height > 1
                    ? static_cast<double>(y) * (g - 1) / static_cast<double>(spec.height - 1)
                    : 0.0;
    int64_t y0 = static_cast<int64_t>(fy);
    int64_t y1 = std::min<int64_t>(y0 + 1, g - 1);
    double wy = fy - static_cast<double>(y0);
    for (int64_t x = 0; x < spec.width; ++x) {
      double fx = spec.width > 1
                      ? static_cast<double>(x) * (g - 1) / static_cast<double>(spec.width - 1)
                      : 0.0;
      int64_t x0 = static_cast<int64_t>(fx);
      int64_t x1 = std::min<int64_t>(x0 + 1, g - 1);
      double wx = fx - static_cast<double>(x0);
      for (int64_t c = 0; c < spec.channels; ++c) {
        const double* gc = grid.data() + c * g * g;
        double v00 = gc[y0 * g + x0], v01 = gc[y0 * g + x1];
        double v10 = gc[y1 * g + x0], v11 = gc[y1 * g + x1];
        double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
        d[(y * spec.width + x) * spec.channels + c] = v;
      }
    }
  }
  return t;
}

Split split_for_image_index(int j) {
  if (j == 0) return Split::gallery;
  if (j <= 2) return Split::train;
  if (j == 3) return Split::probe;
  return Split::test;
}

Dataset generate_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  int k = spec.schema.k();

  std::vector<Tensor> textures;
  textures.reserve(static_cast<size_t>(spec.subjects));
  for (int s = 0; s < spec.subjects; ++s) textures.push_back(identity_texture(spec, s));

  // Patterns cached per (attribute, class).
  std::vector<std::vector<Tensor>> patterns(static_cast<size_t>(k));
  for (int a = 0; a < k; ++a)
    for (int c = 0; c < spec.schema.attrs[static_cast<size_t>(a)].classes; ++c)
      patterns[static_cast<size_t>(a)].push_back(attribute_pattern(spec, a, c));

  CounterRng rng(spec.seed);
  int64_t n_pix = spec.pixels();
  for (int s = 0; s < spec.subjects; ++s) {
    for (int j = 0; j < spec.images_per_subject; ++j) {
      LabeledSample smp;
      smp.id = s * spec.images_per_subject + j;
      smp.subject = s;
      smp.split = split_for_image_index(j);
      uint64_t label_stream = stream_id(kLabelTag, static_cast<uint64_t>(smp.id));
      for (int a = 0; a < k; ++a)
        smp.labels.push_back(static_cast<int>(rng.uniform_int(
            label_stream, static_cast<uint64_t>(a),
            static_cast<uint64_t>(spec.schema.attrs[static_cast<size_t>(a)].classes))));

      Tensor img({spec.height, spec.width, spec.channels});
      double* d = img.mut();
      const double* tex = textures[static_cast<size_t>(s)].data();
      for (int64_t i = 0; i < n_pix; ++i) d[i] = 0.5 * tex[i];
      for (int a = 0; a < k; ++a) {
        const double* pat =
            patterns[static_cast<size_t>(a)][static_cast<size_t>(smp.labels[static_cast<size_t>(a)])]
                .data();
        for (int64_t i = 0; i < n_pix; ++i) d[i] += pat[i];
      }
      uint64_t noise_stream = stream_id(kNoiseTag, static_cast<uint64_t>(smp.id));
      for (int64_t i = 0; i < n_pix; ++i) {
        double v = d[i] + spec.noise_sigma * rng.gauss(noise_stream, static_cast<uint64_t>(i));
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        // Quantize to storage precision now: in-memory and on-disk data agree.
        d[i] = quantize_f32(v);
      }
      smp.image = std::move(img);

      switch (smp.split) {
        case Split::train: ds.train_ids.push_back(smp.id); break;
        case Split::test: ds.test_ids.push_back(smp.id); break;
        case Split::gallery: ds.gallery_ids.push_back(smp.id); break;
        case Split::probe: ds.probe_ids.push_back(smp.id); break;
      }
      ds.samples.push_back(std::move(smp));
    }
  }
  return ds;
}

namespace {

ojson spec_to_json(const SyntheticSpec& s) {
  ojson j;
  j["height"] = s.height;
  j["width"] = s.width;
  j["channels"] = s.channels;
  j["subjects"] = s.subjects;
  j["images_per_subject"] = s.images_per_subject;
  j["pattern_amplitude"] = s.pattern_amplitude;
  j["noise_sigma"] = s.noise_sigma;
  j["band_overlap"] = s.band_overlap;
  j["seed"] = s.seed;
  return j;
}

SyntheticSpec spec_from_json(const ojson& j, AttributeSchema schema) {
  SyntheticSpec s;
  s.height = j.at("height").get<int64_t>();
  s.width = j.at("width").get<int64_t>();
  s.channels = j.at("channels").get<int64_t>();
  s.subjects = j.at("subjects").get<int>();
  s.images_per_subject = j.at("images_per_subject").get<int>();
  s.pattern_amplitude = j.at("pattern_amplitude").get<double>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.band_overlap = j.at("band_overlap").get<double>();
  s.seed = j.at("seed").get<uint64_t>();
  s.schema = std::move(schema);
  return s;
}

}  // namespace

ojson schema_to_json(const AttributeSchema& schema) {
  ojson arr = ojson::array();
  for (const AttributeDef& a : schema.attrs) {
    ojson e;
    e["name"] = a.name;
    e["classes"] = a.classes;
    arr.push_back(e);
  }
  return arr;
}

AttributeSchema schema_from_json(const ojson& arr) {
  AttributeSchema s;
  for (const auto& e : arr)
    s.attrs.push_back({e.at("name").get<std::string>(), e.at("classes").get<int>()});
  s.validate();
  return s;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "images", ec);
  if (ec) throw IoError("save dataset: cannot create " + (root / "images").string());

  ojson manifest;
  manifest["spec"] = spec_to_json(ds.spec);
  manifest["schema"] = schema_to_json(ds.spec.schema);
  ojson samples = ojson::array();
  for (const LabeledSample& s : ds.samples) {
    std::string file = "images/" + std::to_string(s.id) + ".ten";
    ojson e;
    e["id"] = s.id;
    e["subject"] = s.subject;
    e["labels"] = s.labels;
    e["split"] = split_name(s.split);
    e["file"] = file;
    samples.push_back(e);
    write_ten((root / file).string(), s.image);
  }
  manifest["samples"] = samples;
  std::ofstream f(root / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("save dataset: cannot write manifest.json in " + dir);
  f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  fs::path root(dir);
  std::ifstream f(root / "manifest.json", std::ios::binary);
  if (!f) throw IoError("load dataset: missing manifest.json in " + dir);
  ojson manifest;
  try {
    f >> manifest;
  } catch (const std::exception& e) {
    throw IoError("load dataset: malformed manifest.json: " + std::string(e.what()));
  }

  Dataset ds;
  try {
    AttributeSchema schema = schema_from_json(manifest.at("schema"));
    ds.spec = spec_from_json(manifest.at("spec"), std::move(schema));
  } catch (const ojson::exception& e) {
    throw IoError("load dataset: manifest missing fields: " + std::string(e.what()));
  }
  ds.spec.validate();

  int k = ds.spec.schema.k();
  for (const auto& e : manifest.at("samples")) {
    LabeledSample s;
    try {
      s.id = e.at("id").get<int>();
      s.subject = e.at("subject").get<int>();
      s.labels = e.at("labels").get<std::vector<int>>();
      s.split = split_from_name(e.at("split").get<std::string>());
    } catch (const ojson::exception& ex) {
      throw IoError("load dataset: malformed sample entry: " + std::string(ex.what()));
    }
    std::string file = e.at("file").get<std::string>();
    if (static_cast<int>(s.labels.size()) != k)
      throw IoError("load dataset: sample " + std::to_string(s.id) + " has " +
                    std::to_string(s.labels.size()) + " labels, schema expects " +
                    std::to_string(k));
    for (int a = 0; a < k; ++a) {
      int c = ds.spec.schema.attrs[static_cast<size_t>(a)].classes;
      if (s.labels[static_cast<size_t>(a)] < 0 || s.labels[static_cast<size_t>(a)] >= c)
        throw IoError("load dataset: sample " + std::to_string(s.id) + " label out of range for '" +
                      ds.spec.schema.attrs[static_cast<size_t>(a)].name + "'");
    }
    fs::path ten = root / file;
    if (!fs::exists(ten))
      throw IoError("load dataset: manifest lists missing tensor file " + file);
    s.image = read_ten(ten.string());
    std::vector<int64_t> want{ds.spec.height, ds.spec.width, ds.spec.channels};
    if (s.image.dims() != want)
      throw IoError("load dataset: " + file + " has shape " + s.image.shape_str() +
                    ", manifest spec expects " + shape_str(want));
    if (static_cast<int>(ds.samples.size()) != s.id)
      throw IoError("load dataset: sample ids must be dense and ordered; got " +
                    std::to_string(s.id) + " at position " + std::to_string(ds.samples.size()));
    switch (s.split) {
      case Split::train: ds.train_ids.push_back(s.id); break;
      case Split::test: ds.test_ids.push_back(s.id); break;
      case Split::gallery: ds.gallery_ids.push_back(s.id); break;
      case Split::probe: ds.probe_ids.push_back(s.id); break;
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace attrcloak
