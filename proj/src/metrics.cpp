#include "attrcloak/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "attrcloak/errors.hpp"

namespace attrcloak {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Tensor ConfusionMatrix::percent() const {
  Tensor out = counts;
  double* p = out.mut();
  for (int c = 0; c < classes; ++c) {
    double row = 0.0;
    for (int k = 0; k < classes; ++k) row += p[c * classes + k];
    if (row <= 0.0) continue;
    for (int k = 0; k < classes; ++k) p[c * classes + k] *= 100.0 / row;
  }
  return out;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, const std::string& attribute,
                                 int classes) {
  if (classes < 2) throw ConfigError("confusion matrix needs at least 2 classes");
  if (predictions.size() != truths.size()) {
    throw ShapeError("confusion matrix: " + std::to_string(predictions.size()) +
                     " predictions vs " + std::to_string(truths.size()) + " truths");
  }
  ConfusionMatrix m;
  m.attribute = attribute;
  m.classes = classes;
  m.counts = Tensor({classes, classes});
  double* p = m.counts.mut();
  for (size_t i = 0; i < truths.size(); ++i) {
    int t = truths[i], q = predictions[i];
    if (t < 0 || t >= classes || q < 0 || q >= classes) {
      throw ConfigError("confusion matrix: label out of range [0, " + std::to_string(classes) +
                        ") at index " + std::to_string(i));
    }
    p[t * classes + q] += 1.0;
  }
  return m;
}

HistogramSeries score_histogram(const std::vector<double>& scores, int bins,
                                const std::string& label) {
  if (bins < 2) throw ConfigError("histogram needs at least 2 bins");
  if (scores.empty()) throw Error("histogram input is empty");
  HistogramSeries h;
  h.label = label;
  h.bins = bins;
  h.counts.assign(static_cast<size_t>(bins), 0);
  for (double s : scores) {
    if (!(s >= 0.0) || !(s <= 1.0)) {
      throw ConfigError("histogram score " + std::to_string(s) + " outside [0, 1]");
    }
    int idx = std::min(static_cast<int>(s * bins), bins - 1);
    ++h.counts[static_cast<size_t>(idx)];
  }
  return h;
}

CmcCurve cmc_curve(const std::vector<Tensor>& gallery_embeddings,
                   const std::vector<int>& gallery_subjects,
                   const std::vector<Tensor>& probe_embeddings,
                   const std::vector<int>& probe_subjects) {
  size_t g = gallery_embeddings.size();
  if (g == 0) throw Error("cmc: the gallery is empty");
  if (gallery_subjects.size() != g) {
    throw ShapeError("cmc: gallery has " + std::to_string(g) + " embeddings and " +
                     std::to_string(gallery_subjects.size()) + " subject ids");
  }
  if (probe_embeddings.size() != probe_subjects.size()) {
    throw ShapeError("cmc: probe has " + std::to_string(probe_embeddings.size()) +
                     " embeddings and " + std::to_string(probe_subjects.size()) + " subject ids");
  }
  if (probe_embeddings.empty()) throw Error("cmc: the probe set is empty");
  for (size_t i = 0; i + 1 < g; ++i) {
    for (size_t j = i + 1; j < g; ++j) {
      if (gallery_subjects[i] == gallery_subjects[j]) {
        throw ConfigError("cmc: subject " + std::to_string(gallery_subjects[i]) +
                          " appears twice in the gallery");
      }
    }
  }

  std::vector<int64_t> at_rank(g, 0);
  for (size_t p = 0; p < probe_embeddings.size(); ++p) {
    bool known = false;
    for (size_t j = 0; j < g; ++j) known = known || gallery_subjects[j] == probe_subjects[p];
    if (!known) {
      throw ConfigError("cmc: probe subject " + std::to_string(probe_subjects[p]) +
                        " is not in the gallery");
    }
    std::vector<std::pair<double, int>> order;  // (distance, subject)
    order.reserve(g);
    for (size_t j = 0; j < g; ++j) {
      const Tensor& a = probe_embeddings[p];
      const Tensor& b = gallery_embeddings[j];
      if (a.size() != b.size()) {
        throw ShapeError("cmc: embedding size mismatch (" + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()) + ")");
      }
      double s = 0.0;
      for (int64_t t = 0; t < a.size(); ++t) {
        double d = a.data()[t] - b.data()[t];
        s += d * d;
      }
      order.emplace_back(std::sqrt(s), gallery_subjects[j]);
    }
    std::sort(order.begin(), order.end());
    for (size_t r = 0; r < g; ++r) {
      if (order[r].second == probe_subjects[p]) {
        ++at_rank[r];
        break;
      }
    }
  }

  CmcCurve curve;
  curve.rate.resize(g);
  int64_t cum = 0;
  for (size_t r = 0; r < g; ++r) {
    cum += at_rank[r];
    curve.rate[r] = static_cast<double>(cum) / static_cast<double>(probe_embeddings.size());
  }
  return curve;
}

RocCurve roc_curve(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  if (genuine.empty()) throw Error("roc: the genuine distance list is empty");
  if (impostor.empty()) throw Error("roc: the impostor distance list is empty");
  std::vector<double> thresholds;
  thresholds.reserve(genuine.size() + impostor.size());
  thresholds.insert(thresholds.end(), genuine.begin(), genuine.end());
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<double> gs = genuine, is = impostor;
  std::sort(gs.begin(), gs.end());
  std::sort(is.begin(), is.end());

  RocCurve curve;
  curve.far.push_back(0.0);
  curve.tar.push_back(0.0);
  for (double t : thresholds) {
    auto gle = std::upper_bound(gs.begin(), gs.end(), t) - gs.begin();
    auto ile = std::upper_bound(is.begin(), is.end(), t) - is.begin();
    curve.tar.push_back(static_cast<double>(gle) / static_cast<double>(gs.size()));
    curve.far.push_back(static_cast<double>(ile) / static_cast<double>(is.size()));
  }
  double auc = 0.0;
  for (size_t i = 1; i < curve.far.size(); ++i) {
    auc += (curve.far[i] - curve.far[i - 1]) * 0.5 * (curve.tar[i] + curve.tar[i - 1]);
  }
  curve.auc = auc;
  return curve;
}

QualityStats quality_stats(const std::vector<Tensor>& originals,
                           const std::vector<Tensor>& anonymized) {
  if (originals.size() != anonymized.size()) {
    throw ShapeError("quality stats: " + std::to_string(originals.size()) + " originals vs " +
                     std::to_string(anonymized.size()) + " anonymized images");
  }
  if (originals.empty()) throw Error("quality stats: no image pairs");
  QualityStats q;
  for (size_t i = 0; i < originals.size(); ++i) {
    const Tensor& a = originals[i];
    const Tensor& b = anonymized[i];
    if (a.dims() != b.dims()) {
      throw ShapeError("quality stats: shape mismatch at pair " + std::to_string(i) + " (" +
                       shape_str(a.dims()) + " vs " + shape_str(b.dims()) + ")");
    }
    double s = 0.0;
    for (int64_t t = 0; t < a.size(); ++t) {
      double d = a.data()[t] - b.data()[t];
      s += d * d;
    }
    double mse = s / static_cast<double>(a.size());
    q.sq_l2.push_back(s);
    q.psnr.push_back(mse > 0.0 ? 10.0 * std::log10(1.0 / mse) : kInf);
  }
  q.mean_sq_l2 = 0.0;
  for (double v : q.sq_l2) q.mean_sq_l2 += v;
  q.mean_sq_l2 /= static_cast<double>(q.sq_l2.size());
  q.median_sq_l2 = median_of(q.sq_l2);
  q.min_sq_l2 = *std::min_element(q.sq_l2.begin(), q.sq_l2.end());
  q.max_sq_l2 = *std::max_element(q.sq_l2.begin(), q.sq_l2.end());
  q.mean_psnr = 0.0;
  for (double v : q.psnr) q.mean_psnr += v;
  q.mean_psnr /= static_cast<double>(q.psnr.size());
  q.median_psnr = median_of(q.psnr);
  q.min_psnr = *std::min_element(q.psnr.begin(), q.psnr.end());
  return q;
}

}  // namespace attrcloak
