#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attrcloak/json_util.hpp"
#include "attrcloak/tensor.hpp"

namespace attrcloak {

// Row-indexed by true class, column-indexed by predicted class.
struct ConfusionMatrix {
  std::string attribute;
  int classes = 0;
  Tensor counts;  // C x C

  // Rows normalized to sum 100; all-zero rows stay zero.
  Tensor percent() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& predictions,
                                 const std::vector<int>& truths, const std::string& attribute,
                                 int classes);

// Equal-width bins over [0, 1]; the boundary value 1 lands in the last bin.
struct HistogramSeries {
  std::string label;
  int bins = 0;
  std::vector<int64_t> counts;
};

HistogramSeries score_histogram(const std::vector<double>& scores, int bins,
                                const std::string& label = "");

// rate[r - 1] = fraction of probes whose true subject ranks within the top r
// gallery entries by Euclidean distance (ties broken by subject id ascending).
struct CmcCurve {
  std::vector<double> rate;

  double rank1() const { return rate.empty() ? 0.0 : rate.front(); }
};

CmcCurve cmc_curve(const std::vector<Tensor>& gallery_embeddings,
                   const std::vector<int>& gallery_subjects,
                   const std::vector<Tensor>& probe_embeddings,
                   const std::vector<int>& probe_subjects);

// Acceptance-by-distance sweep: a pair is accepted when its distance <= t.
// Thresholds run over every observed distance; (0, 0) opens the curve.
struct RocCurve {
  std::vector<double> far;  // false accepts: impostor pairs within threshold
  std::vector<double> tar;  // true accepts: genuine pairs within threshold
  double auc = 0.0;         // trapezoid area over (far, tar)
};

RocCurve roc_curve(const std::vector<double>& genuine, const std::vector<double>& impostor);

struct QualityStats {
  std::vector<double> sq_l2;  // per-pair squared L2 distance
  std::vector<double> psnr;   // dB over unit dynamic range; +inf when MSE = 0
  double mean_sq_l2 = 0.0, median_sq_l2 = 0.0, min_sq_l2 = 0.0, max_sq_l2 = 0.0;
  double mean_psnr = 0.0, median_psnr = 0.0, min_psnr = 0.0;
};

QualityStats quality_stats(const std::vector<Tensor>& originals,
                           const std::vector<Tensor>& anonymized);

// Published full-scale results carried as annotation data for side-by-side
// display; nothing in a desk-scale run is expected to reproduce them.
ojson reference_results();

struct ReportInputs {
  std::vector<ConfusionMatrix> confusions;
  // Chart name -> one series per class.
  std::vector<std::pair<std::string, std::vector<HistogramSeries>>> histograms;
  std::vector<std::pair<std::string, CmcCurve>> cmc;
  std::vector<std::pair<std::string, RocCurve>> roc;
  std::optional<QualityStats> quality;
  ojson extra;  // caller context echoed into report.json verbatim
};

// Writes report.json, one CSV per artifact, and (optionally) self-contained
// SVG charts. Output bytes are a pure function of the inputs.
void write_report(const ReportInputs& in, const std::string& dir, bool with_svg = true);

}  // namespace attrcloak
