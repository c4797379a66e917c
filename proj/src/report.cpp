#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "attrcloak/errors.hpp"
#include "attrcloak/metrics.hpp"

namespace attrcloak {
namespace fs = std::filesystem;

namespace {

// Shortest round-trip decimal form, shared by CSV and SVG output.
std::string fmt_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return ojson(v).dump();
}

std::string fmt_px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string sanitize(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '-' || c == '.';
    if (!ok) c = '_';
  }
  return out.empty() ? "unnamed" : out;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << body;
  if (!f) throw IoError("write failed for " + path.string());
}

ojson matrix_json(const Tensor& t, int classes) {
  ojson rows = ojson::array();
  for (int r = 0; r < classes; ++r) {
    ojson row = ojson::array();
    for (int c = 0; c < classes; ++c) row.push_back(t.data()[r * classes + c]);
    rows.push_back(row);
  }
  return rows;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;
constexpr double kW = 640, kH = 400, kL = 62, kR = 18, kT = 34, kB = 48;

struct Axis {
  double lo = 0.0, hi = 1.0;
  double to_px_x(double v) const {
    double span = hi > lo ? hi - lo : 1.0;
    return kL + (v - lo) / span * (kW - kL - kR);
  }
};

struct AxisY {
  double lo = 0.0, hi = 1.0;
  double to_px_y(double v) const {
    double span = hi > lo ? hi - lo : 1.0;
    return kH - kB - (v - lo) / span * (kH - kT - kB);
  }
};

void svg_open(std::string& s, const std::string& title) {
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_num(kW) + "\" height=\"" +
       fmt_num(kH) + "\" viewBox=\"0 0 " + fmt_num(kW) + " " + fmt_num(kH) + "\">\n";
  s += "<rect width=\"" + fmt_num(kW) + "\" height=\"" + fmt_num(kH) + "\" fill=\"#ffffff\"/>\n";
  s += "<text x=\"" + fmt_px(kW / 2) + "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" fill=\"#111111\">" +
       title + "</text>\n";
}

void svg_axes(std::string& s, const Axis& ax, const AxisY& ay, const std::string& x_label,
              const std::string& y_label, bool integer_x) {
  s += "<line x1=\"" + fmt_px(kL) + "\" y1=\"" + fmt_px(kH - kB) + "\" x2=\"" + fmt_px(kW - kR) +
       "\" y2=\"" + fmt_px(kH - kB) + "\" stroke=\"#333333\"/>\n";
  s += "<line x1=\"" + fmt_px(kL) + "\" y1=\"" + fmt_px(kT) + "\" x2=\"" + fmt_px(kL) +
       "\" y2=\"" + fmt_px(kH - kB) + "\" stroke=\"#333333\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    double fx = ax.lo + (ax.hi - ax.lo) * i / ticks;
    if (integer_x) fx = std::round(fx);
    double px = ax.to_px_x(fx);
    s += "<line x1=\"" + fmt_px(px) + "\" y1=\"" + fmt_px(kH - kB) + "\" x2=\"" + fmt_px(px) +
         "\" y2=\"" + fmt_px(kH - kB + 5) + "\" stroke=\"#333333\"/>\n";
    char lab[32];
    if (integer_x) {
      std::snprintf(lab, sizeof(lab), "%d", static_cast<int>(fx));
    } else {
      std::snprintf(lab, sizeof(lab), "%.2f", fx);
    }
    s += "<text x=\"" + fmt_px(px) + "\" y=\"" + fmt_px(kH - kB + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" +
         lab + "</text>\n";
    double fy = ay.lo + (ay.hi - ay.lo) * i / ticks;
    double py = ay.to_px_y(fy);
    s += "<line x1=\"" + fmt_px(kL - 5) + "\" y1=\"" + fmt_px(py) + "\" x2=\"" + fmt_px(kL) +
         "\" y2=\"" + fmt_px(py) + "\" stroke=\"#333333\"/>\n";
    char laby[32];
    std::snprintf(laby, sizeof(laby), "%.2f", fy);
    s += "<text x=\"" + fmt_px(kL - 8) + "\" y=\"" + fmt_px(py + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" +
         laby + "</text>\n";
  }
  s += "<text x=\"" + fmt_px((kL + kW - kR) / 2) + "\" y=\"" + fmt_px(kH - 10) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#111111\">" +
       x_label + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt_px((kT + kH - kB) / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#111111\" transform=\"rotate(-90 16 " +
       fmt_px((kT + kH - kB) / 2) + ")\">" + y_label + "</text>\n";
}

void svg_legend(std::string& s, const std::vector<std::string>& labels) {
  double y = kT + 6;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) continue;
    const char* color = kPalette[i % kPaletteSize];
    s += "<line x1=\"" + fmt_px(kW - kR - 130) + "\" y1=\"" + fmt_px(y) + "\" x2=\"" +
         fmt_px(kW - kR - 110) + "\" y2=\"" + fmt_px(y) + "\" stroke=\"" + color +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt_px(kW - kR - 104) + "\" y=\"" + fmt_px(y + 4) +
         "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" + labels[i] +
         "</text>\n";
    y += 16;
  }
}

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series,
                           double x_lo, double x_hi, bool integer_x) {
  Axis ax{x_lo, x_hi};
  AxisY ay{0.0, 1.0};
  std::string s;
  svg_open(s, title);
  svg_axes(s, ax, ay, x_label, y_label, integer_x);
  std::vector<std::string> labels;
  for (size_t i = 0; i < series.size(); ++i) {
    labels.push_back(series[i].first);
    const char* color = kPalette[i % kPaletteSize];
    std::string pts;
    for (const auto& [x, y] : series[i].second) {
      pts += fmt_px(ax.to_px_x(x)) + "," + fmt_px(ay.to_px_y(y)) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  }
  svg_legend(s, labels);
  s += "</svg>\n";
  return s;
}

std::string histogram_svg(const std::string& title,
                          const std::vector<HistogramSeries>& series) {
  int bins = series.empty() ? 0 : series[0].bins;
  int64_t peak = 1;
  for (const HistogramSeries& h : series) {
    for (int64_t c : h.counts) peak = std::max(peak, c);
  }
  Axis ax{0.0, 1.0};
  AxisY ay{0.0, static_cast<double>(peak)};
  std::string s;
  svg_open(s, title);
  const int ticks = 5;
  s += "<line x1=\"" + fmt_px(kL) + "\" y1=\"" + fmt_px(kH - kB) + "\" x2=\"" + fmt_px(kW - kR) +
       "\" y2=\"" + fmt_px(kH - kB) + "\" stroke=\"#333333\"/>\n";
  s += "<line x1=\"" + fmt_px(kL) + "\" y1=\"" + fmt_px(kT) + "\" x2=\"" + fmt_px(kL) +
       "\" y2=\"" + fmt_px(kH - kB) + "\" stroke=\"#333333\"/>\n";
  for (int i = 0; i <= ticks; ++i) {
    double fx = static_cast<double>(i) / ticks;
    double px = ax.to_px_x(fx);
    char lab[32];
    std::snprintf(lab, sizeof(lab), "%.1f", fx);
    s += "<text x=\"" + fmt_px(px) + "\" y=\"" + fmt_px(kH - kB + 18) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" +
         lab + "</text>\n";
    double fy = ay.lo + (ay.hi - ay.lo) * i / ticks;
    double py = ay.to_px_y(fy);
    char laby[32];
    std::snprintf(laby, sizeof(laby), "%g", fy);
    s += "<text x=\"" + fmt_px(kL - 8) + "\" y=\"" + fmt_px(py + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" +
         laby + "</text>\n";
  }
  double plot_w = kW - kL - kR;
  double bin_w = bins > 0 ? plot_w / bins : plot_w;
  size_t groups = series.empty() ? 1 : series.size();
  double bar_w = bin_w / static_cast<double>(groups) * 0.9;
  std::vector<std::string> labels;
  for (size_t si = 0; si < series.size(); ++si) {
    labels.push_back(series[si].label);
    const char* color = kPalette[si % kPaletteSize];
    for (int b = 0; b < bins; ++b) {
      double x = kL + bin_w * b + bar_w * static_cast<double>(si);
      double top = ay.to_px_y(static_cast<double>(series[si].counts[static_cast<size_t>(b)]));
      double h = (kH - kB) - top;
      if (h <= 0.0) continue;
      s += "<rect x=\"" + fmt_px(x) + "\" y=\"" + fmt_px(top) + "\" width=\"" + fmt_px(bar_w) +
           "\" height=\"" + fmt_px(h) + "\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
    }
  }
  s += "<text x=\"" + fmt_px((kL + kW - kR) / 2) + "\" y=\"" + fmt_px(kH - 10) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#111111\">score</text>\n";
  s += "<text x=\"16\" y=\"" + fmt_px((kT + kH - kB) / 2) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#111111\" transform=\"rotate(-90 16 " +
       fmt_px((kT + kH - kB) / 2) + ")\">count</text>\n";
  svg_legend(s, labels);
  s += "</svg>\n";
  return s;
}

}  // namespace

ojson reference_results() {
  ojson ref;
  ref["note"] =
      "Published full-scale results carried as fixed annotation data for side-by-side "
      "display. Desk-scale synthetic runs use different data and models and are not "
      "expected to match these numbers.";
  auto confusion = [](std::vector<std::vector<double>> before,
                      std::vector<std::vector<double>> after) {
    return ojson{{"before", before}, {"after", after}};
  };
  ref["three_attribute_suppression_celeba_percent"] = {
      {"rows", {"positive", "negative"}},
      {"columns", {"predicted_positive", "predicted_negative"}},
      {"male", confusion({{87.70, 12.30}, {19.64, 80.36}}, {{3.89, 96.11}, {100.0, 0.0}})},
      {"smiling", confusion({{64.59, 35.41}, {24.66, 75.34}}, {{0.02, 99.98}, {99.90, 0.10}})},
      {"attractive", confusion({{89.31, 10.69}, {28.41, 71.59}}, {{0.28, 99.72}, {99.59, 0.41}})}};
  ref["gender_suppression_muct_counts"] = {
      {"rows", {"male", "female"}},
      {"columns", {"predicted_male", "predicted_female"}},
      {"before", {{1741, 87}, {252, 1626}}},
      {"after", {{0, 1828}, {1878, 0}}}};
  return ref;
}

void write_report(const ReportInputs& in, const std::string& dir, bool with_svg) {
  std::error_code ec;
  fs::create_directories(dir, ec);

  ojson j;
  j["format_version"] = 1;

  ojson confs = ojson::array();
  for (const ConfusionMatrix& m : in.confusions) {
    Tensor pct = m.percent();
    confs.push_back({{"attribute", m.attribute},
                     {"classes", m.classes},
                     {"counts", matrix_json(m.counts, m.classes)},
                     {"percent", matrix_json(pct, m.classes)}});
    std::string csv = "true,pred,count,percent\n";
    for (int r = 0; r < m.classes; ++r) {
      for (int c = 0; c < m.classes; ++c) {
        csv += std::to_string(r) + "," + std::to_string(c) + "," +
               fmt_num(m.counts.data()[r * m.classes + c]) + "," +
               fmt_num(pct.data()[r * m.classes + c]) + "\n";
      }
    }
    write_file(fs::path(dir) / ("confusion_" + sanitize(m.attribute) + ".csv"), csv);
  }
  j["confusions"] = confs;

  ojson hists = ojson::array();
  for (const auto& [name, series] : in.histograms) {
    ojson hj;
    hj["name"] = name;
    hj["bins"] = series.empty() ? 0 : series[0].bins;
    ojson sj = ojson::array();
    std::string csv = "series,bin_lo,bin_hi,count\n";
    for (const HistogramSeries& h : series) {
      sj.push_back({{"label", h.label}, {"counts", h.counts}});
      for (int b = 0; b < h.bins; ++b) {
        csv += h.label + "," + fmt_num(static_cast<double>(b) / h.bins) + "," +
               fmt_num(static_cast<double>(b + 1) / h.bins) + "," +
               std::to_string(h.counts[static_cast<size_t>(b)]) + "\n";
      }
    }
    hj["series"] = sj;
    hists.push_back(hj);
    write_file(fs::path(dir) / ("histogram_" + sanitize(name) + ".csv"), csv);
    if (with_svg) {
      write_file(fs::path(dir) / ("histogram_" + sanitize(name) + ".svg"),
                 histogram_svg(name, series));
    }
  }
  j["histograms"] = hists;

  ojson cmcs = ojson::array();
  for (const auto& [name, curve] : in.cmc) {
    cmcs.push_back({{"name", name}, {"rate", curve.rate}, {"rank1", curve.rank1()}});
    std::string csv = "rank,rate\n";
    std::vector<std::pair<double, double>> pts;
    for (size_t r = 0; r < curve.rate.size(); ++r) {
      csv += std::to_string(r + 1) + "," + fmt_num(curve.rate[r]) + "\n";
      pts.emplace_back(static_cast<double>(r + 1), curve.rate[r]);
    }
    write_file(fs::path(dir) / ("cmc_" + sanitize(name) + ".csv"), csv);
    if (with_svg) {
      write_file(fs::path(dir) / ("cmc_" + sanitize(name) + ".svg"),
                 line_chart_svg(name, "rank", "identification rate", {{name, pts}}, 1.0,
                                static_cast<double>(std::max<size_t>(curve.rate.size(), 2)),
                                true));
    }
  }
  j["cmc"] = cmcs;

  ojson rocs = ojson::array();
  for (const auto& [name, curve] : in.roc) {
    rocs.push_back({{"name", name}, {"far", curve.far}, {"tar", curve.tar}, {"auc", curve.auc}});
    std::string csv = "far,tar\n";
    std::vector<std::pair<double, double>> pts;
    for (size_t i = 0; i < curve.far.size(); ++i) {
      csv += fmt_num(curve.far[i]) + "," + fmt_num(curve.tar[i]) + "\n";
      pts.emplace_back(curve.far[i], curve.tar[i]);
    }
    write_file(fs::path(dir) / ("roc_" + sanitize(name) + ".csv"), csv);
    if (with_svg) {
      write_file(fs::path(dir) / ("roc_" + sanitize(name) + ".svg"),
                 line_chart_svg(name, "false accept rate", "true accept rate", {{name, pts}}, 0.0,
                                1.0, false));
    }
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

  j["reference_results"] = reference_results();
  j["context"] = in.extra.is_null() ? ojson(nullptr) : in.extra;

  write_file(fs::path(dir) / "report.json", j.dump(2) + "\n");
}

}  // namespace attrcloak
