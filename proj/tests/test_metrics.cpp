#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "attrcloak/errors.hpp"
#include "attrcloak/metrics.hpp"
#include "attrcloak/rng.hpp"

using namespace attrcloak;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("attrcloak_metrics_" + tag + "_" +
                                            std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// P(genuine < impostor) + 0.5 P(tie) over all cross pairs.
double auc_oracle(const std::vector<double>& genuine, const std::vector<double>& impostor) {
  double s = 0.0;
  for (double g : genuine) {
    for (double i : impostor) {
      if (g < i) {
        s += 1.0;
      } else if (g == i) {
        s += 0.5;
      }
    }
  }
  return s / (static_cast<double>(genuine.size()) * static_cast<double>(impostor.size()));
}

Tensor vec(std::vector<double> v) {
  int64_t n = static_cast<int64_t>(v.size());
  return Tensor({n}, std::move(v));
}

}  // namespace

TEST_CASE("confusion matrix examples and errors") {
  SUBCASE("perfect predictions are diagonal with a 100 percent diagonal") {
    ConfusionMatrix m = confusion_matrix({0, 1, 0, 1}, {0, 1, 0, 1}, "attr", 2);
    CHECK(m.counts.data()[0] == 2.0);
    CHECK(m.counts.data()[1] == 0.0);
    CHECK(m.counts.data()[2] == 0.0);
    CHECK(m.counts.data()[3] == 2.0);
    Tensor p = m.percent();
    CHECK(p.data()[0] == doctest::Approx(100.0).epsilon(1e-12));
    CHECK(p.data()[3] == doctest::Approx(100.0).epsilon(1e-12));
  }
  SUBCASE("all predictions class 0 put every count in the first column") {
    ConfusionMatrix m = confusion_matrix({0, 0, 0}, {0, 1, 2}, "attr", 3);
    for (int r = 0; r < 3; ++r) {
      CHECK(m.counts.data()[r * 3 + 0] == 1.0);
      CHECK(m.counts.data()[r * 3 + 1] == 0.0);
      CHECK(m.counts.data()[r * 3 + 2] == 0.0);
    }
  }
  SUBCASE("nonempty percent rows sum to 100") {
    CounterRng rng(11);
    std::vector<int> pred, truth;
    for (int i = 0; i < 200; ++i) {
      pred.push_back(static_cast<int>(rng.uniform_int(stream_id(1), i, 4)));
      truth.push_back(static_cast<int>(rng.uniform_int(stream_id(2), i, 4)));
    }
    ConfusionMatrix m = confusion_matrix(pred, truth, "attr", 4);
    Tensor p = m.percent();
    double total = 0.0;
    for (int r = 0; r < 4; ++r) {
      double row = 0.0, craw = 0.0;
      for (int c = 0; c < 4; ++c) {
        row += p.data()[r * 4 + c];
        craw += m.counts.data()[r * 4 + c];
      }
      total += craw;
      if (craw > 0.0) CHECK(row == doctest::Approx(100.0).epsilon(1e-11));
    }
    CHECK(total == 200.0);
  }
  SUBCASE("zero-count rows stay zero in the percent view") {
    ConfusionMatrix m = confusion_matrix({0}, {0}, "attr", 2);
    Tensor p = m.percent();
    CHECK(p.data()[2] == 0.0);
    CHECK(p.data()[3] == 0.0);
  }
  CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}, "attr", 2), ShapeError);
  CHECK_THROWS_AS(confusion_matrix({2}, {0}, "attr", 2), ConfigError);
  CHECK_THROWS_AS(confusion_matrix({0}, {-1}, "attr", 2), ConfigError);
}

TEST_CASE("score histogram bin rule and mass conservation") {
  SUBCASE("all scores 0.5 with 10 bins fill bin 5") {
    HistogramSeries h = score_histogram(std::vector<double>(7, 0.5), 10);
    for (int b = 0; b < 10; ++b) CHECK(h.counts[static_cast<size_t>(b)] == (b == 5 ? 7 : 0));
  }
  SUBCASE("the boundary value 1 lands in the last bin") {
    HistogramSeries h = score_histogram({1.0, 0.0}, 4);
    CHECK(h.counts[0] == 1);
    CHECK(h.counts[3] == 1);
  }
  SUBCASE("counts always sum to the sample count") {
    CounterRng rng(12);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> scores;
      int n = 1 + static_cast<int>(rng.uniform_int(stream_id(3, rep), 0, 50));
      for (int i = 0; i < n; ++i) scores.push_back(rng.uniform(stream_id(4, rep), i));
      HistogramSeries h = score_histogram(scores, 7);
      int64_t sum = 0;
      for (int64_t c : h.counts) sum += c;
      CHECK(sum == n);
    }
  }
  CHECK_THROWS_AS(score_histogram({}, 10), Error);
  CHECK_THROWS_AS(score_histogram({0.5}, 1), ConfigError);
  CHECK_THROWS_AS(score_histogram({1.5}, 10), ConfigError);
  CHECK_THROWS_AS(score_histogram({-0.1}, 10), ConfigError);
}

TEST_CASE("cmc curve identity, ties, monotonicity, and errors") {
  SUBCASE("probes identical to their gallery entries rank first") {
    std::vector<Tensor> gal = {vec({0, 0}), vec({1, 0}), vec({0, 1})};
    std::vector<int> ids = {4, 8, 2};
    CmcCurve c = cmc_curve(gal, ids, gal, ids);
    CHECK(c.rank1() == 1.0);
    CHECK(c.rate.back() == 1.0);
  }
  SUBCASE("distance ties break toward the lower subject id") {
    std::vector<Tensor> gal = {vec({0, 0}), vec({0, 0})};
    std::vector<int> ids = {5, 3};
    CmcCurve lose = cmc_curve(gal, ids, {vec({0, 0})}, {5});
    CHECK(lose.rate[0] == 0.0);
    CHECK(lose.rate[1] == 1.0);
    CmcCurve win = cmc_curve(gal, ids, {vec({0, 0})}, {3});
    CHECK(win.rate[0] == 1.0);
  }
  SUBCASE("random embeddings give rank-1 near 1/G and a monotone curve ending at 1") {
    const int G = 8, dim = 4, probes = 400;
    CounterRng rng(13);
    std::vector<Tensor> gal, prb;
    std::vector<int> gids, pids;
    for (int s = 0; s < G; ++s) {
      Tensor e({dim});
      for (int t = 0; t < dim; ++t) {
        e.mut()[t] = rng.gauss_pair(stream_id(5, static_cast<uint64_t>(s)), t).first;
      }
      gal.push_back(e);
      gids.push_back(s);
    }
    for (int p = 0; p < probes; ++p) {
      Tensor e({dim});
      for (int t = 0; t < dim; ++t) {
        e.mut()[t] = rng.gauss_pair(stream_id(6, static_cast<uint64_t>(p)), t).first;
      }
      prb.push_back(e);
      pids.push_back(p % G);
    }
    CmcCurve c = cmc_curve(gal, gids, prb, pids);
    CHECK(c.rank1() == doctest::Approx(1.0 / G).epsilon(0.45));
    for (size_t r = 1; r < c.rate.size(); ++r) CHECK(c.rate[r] >= c.rate[r - 1]);
    CHECK(c.rate.back() == 1.0);
  }
  CHECK_THROWS_WITH_AS(cmc_curve({vec({0})}, {1}, {vec({0})}, {2}),
                       doctest::Contains("not in the gallery"), ConfigError);
  CHECK_THROWS_WITH_AS(cmc_curve({vec({0}), vec({1})}, {1, 1}, {vec({0})}, {1}),
                       doctest::Contains("twice"), ConfigError);
  CHECK_THROWS_AS(cmc_curve({}, {}, {vec({0})}, {1}), Error);
}

TEST_CASE("roc curve analytic cases") {
  SUBCASE("separated distributions reach AUC 1") {
    RocCurve c = roc_curve({0.1, 0.2}, {0.5, 0.6});
    CHECK(c.auc == 1.0);
    CHECK(c.far.front() == 0.0);
    CHECK(c.tar.front() == 0.0);
    CHECK(c.far.back() == 1.0);
    CHECK(c.tar.back() == 1.0);
  }
  SUBCASE("identical distributions sit on the chance line") {
    RocCurve c = roc_curve({0.3, 0.7}, {0.3, 0.7});
    CHECK(c.auc == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("far and tar are monotone within [0, 1]") {
    CounterRng rng(14);
    std::vector<double> g, i;
    for (int k = 0; k < 60; ++k) {
      g.push_back(rng.uniform(stream_id(7), k));
      i.push_back(rng.uniform(stream_id(8), k) + 0.2);
    }
    RocCurve c = roc_curve(g, i);
    for (size_t k = 1; k < c.far.size(); ++k) {
      CHECK(c.far[k] >= c.far[k - 1]);
      CHECK(c.tar[k] >= c.tar[k - 1]);
    }
    CHECK(c.auc >= 0.0);
    CHECK(c.auc <= 1.0);
  }
  CHECK_THROWS_AS(roc_curve({}, {0.5}), Error);
  CHECK_THROWS_AS(roc_curve({0.5}, {}), Error);
}

TEST_CASE("roc auc equals the pairwise comparison estimator") {
  CounterRng rng(15);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<double> g, i;
    int ng = 2 + static_cast<int>(rng.uniform_int(stream_id(9, rep), 0, 30));
    int ni = 2 + static_cast<int>(rng.uniform_int(stream_id(10, rep), 0, 30));
    bool discrete = rep % 2 == 0;  // force heavy ties half the time
    for (int k = 0; k < ng; ++k) {
      double v = rng.uniform(stream_id(11, rep), k);
      g.push_back(discrete ? std::floor(v * 8.0) / 8.0 : v);
    }
    for (int k = 0; k < ni; ++k) {
      double v = rng.uniform(stream_id(12, rep), k);
      i.push_back(discrete ? std::floor(v * 8.0) / 8.0 : v);
    }
    RocCurve c = roc_curve(g, i);
    CHECK(std::abs(c.auc - auc_oracle(g, i)) <= 1e-9);
  }
}

TEST_CASE("quality stats analytic cases") {
  SUBCASE("identical pair gives MSE 0 and the +inf sentinel") {
    Tensor a = vec({0.2, 0.8});
    QualityStats q = quality_stats({a}, {a});
    CHECK(q.sq_l2[0] == 0.0);
    CHECK(std::isinf(q.psnr[0]));
    CHECK(std::isinf(q.mean_psnr));
  }
  SUBCASE("uniform difference 0.1 gives 20 dB") {
    Tensor a = Tensor::full({4, 4}, 0.5);
    Tensor b = Tensor::full({4, 4}, 0.6);
    QualityStats q = quality_stats({a}, {b});
    CHECK(q.sq_l2[0] == doctest::Approx(0.16).epsilon(1e-12));
    CHECK(q.psnr[0] == doctest::Approx(20.0).epsilon(1e-12));
  }
  SUBCASE("single half-intensity pixel on a 32x32x3 image") {
    Tensor a = Tensor({32, 32, 3});
    Tensor b = a;
    b.mut()[100] = 0.5;
    QualityStats q = quality_stats({a}, {b});
    CHECK(q.sq_l2[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(q.psnr[0] == doctest::Approx(10.0 * std::log10(3072.0 / 0.25)).epsilon(1e-12));
    CHECK(q.psnr[0] == doctest::Approx(40.89).epsilon(1e-3));
  }
  SUBCASE("aggregates over mixed pairs") {
    Tensor a = vec({0.0, 0.0});
    QualityStats q = quality_stats({a, a, a}, {vec({0.1, 0.0}), vec({0.3, 0.0}), vec({0.2, 0.0})});
    CHECK(q.mean_sq_l2 == doctest::Approx((0.01 + 0.09 + 0.04) / 3.0).epsilon(1e-12));
    CHECK(q.median_sq_l2 == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(q.min_sq_l2 == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(q.max_sq_l2 == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(q.min_psnr == doctest::Approx(10.0 * std::log10(2.0 / 0.09)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(quality_stats({vec({0.0})}, {vec({0.0, 0.0})}), ShapeError);
  CHECK_THROWS_AS(quality_stats({vec({0.0})}, {}), ShapeError);
  CHECK_THROWS_AS(quality_stats({}, {}), Error);
}

TEST_CASE("report writing is deterministic with documented formats") {
  ReportInputs in;
  in.confusions.push_back(confusion_matrix({0, 1, 1, 0}, {0, 1, 0, 1}, "male", 2));
  in.histograms.push_back(
      {"suppressed_scores",
       {score_histogram({0.1, 0.2, 0.15}, 10, "class_0"),
        score_histogram({0.9, 0.95, 0.85}, 10, "class_1")}});
  in.cmc.push_back({"original", cmc_curve({vec({0, 0}), vec({1, 1})}, {0, 1},
                                          {vec({0.1, 0.0}), vec({0.9, 1.0})}, {0, 1})});
  in.roc.push_back({"verification", roc_curve({0.1, 0.2, 0.3}, {0.25, 0.5, 0.6})});
  in.quality = quality_stats({vec({0.0, 0.0})}, {vec({0.1, 0.1})});
  in.extra = ojson{{"split", "probe"}};

  fs::path d1 = temp_dir("r1");
  fs::path d2 = temp_dir("r2");
  write_report(in, d1.string());
  write_report(in, d2.string());

  std::string r1 = slurp(d1 / "report.json");
  CHECK(r1 == slurp(d2 / "report.json"));
  CHECK(slurp(d1 / "cmc_original.csv") == slurp(d2 / "cmc_original.csv"));
  CHECK(slurp(d1 / "roc_verification.svg") == slurp(d2 / "roc_verification.svg"));

  std::string cmc_csv = slurp(d1 / "cmc_original.csv");
  CHECK(cmc_csv.rfind("rank,rate\n", 0) == 0);
  CHECK(std::count(cmc_csv.begin(), cmc_csv.end(), '\n') == 3);  // header + 2 ranks
  std::string roc_csv = slurp(d1 / "roc_verification.csv");
  CHECK(roc_csv.rfind("far,tar\n", 0) == 0);
  std::string conf_csv = slurp(d1 / "confusion_male.csv");
  CHECK(conf_csv.rfind("true,pred,count,percent\n", 0) == 0);
  std::string hist_csv = slurp(d1 / "histogram_suppressed_scores.csv");
  CHECK(hist_csv.rfind("series,bin_lo,bin_hi,count\n", 0) == 0);

  ojson j = ojson::parse(r1);
  CHECK(j.at("format_version") == 1);
  CHECK(j.at("confusions")[0].at("attribute") == "male");
  CHECK(j.at("roc")[0].at("auc").get<double>() ==
        doctest::Approx(roc_curve({0.1, 0.2, 0.3}, {0.25, 0.5, 0.6}).auc).epsilon(1e-15));
  CHECK(j.at("context").at("split") == "probe");

  // Golden annotation block rides along under a clearly labeled key.
  const ojson& ref = j.at("reference_results");
  CHECK(ref.at("three_attribute_suppression_celeba_percent").at("male").at("before")[0][0].get<double>() ==
        doctest::Approx(87.70).epsilon(1e-12));
  CHECK(ref.at("three_attribute_suppression_celeba_percent").at("male").at("after")[0][0].get<double>() ==
        doctest::Approx(3.89).epsilon(1e-12));
  CHECK(ref.at("three_attribute_suppression_celeba_percent").at("attractive").at("after")[0][0].get<double>() ==
        doctest::Approx(0.28).epsilon(1e-12));
  CHECK(ref.at("gender_suppression_muct_counts").at("after")[0][1].get<int>() == 1828);
  CHECK(ref.at("gender_suppression_muct_counts").at("after")[1][0].get<int>() == 1878);
  CHECK(ref.at("note").get<std::string>().find("not") != std::string::npos);

  // SVG output is self-contained: no links, embedded images, or scripts.
  std::string svg = slurp(d1 / "cmc_original.svg");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("href") == std::string::npos);
  CHECK(svg.find("<image") == std::string::npos);
  CHECK(svg.find("<script") == std::string::npos);

  // Histograms can skip SVG rendering.
  fs::path d3 = temp_dir("r3");
  write_report(in, d3.string(), false);
  CHECK_FALSE(fs::exists(d3 / "cmc_original.svg"));
  CHECK(fs::exists(d3 / "cmc_original.csv"));

  fs::remove_all(d1);
  fs::remove_all(d2);
  fs::remove_all(d3);
}

TEST_CASE("report writing fails on an unwritable directory") {
  fs::path base = temp_dir("bad");
  fs::path file = base / "occupied";
  std::ofstream(file) << "x";
  ReportInputs in;
  CHECK_THROWS_AS(write_report(in, (file / "sub").string()), IoError);
  fs::remove_all(base);
}
