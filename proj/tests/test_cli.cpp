#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "attrcloak/json_util.hpp"

namespace fs = std::filesystem;
using attrcloak::ojson;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;
};

std::string bin() {
  const char* b = std::getenv("ATTRCLOAK_BIN");
  REQUIRE_MESSAGE(b != nullptr, "ATTRCLOAK_BIN must point at the attrcloak binary");
  return b;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("attrcloak_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Runs the binary with a scrubbed seed environment unless the caller prefixes
// its own assignment; stdout and stderr are captured together.
RunResult run(const std::string& args, const std::string& env_prefix = "") {
  static int n = 0;
  fs::path cap = fs::temp_directory_path() / ("attrcloak_cli_cap_" + std::to_string(n++));
  std::string cmd = "env " + (env_prefix.empty() ? std::string("-u ATTRCLOAK_SEED") : env_prefix) +
                    " " + bin() + " " + args + " > " + cap.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(cap);
  r.output.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  fs::remove(cap);
  return r;
}

ojson read_json(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE_MESSAGE(f.good(), "missing " << p.string());
  ojson j;
  f >> j;
  return j;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "missing " << p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string tiny_gen_flags() {
  return "--height 10 --width 8 --channels 1 --subjects 6 --images-per-subject 6 --seed 314";
}

}  // namespace

TEST_CASE("help exits zero and names every subcommand") {
  RunResult r = run("--help");
  CHECK(r.exit_code == 0);
  for (const char* sub : {"gen-data", "train-attr", "train-embed", "attack", "eval", "report",
                          "run-experiment"}) {
    CHECK_MESSAGE(r.output.find(sub) != std::string::npos, "help lacks ", sub);
  }
}

TEST_CASE("usage and validation failures exit 2") {
  fs::path d = temp_dir("usage");
  std::string data = (d / "data").string();
  REQUIRE(run("gen-data --out " + data + " " + tiny_gen_flags()).exit_code == 0);

  SUBCASE("unknown flag") {
    RunResult r = run("gen-data --bogus 1 --out " + (d / "x").string());
    CHECK(r.exit_code == 2);
  }
  SUBCASE("missing subcommand") {
    CHECK(run("").exit_code == 2);
  }
  SUBCASE("suppress and preserve overlap") {
    std::string ckpt = (d / "attr").string();
    REQUIRE(run("train-attr --data " + data + " --out " + ckpt + " --epochs 1 --batch 8").exit_code ==
            0);
    RunResult r = run("attack --data " + data + " --attr-net " + ckpt +
                      " --suppress gender --preserve gender --out " + (d / "a").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("suppress") != std::string::npos);
  }
  SUBCASE("missing checkpoint path") {
    RunResult r = run("attack --data " + data + " --attr-net " + (d / "nope").string() +
                      " --suppress gender --out " + (d / "a").string());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("not found") != std::string::npos);
  }
  SUBCASE("missing experiment config") {
    RunResult r = run("run-experiment --config " + (d / "none.json").string());
    CHECK(r.exit_code == 2);
  }
  SUBCASE("unparseable environment seed") {
    RunResult r = run("gen-data --out " + (d / "y").string() +
                      " --height 10 --width 8 --channels 1 --subjects 6 --images-per-subject 6",
                      "ATTRCLOAK_SEED=notanumber");
    CHECK(r.exit_code == 2);
  }
  SUBCASE("unknown attribute name") {
    std::string ckpt = (d / "attr2").string();
    REQUIRE(run("train-attr --data " + data + " --out " + ckpt + " --epochs 1 --batch 8").exit_code ==
            0);
    RunResult r = run("attack --data " + data + " --attr-net " + ckpt +
                      " --suppress no_such_attr --out " + (d / "a2").string());
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("runtime failures exit 1") {
  fs::path d = temp_dir("runtime");
  std::ofstream(d / "bad.json") << "{\"format_version\": 99}";
  RunResult r = run("report --metrics " + (d / "bad.json").string() + " --out " +
                    (d / "rep").string());
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("error:") != std::string::npos);
}

TEST_CASE("pipeline chain produces artifacts and resolved configs at every step") {
  fs::path d = temp_dir("chain");
  std::string data = (d / "data").string();
  std::string attr = (d / "attr").string();
  std::string embed = (d / "embed").string();
  std::string atk = (d / "atk").string();
  std::string ev = (d / "ev").string();
  std::string rep = (d / "rep").string();

  REQUIRE(run("gen-data --out " + data + " " + tiny_gen_flags()).exit_code == 0);
  CHECK(fs::exists(fs::path(data) / "config.resolved.json"));
  CHECK(fs::exists(fs::path(data) / "manifest.json"));

  REQUIRE(run("train-attr --data " + data + " --out " + attr +
              " --epochs 6 --batch 8 --lr 0.003 --seed 1").exit_code == 0);
  CHECK(fs::exists(fs::path(attr) / "config.resolved.json"));
  CHECK(fs::exists(fs::path(attr) / "model.json"));
  CHECK(read_json(fs::path(attr) / "train_report.json").contains("test_accuracy"));

  REQUIRE(run("train-embed --data " + data + " --out " + embed +
              " --epochs 12 --batch 8 --lr 0.003 --seed 2").exit_code == 0);
  ojson erep = read_json(fs::path(embed) / "train_report.json");
  CHECK(erep.contains("threshold"));  // whitebox variant calibrates by default

  REQUIRE(run("attack --data " + data + " --attr-net " + attr + " --embed-net " + embed +
              " --split test --suppress gender --confidence 0.02 --iters 80 --lambda-dist 0.05" +
              " --jobs 1 --out " + atk).exit_code == 0);
  ojson results = read_json(fs::path(atk) / "results.json");
  CHECK(results.at("summary").at("eligible").get<int>() >= 1);
  CHECK(fs::exists(fs::path(atk) / "config.resolved.json"));

  REQUIRE(run("eval --data " + data + " --attr-net " + attr + " --embed-net " + embed +
              " --results " + atk + " --split test --out " + ev).exit_code == 0);
  ojson metrics = read_json(fs::path(ev) / "metrics.json");
  CHECK(metrics.at("confusions").size() == 2);  // gender before and after
  CHECK(metrics.at("cmc").size() == 2);

  REQUIRE(run("report --metrics " + (fs::path(ev) / "metrics.json").string() + " --out " + rep)
              .exit_code == 0);
  ojson report = read_json(fs::path(rep) / "report.json");
  CHECK(report.contains("confusions"));
  CHECK(report.contains("reference_results"));
  CHECK(fs::exists(fs::path(rep) / "config.resolved.json"));
}

TEST_CASE("command line flags override config file values") {
  fs::path d = temp_dir("merge");
  std::string data = (d / "data").string();
  std::string attr = (d / "attr").string();
  REQUIRE(run("gen-data --out " + data + " " + tiny_gen_flags()).exit_code == 0);
  REQUIRE(run("train-attr --data " + data + " --out " + attr + " --epochs 4 --batch 8").exit_code ==
          0);

  ojson cfg{{"data", data},          {"attr_net", attr},
            {"suppress", {"gender"}}, {"confidence", 0.02},
            {"iterations", 60},       {"out", (d / "from_cfg").string()}};
  std::ofstream(d / "atk.json") << cfg.dump();

  REQUIRE(run("attack --config " + (d / "atk.json").string() + " --iters 40 --jobs 1").exit_code ==
          0);
  ojson resolved = read_json(d / "from_cfg" / "config.resolved.json");
  CHECK(resolved.at("iterations").get<int>() == 40);        // flag beats file
  CHECK(resolved.at("confidence").get<double>() == 0.02);   // file beats default
  CHECK(resolved.at("suppress").size() == 1);
}

TEST_CASE("environment seed applies only when flag and config are silent") {
  fs::path d = temp_dir("envseed");
  REQUIRE(run("gen-data --out " + (d / "a").string() +
              " --height 10 --width 8 --channels 1 --subjects 6 --images-per-subject 6",
              "ATTRCLOAK_SEED=123").exit_code == 0);
  CHECK(read_json(d / "a" / "config.resolved.json").at("seed").get<uint64_t>() == 123);

  REQUIRE(run("gen-data --out " + (d / "b").string() + " " + tiny_gen_flags(),
              "ATTRCLOAK_SEED=123").exit_code == 0);
  CHECK(read_json(d / "b" / "config.resolved.json").at("seed").get<uint64_t>() == 314);
}

TEST_CASE("experiment config reruns byte-identical") {
  fs::path d = temp_dir("rerun");
  ojson cfg{{"seed", 99},
            {"dataset",
             {{"height", 10}, {"width", 8}, {"channels", 1}, {"subjects", 6},
              {"images_per_subject", 6}}},
            {"attr_net", {{"epochs", 6}, {"batch", 8}, {"lr", 0.003}}},
            {"embed_net", {{"epochs", 12}, {"batch", 8}, {"lr", 0.003}}},
            {"split", "probe"},
            {"attack",
             {{"suppress", {"gender"}}, {"confidence", 0.02}, {"lambda_dist", 0.05},
              {"iterations", 60}}}};
  std::ofstream(d / "exp.json") << cfg.dump();

  std::string c = (d / "exp.json").string();
  REQUIRE(run("run-experiment --config " + c + " --out " + (d / "r1").string()).exit_code == 0);
  REQUIRE(run("run-experiment --config " + c + " --out " + (d / "r2").string()).exit_code == 0);

  for (const char* rel : {"report/report.json", "metrics.json", "data/manifest.json",
                          "attack/results.json"}) {
    CHECK_MESSAGE(read_bytes(d / "r1" / rel) == read_bytes(d / "r2" / rel), "differs: ", rel);
  }
  // Every bitmap written during the runs must match as well.
  for (const fs::path& sub : {fs::path("data") / "images", fs::path("attack") / "anonymized",
                              fs::path("attack") / "perturbation"}) {
    size_t n = 0;
    for (const auto& e : fs::directory_iterator(d / "r1" / sub)) {
      fs::path other = d / "r2" / sub / e.path().filename();
      CHECK_MESSAGE(read_bytes(e.path()) == read_bytes(other), "differs: ", other.string());
      ++n;
    }
    CHECK(n > 0);
  }

  ojson rep = read_json(d / "r1" / "report" / "report.json");
  CHECK(rep.at("context").at("summary").at("eligible").get<int>() >= 1);
}
