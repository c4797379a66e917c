#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "attrcloak/errors.hpp"
#include "attrcloak/rng.hpp"
#include "attrcloak/ten_io.hpp"
#include "attrcloak/tensor.hpp"

using namespace attrcloak;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
  fs::path p = fs::temp_directory_path() / "attrcloak_tenio_test";
  fs::create_directories(p);
  return p;
}

std::vector<uint8_t> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void dump(const fs::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  for (int64_t i = 0; i < 6; ++i) CHECK(t[i] == 0.0);
  CHECK(t.shape_str() == "(2x3)");

  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({-1}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);

  Tensor a({2}, {1.0, 2.0});
  Tensor b = a;  // shares storage
  CHECK(b.data() == a.data());
  b.mut()[0] = 9.0;  // detaches
  CHECK(a[0] == 1.0);
  CHECK(b[0] == 9.0);

  Tensor r = a.reshaped({2, 1});
  CHECK(r.dims() == std::vector<int64_t>{2, 1});
  CHECK(r.data() == a.data());
  CHECK_THROWS_AS(a.reshaped({3}), ShapeError);
}

TEST_CASE("fixed byte layout for a 2x2x1 tensor") {
  fs::path p = tmp_dir() / "fixed.ten";
  Tensor t({2, 2, 1}, {1.0, 0.5, -2.0, 0.25});
  write_ten(p.string(), t);

  std::vector<uint8_t> want;
  auto push_u32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) want.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  auto push_u64 = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) want.push_back(static_cast<uint8_t>(v >> (8 * i)));
  };
  auto push_f32 = [&](float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    push_u32(u);
  };
  want.insert(want.end(), {'T', 'E', 'N', 'S'});
  push_u32(1);
  want.push_back(3);
  push_u64(2);
  push_u64(2);
  push_u64(1);
  push_f32(1.0f);
  push_f32(0.5f);
  push_f32(-2.0f);
  push_f32(0.25f);

  CHECK(slurp(p) == want);
}

TEST_CASE("round trip preserves f32-representable data exactly") {
  CounterRng rng(7);
  fs::path p = tmp_dir() / "rt.ten";
  Tensor t({3, 5, 2});
  {
    double* d = t.mut();
    for (int64_t i = 0; i < t.size(); ++i)
      d[i] = quantize_f32(rng.uniform(stream_id(1), static_cast<uint64_t>(i), -10.0, 10.0));
  }
  write_ten(p.string(), t);
  Tensor r = read_ten(p.string());
  CHECK(r.dims() == t.dims());
  CHECK(r.equals(t));

  // Writing the loaded tensor again is byte-identical.
  fs::path p2 = tmp_dir() / "rt2.ten";
  write_ten(p2.string(), r);
  CHECK(slurp(p) == slurp(p2));
}

TEST_CASE("malformed files are rejected with reasons") {
  fs::path dir = tmp_dir();
  fs::path good = dir / "good.ten";
  write_ten(good.string(), Tensor({2, 2}, {1, 2, 3, 4}));
  auto bytes = slurp(good);

  CHECK_THROWS_AS(read_ten((dir / "nope.ten").string()), IoError);

  auto bad = bytes;
  bad[0] = 'X';
  dump(dir / "magic.ten", bad);
  CHECK_THROWS_WITH_AS(read_ten((dir / "magic.ten").string()),
                       doctest::Contains("bad magic"), IoError);

  bad = bytes;
  bad[4] = 9;
  dump(dir / "ver.ten", bad);
  CHECK_THROWS_WITH_AS(read_ten((dir / "ver.ten").string()),
                       doctest::Contains("version"), IoError);

  bad = bytes;
  bad.resize(bytes.size() - 3);
  dump(dir / "trunc.ten", bad);
  CHECK_THROWS_WITH_AS(read_ten((dir / "trunc.ten").string()),
                       doctest::Contains("truncated"), IoError);

  bad = bytes;
  bad.push_back(0);
  dump(dir / "extra.ten", bad);
  CHECK_THROWS_WITH_AS(read_ten((dir / "extra.ten").string()),
                       doctest::Contains("trailing"), IoError);

  bad = bytes;
  bad[8] = 0;  // ndim 0
  dump(dir / "ndim.ten", bad);
  CHECK_THROWS_AS(read_ten((dir / "ndim.ten").string()), IoError);
}

TEST_CASE("counter rng is pure and seed-sensitive") {
  CounterRng a(123), b(123), c(124);
  CHECK(a.u64(5, 99) == b.u64(5, 99));
  CHECK(a.u64(5, 99) != c.u64(5, 99));
  CHECK(a.u64(5, 99) != a.u64(6, 99));
  CHECK(a.u64(5, 99) != a.u64(5, 100));
  // Order independence: interleaved queries don't disturb each other.
  double x1 = a.uniform(1, 0);
  (void)a.uniform(2, 7);
  double x2 = a.uniform(1, 0);
  CHECK(x1 == x2);
  // Range checks.
  for (uint64_t i = 0; i < 2000; ++i) {
    double u = a.uniform(3, i);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  // Gaussian moments, loose bounds.
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto [g1, g2] = a.gauss_pair(4, static_cast<uint64_t>(i));
    mean += g1 + g2;
    var += g1 * g1 + g2 * g2;
  }
  mean /= 2 * n;
  var = var / (2 * n) - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}
