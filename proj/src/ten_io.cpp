#include "attrcloak/ten_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

namespace attrcloak {

static_assert(std::endian::native == std::endian::little,
              "ten i/o assumes a little-endian host");

namespace {
constexpr char kMagic[4] = {'T', 'E', 'N', 'S'};
constexpr uint32_t kVersion = 1;
constexpr int kMaxNdim = 8;
}  // namespace

void write_ten(const std::string& path, const Tensor& t) {
  if (!t.defined()) throw IoError("write " + path + ": undefined tensor");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write " + path + ": cannot open");
  f.write(kMagic, 4);
  uint32_t ver = kVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  uint8_t nd = static_cast<uint8_t>(t.ndim());
  f.write(reinterpret_cast<const char*>(&nd), 1);
  for (int64_t d : t.dims()) {
    uint64_t u = static_cast<uint64_t>(d);
    f.write(reinterpret_cast<const char*>(&u), 8);
  }
  std::vector<float> buf(static_cast<size_t>(t.size()));
  const double* p = t.data();
  for (int64_t i = 0; i < t.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(p[i]);
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (!f) throw IoError("write " + path + ": short write");
}

Tensor read_ten(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read " + path + ": cannot open");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("read " + path + ": bad magic, not a tensor file");
  uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), 4);
  if (!f || ver != kVersion)
    throw IoError("read " + path + ": unsupported format version " + std::to_string(ver));
  uint8_t nd = 0;
  f.read(reinterpret_cast<char*>(&nd), 1);
  if (!f || nd == 0 || nd > kMaxNdim)
    throw IoError("read " + path + ": bad ndim " + std::to_string(nd));
  std::vector<int64_t> dims(nd);
  int64_t count = 1;
  for (int i = 0; i < nd; ++i) {
    uint64_t u = 0;
    f.read(reinterpret_cast<char*>(&u), 8);
    if (!f || u == 0 || u > (1ull << 32))
      throw IoError("read " + path + ": bad dim value");
    dims[i] = static_cast<int64_t>(u);
    if (count > (int64_t{1} << 40) / dims[i]) throw IoError("read " + path + ": dims too large");
    count *= dims[i];
  }
  std::vector<float> buf(static_cast<size_t>(count));
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
  if (f.gcount() != static_cast<std::streamsize>(buf.size() * 4))
    throw IoError("read " + path + ": truncated data section");
  char extra;
  if (f.read(&extra, 1))
    throw IoError("read " + path + ": trailing bytes after data section");
  std::vector<double> vals(buf.size());
  for (size_t i = 0; i < buf.size(); ++i) vals[i] = static_cast<double>(buf[i]);
  return Tensor(std::move(dims), std::move(vals));
}

}  // namespace attrcloak
