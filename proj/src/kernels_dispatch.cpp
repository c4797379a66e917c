#include <cstdlib>
#include <string>

#include "attrcloak/errors.hpp"
#include "attrcloak/kernels.hpp"

namespace attrcloak::kern {
namespace {

const Kernels& pick() {
  const char* env = std::getenv("ATTRCLOAK_KERNELS");
  std::string want = env ? env : "auto";
  if (want == "scalar") return scalar_kernels();
#if defined(__x86_64__) || defined(_M_X64)
  if (want == "avx2") {
    if (!avx2_supported()) throw ConfigError("ATTRCLOAK_KERNELS=avx2 but cpu lacks avx2+fma");
    return avx2_kernels();
  }
  if (want == "auto") return avx2_supported() ? avx2_kernels() : scalar_kernels();
#endif
#if defined(__aarch64__)
  if (want == "neon") return neon_kernels();
  if (want == "auto") return neon_kernels();
#endif
  if (want == "auto") return scalar_kernels();
  throw ConfigError("ATTRCLOAK_KERNELS=" + want + " is not available on this build");
}

}  // namespace

const Kernels& active() {
  static const Kernels& k = pick();
  return k;
}

std::vector<const Kernels*> available() {
  std::vector<const Kernels*> out{&scalar_kernels()};
#if defined(__x86_64__) || defined(_M_X64)
  if (avx2_supported()) out.push_back(&avx2_kernels());
#endif
#if defined(__aarch64__)
  out.push_back(&neon_kernels());
#endif
  return out;
}

}  // namespace attrcloak::kern
