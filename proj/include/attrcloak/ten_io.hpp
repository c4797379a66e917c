#pragma once

#include <string>

#include "attrcloak/tensor.hpp"

namespace attrcloak {

// .ten binary tensor format, little-endian throughout:
//   bytes 0-3   magic "TENS"
//   bytes 4-7   u32 format version (1)
//   byte  8     u8 ndim
//   then        ndim x u64 dims
//   then        product(dims) x f32, row-major
//
// Values are stored at f32 precision; loading promotes back to double.
void write_ten(const std::string& path, const Tensor& t);
Tensor read_ten(const std::string& path);

}  // namespace attrcloak
