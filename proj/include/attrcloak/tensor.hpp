#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "attrcloak/errors.hpp"

namespace attrcloak {

// Dense row-major tensor of doubles. The buffer is shared copy-on-write:
// copies are O(1) and mut() detaches only when the buffer has other owners,
// so tapes can hold large constant weights without duplicating them.
class Tensor {
 public:
  Tensor() = default;

  // Zero-filled. Every dim must be positive.
  explicit Tensor(std::vector<int64_t> dims);

  Tensor(std::vector<int64_t> dims, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor full(std::vector<int64_t> dims, double v);

  const std::vector<int64_t>& dims() const { return dims_; }
  int64_t ndim() const { return static_cast<int64_t>(dims_.size()); }
  int64_t size() const { return size_; }
  bool defined() const { return data_ != nullptr; }

  const double* data() const { return data_->data(); }
  double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  // Detaches from shared storage if needed, then returns a writable pointer.
  double* mut();

  // Same data, new shape with identical element count. O(1), shares storage.
  Tensor reshaped(std::vector<int64_t> dims) const;

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }
  std::string shape_str() const;

  // Exact elementwise equality (bit-level for finite values).
  bool equals(const Tensor& o) const;

 private:
  std::vector<int64_t> dims_;
  int64_t size_ = 0;
  std::shared_ptr<std::vector<double>> data_;
};

std::string shape_str(const std::vector<int64_t>& dims);

// Round to f32 and back; the storage precision of every tensor on disk.
inline double quantize_f32(double x) { return static_cast<double>(static_cast<float>(x)); }
Tensor quantize_f32(const Tensor& t);

}  // namespace attrcloak
