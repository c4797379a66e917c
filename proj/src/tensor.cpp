#include "attrcloak/tensor.hpp"

#include <sstream>

namespace attrcloak {

namespace {
int64_t checked_size(const std::vector<int64_t>& dims) {
  if (dims.empty()) throw ShapeError("tensor: dims must be non-empty");
  int64_t n = 1;
  for (int64_t d : dims) {
    if (d <= 0) throw ShapeError("tensor: dims must be positive, got " + attrcloak::shape_str(dims));
    if (n > (int64_t{1} << 40) / d) throw ShapeError("tensor: size overflow for " + attrcloak::shape_str(dims));
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> dims)
    : dims_(std::move(dims)),
      size_(checked_size(dims_)),
      data_(std::make_shared<std::vector<double>>(static_cast<size_t>(size_), 0.0)) {}

Tensor::Tensor(std::vector<int64_t> dims, std::vector<double> values)
    : dims_(std::move(dims)), size_(checked_size(dims_)) {
  if (static_cast<int64_t>(values.size()) != size_) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     attrcloak::shape_str(dims_));
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(std::vector<int64_t> dims, double v) {
  Tensor t(std::move(dims));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

double* Tensor::mut() {
  if (data_.use_count() > 1) data_ = std::make_shared<std::vector<double>>(*data_);
  return data_->data();
}

Tensor Tensor::reshaped(std::vector<int64_t> dims) const {
  int64_t n = checked_size(dims);
  if (n != size_) {
    throw ShapeError("reshape: " + attrcloak::shape_str(dims_) + " -> " +
                     attrcloak::shape_str(dims) + " changes element count");
  }
  Tensor t;
  t.dims_ = std::move(dims);
  t.size_ = n;
  t.data_ = data_;
  return t;
}

bool Tensor::equals(const Tensor& o) const {
  if (dims_ != o.dims_) return false;
  return *data_ == *o.data_;
}

std::string Tensor::shape_str() const { return attrcloak::shape_str(dims_); }

std::string shape_str(const std::vector<int64_t>& dims) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ")";
  return os.str();
}

Tensor quantize_f32(const Tensor& t) {
  Tensor out = t;
  double* p = out.mut();
  for (int64_t i = 0; i < out.size(); ++i) p[i] = quantize_f32(p[i]);
  return out;
}

}  // namespace attrcloak
