#include "gnr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gnr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_numel(shape_))
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
}

Tensor Tensor::reshaped(Shape shape) const& {
  Tensor t = *this;
  return std::move(t).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::slice_rows(int begin, int end) const {
  if (rank() < 1 || begin < 0 || end > shape_[0] || begin > end)
    throw ShapeError("bad row slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") of " + shape_str(shape_));
  Shape s = shape_;
  s[0] = end - begin;
  const std::size_t row = shape_[0] ? data_.size() / static_cast<std::size_t>(shape_[0]) : 0;
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(row * begin),
                         data_.begin() + static_cast<std::ptrdiff_t>(row * end));
  return Tensor(std::move(s), std::move(out));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float Tensor::max_abs() const {
  float m = 0.0f;
  for (float v : data_) m = std::max(m, std::fabs(v));
  return m;
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape s = items.front().shape();
  s.insert(s.begin(), static_cast<int>(items.size()));
  std::vector<float> out;
  out.reserve(shape_numel(s));
  for (const Tensor& t : items) {
    if (t.shape() != items.front().shape()) throw ShapeError("stack: mismatched shapes");
    out.insert(out.end(), t.storage().begin(), t.storage().end());
  }
  return Tensor(std::move(s), std::move(out));
}

Tensor concat_rows(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("concat of zero tensors");
  Shape s = items.front().shape();
  int rows = 0;
  std::vector<float> out;
  for (const Tensor& t : items) {
    Shape a = t.shape(), b = s;
    a[0] = b[0] = 0;
    if (a != b) throw ShapeError("concat_rows: mismatched trailing shapes");
    rows += t.dim(0);
    out.insert(out.end(), t.storage().begin(), t.storage().end());
  }
  s[0] = rows;
  return Tensor(std::move(s), std::move(out));
}

}  // namespace gnr
