#include "s2h/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "s2h/error.hpp"

namespace s2h {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor rank must be >= 1");
  for (std::size_t a = 0; a < shape.size(); ++a)
    if (shape[a] == 0) throw DimensionError("axis " + std::to_string(a) + " has zero extent");
}
}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_size(shape_) != data_.size())
    throw DimensionError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
}

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (begin >= end || end > t.dim(0)) throw DimensionError("axis 0 slice out of range");
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = end - begin;
  std::vector<double> data(t.data() + begin * row, t.data() + end * row);
  return Tensor(std::move(shape), std::move(data));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (rows.empty()) throw DimensionError("axis 0 gather of zero rows");
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = rows.size();
  std::vector<double> data;
  data.reserve(rows.size() * row);
  for (std::size_t r : rows) {
    if (r >= t.dim(0)) throw DimensionError("axis 0 gather index out of range");
    data.insert(data.end(), t.data() + r * row, t.data() + (r + 1) * row);
  }
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace s2h
