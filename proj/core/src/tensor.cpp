#include "hypernets/tensor.hpp"

#include <cmath>
#include <sstream>

#include "hypernets/errors.hpp"

namespace hypernets {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
void check_shape(const Shape& shape) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor shape has non-positive dimension " + shape_str(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_ = std::make_shared<const std::vector<double>>(numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_shape(shape_);
  if (values.size() != numel(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> v(numel(shape), value);
  return Tensor(std::move(shape), std::move(v));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::at2(int r, int c) const {
  return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
                  static_cast<std::size_t>(c)];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on non-scalar tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

bool Tensor::all_finite() const {
  if (!data_) return true;
  for (double v : *data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

}  // namespace hypernets
