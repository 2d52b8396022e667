#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace hypernets {

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense row-major f64 tensor. Storage is immutable and shared, so copies are
// cheap and saved forward values can be captured by backward closures without
// duplication. A tensor produced under a tape carries its node id; constants
// have node() < 0 and may be shared freely across threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);  // shape {1}

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool empty() const { return size() == 0; }

  const std::vector<double>& values() const { return *data_; }
  const double* data() const { return data_->data(); }
  double at(std::size_t i) const { return (*data_)[i]; }
  double at2(int r, int c) const;  // 2-d convenience
  double item() const;             // requires size() == 1

  bool all_finite() const;

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool recorded() const { return node_ >= 0; }

  // Same values, detached from any tape.
  Tensor detached() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

}  // namespace hypernets
