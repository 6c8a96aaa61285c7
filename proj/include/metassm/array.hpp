#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "metassm/common.hpp"

namespace metassm::ad {

// Dense row-major array of doubles, rank 0 (scalar), 1 (vector) or 2 (matrix).
class Array {
 public:
  Array() = default;
  explicit Array(std::vector<int> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
  Array(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw Error("Array: data length " + std::to_string(data_.size()) +
                  " does not match shape " + shape_str(shape_));
  }

  static Array scalar(double v) { return Array({}, {v}); }
  static Array zeros(const std::vector<int>& shape) { return Array(shape); }
  static Array ones(const std::vector<int>& shape) {
    Array a(shape);
    for (auto& v : a.data_) v = 1.0;
    return a;
  }
  static Array vec(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Array({n}, std::move(v));
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1 && shape_.size() <= 1; }

  int rows() const { return shape_.empty() ? 1 : shape_[0]; }
  int cols() const { return rank() == 2 ? shape_[1] : 1; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  // matrix element access, row-major
  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  bool same_shape(const Array& o) const { return shape_ == o.shape_; }

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw Error("Array: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + ")";
  }
  std::string shape_str() const { return shape_str(shape_); }

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace metassm::ad
