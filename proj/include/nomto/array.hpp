#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nomto/common.hpp"

namespace nomto {

// Dense row-major n-d array of doubles. Deliberately small: shape + flat
// storage + a few indexing helpers; linear algebra happens through Eigen maps
// over data().
class NdArray {
public:
  NdArray() = default;
  explicit NdArray(std::vector<std::int64_t> shape, double fill = 0.0);

  static NdArray from_flat(std::vector<std::int64_t> shape,
                           std::vector<double> values);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(int axis) const { return shape_.at(axis); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& flat() { return data_; }
  const std::vector<double>& flat() const { return data_; }

  double& operator[](std::int64_t i) { return data_[i]; }
  double operator[](std::int64_t i) const { return data_[i]; }

  double& at(std::int64_t i, std::int64_t j) {
    return data_[i * shape_[1] + j];
  }
  double at(std::int64_t i, std::int64_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool same_shape(const NdArray& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  double max_abs() const;

  std::string shape_str() const;

private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

// Companion boolean mask with the same layout (1 = valid / defined).
class Mask {
public:
  Mask() = default;
  explicit Mask(std::vector<std::int64_t> shape, bool fill = true);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  std::uint8_t& operator[](std::int64_t i) { return data_[i]; }
  std::uint8_t operator[](std::int64_t i) const { return data_[i]; }

  std::vector<std::uint8_t>& flat() { return data_; }
  const std::vector<std::uint8_t>& flat() const { return data_; }

  std::int64_t count_true() const;
  bool all_true() const { return count_true() == numel(); }

private:
  std::vector<std::int64_t> shape_;
  std::vector<std::uint8_t> data_;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

}  // namespace nomto
