#include "nomto/array.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace nomto {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d <= 0) throw ConfigError("array shape entries must be positive");
    n *= d;
  }
  return n;
}

NdArray::NdArray(std::vector<std::int64_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

NdArray NdArray::from_flat(std::vector<std::int64_t> shape,
                           std::vector<double> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw ConfigError("from_flat: shape does not match value count");
  NdArray a;
  a.shape_ = std::move(shape);
  a.data_ = std::move(values);
  return a;
}

bool NdArray::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double NdArray::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

std::string NdArray::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ",";
    os << shape_[i];
  }
  os << ")";
  return os.str();
}

Mask::Mask(std::vector<std::int64_t> shape, bool fill)
    : shape_(std::move(shape)),
      data_(shape_numel(shape_), fill ? 1 : 0) {}

std::int64_t Mask::count_true() const {
  std::int64_t c = 0;
  for (auto v : data_) c += (v != 0);
  return c;
}

}  // namespace nomto
