#include "nerp/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nerp/error.hpp"

namespace nerp {

std::size_t element_count(const std::vector<int>& shape) {
  if (shape.empty()) throw ShapeError("image shape must have at least one axis");
  std::size_t n = 1;
  for (int extent : shape) {
    if (extent < 1) throw ShapeError("image extent must be >= 1, got " + std::to_string(extent));
    n *= static_cast<std::size_t>(extent);
  }
  return n;
}

ImageGrid::ImageGrid(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

ImageGrid::ImageGrid(std::vector<int> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != element_count(shape_)) {
    throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape");
  }
}

bool ImageGrid::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ImageGrid ImageGrid::clamped(double lo, double hi) const {
  ImageGrid out = *this;
  for (double& v : out.values_) v = std::clamp(v, lo, hi);
  return out;
}

ImageGrid ImageGrid::normalized() const {
  ImageGrid out = *this;
  if (values_.empty()) return out;
  auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
  const double vmin = *lo;
  const double vmax = *hi;
  const double span = vmax - vmin;
  for (double& v : out.values_) v = span > 0.0 ? (v - vmin) / span : 0.0;
  out.source_min = vmin;
  out.source_max = vmax;
  return out;
}

ImageGrid ImageGrid::slice(int index) const {
  if (ndim() != 3) throw ShapeError("slice() requires a 3D volume");
  if (index < 0 || index >= shape_[0]) throw ShapeError("slice index out of range");
  const std::size_t plane = static_cast<std::size_t>(shape_[1]) * shape_[2];
  std::vector<double> vals(values_.begin() + static_cast<std::ptrdiff_t>(plane * index),
                           values_.begin() + static_cast<std::ptrdiff_t>(plane * (index + 1)));
  ImageGrid out({shape_[1], shape_[2]}, std::move(vals));
  out.source_min = source_min;
  out.source_max = source_max;
  return out;
}

}  // namespace nerp
