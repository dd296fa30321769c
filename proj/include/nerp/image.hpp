#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace nerp {

// Dense real-valued image stored row-major (last axis fastest). Values are
// nominally normalized to [0,1]; `source_min`/`source_max` remember the
// intensity range the data was normalized from so it can be mapped back.
class ImageGrid {
public:
  ImageGrid() = default;
  explicit ImageGrid(std::vector<int> shape, double fill = 0.0);
  ImageGrid(std::vector<int> shape, std::vector<double> values);

  static ImageGrid square(int size, double fill = 0.0) { return ImageGrid({size, size}, fill); }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int ndim() const noexcept { return static_cast<int>(shape_.size()); }
  int rows() const { return shape_.at(0); }
  int cols() const { return shape_.size() > 1 ? shape_[1] : 1; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(int r, int c) { return values_[static_cast<std::size_t>(r) * cols() + c]; }
  double operator()(int r, int c) const { return values_[static_cast<std::size_t>(r) * cols() + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& data() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double source_min = 0.0;
  double source_max = 1.0;

  bool same_shape(const ImageGrid& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  // Copy with every value clamped to [lo, hi].
  ImageGrid clamped(double lo = 0.0, double hi = 1.0) const;

  // Affine map of the value range onto [0,1]; the original range is recorded.
  // A constant image maps to all zeros.
  ImageGrid normalized() const;

  // Slice `index` along the first axis of a 3D volume.
  ImageGrid slice(int index) const;

private:
  std::vector<int> shape_;
  std::vector<double> values_;
};

// Number of elements for a shape; throws ShapeError on non-positive extents.
std::size_t element_count(const std::vector<int>& shape);

}  // namespace nerp
