#include "nerp/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nerp/error.hpp"

namespace nerp::phantoms {

bool Ellipse::contains(double x, double y) const {
  const double phi = angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(phi);
  const double s = std::sin(phi);
  const double dx = x - center_x;
  const double dy = y - center_y;
  const double u = (dx * c + dy * s) / semi_x;
  const double v = (-dx * s + dy * c) / semi_y;
  return u * u + v * v <= 1.0;
}

const std::array<Ellipse, 10>& shepp_logan_ellipses() {
  // intensity, semi_x, semi_y, center_x, center_y, angle (deg)
  static const std::array<Ellipse, 10> table{{
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  }};
  return table;
}

double shepp_logan_value(double x, double y) {
  double v = 0.0;
  for (const auto& e : shepp_logan_ellipses())
    if (e.contains(x, y)) v += e.intensity;
  return std::clamp(v, 0.0, 1.0);
}

ImageGrid shepp_logan(int size) {
  if (size < 8) throw InputError("Shepp-Logan size must be >= 8");
  ImageGrid img = ImageGrid::square(size);
  for (int r = 0; r < size; ++r) {
    const double y = 1.0 - 2.0 * (r + 0.5) / size;
    for (int c = 0; c < size; ++c) {
      const double x = 2.0 * (c + 0.5) / size - 1.0;
      img(r, c) = shepp_logan_value(x, y);
    }
  }
  return img;
}

void LesionSpec::validate() const {
  if (!(axes[0] > 0.0) || !(axes[1] > 0.0)) throw InputError("lesion axes must be positive");
  if (!(delta_intensity >= -1.0 && delta_intensity <= 1.0)) throw InputError("lesion delta must lie in [-1,1]");
  if (!std::isfinite(center[0]) || !std::isfinite(center[1]) || !std::isfinite(angle)) {
    throw InputError("lesion geometry must be finite");
  }
}

bool LesionSpec::contains(double fx, double fy) const {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double dx = fx - center[0];
  const double dy = fy - center[1];
  const double u = (dx * c + dy * s) / axes[0];
  const double v = (-dx * s + dy * c) / axes[1];
  return u * u + v * v <= 1.0;
}

std::vector<bool> lesion_mask(const std::vector<int>& shape, const LesionSpec& lesion) {
  if (shape.size() != 2) throw ShapeError("lesion mask requires a 2D shape");
  lesion.validate();
  const int rows = shape[0];
  const int cols = shape[1];
  std::vector<bool> mask(element_count(shape), false);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      mask[static_cast<std::size_t>(r) * cols + c] = lesion.contains((c + 0.5) / cols, (r + 0.5) / rows);
  return mask;
}

ImageGrid perturb_lesion(const ImageGrid& image, const LesionSpec& lesion) {
  if (image.ndim() != 2) throw ShapeError("perturb_lesion requires a 2D image");
  const std::vector<bool> mask = lesion_mask(image.shape(), lesion);
  ImageGrid out = image;
  if (lesion.delta_intensity == 0.0) return out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) out[i] = std::clamp(out[i] + lesion.delta_intensity, 0.0, 1.0);
  }
  return out;
}

ImageGrid perturb_lesions(const ImageGrid& image, const std::vector<LesionSpec>& lesions) {
  ImageGrid out = image;
  for (const auto& l : lesions) out = perturb_lesion(out, l);
  return out;
}

std::vector<LesionSpec> default_lesions() {
  return {
      LesionSpec{{0.66, 0.42}, {0.075, 0.055}, 0.5, 0.45},
      LesionSpec{{0.40, 0.66}, {0.04, 0.04}, 0.0, 0.25},
  };
}

LongitudinalPair make_longitudinal_pair(int size, const std::vector<LesionSpec>& lesions) {
  LongitudinalPair pair;
  pair.prior = shepp_logan(size);
  pair.target = perturb_lesions(pair.prior, lesions);
  pair.lesions = lesions;
  return pair;
}

}  // namespace nerp::phantoms
