#pragma once

#include <array>
#include <vector>

#include "nerp/image.hpp"

namespace nerp::phantoms {

// One additive ellipse in [-1,1]^2 phantom coordinates (y up).
struct Ellipse {
  double intensity;
  double semi_x;
  double semi_y;
  double center_x;
  double center_y;
  double angle_deg;

  bool contains(double x, double y) const;
};

// The ten ellipses of the high-contrast ("modified") Shepp-Logan phantom.
const std::array<Ellipse, 10>& shepp_logan_ellipses();

// Phantom value at a point of [-1,1]^2, clamped to [0,1].
double shepp_logan_value(double x, double y);

// Phantom sampled at pixel centers; row 0 is the top of the image.
ImageGrid shepp_logan(int size);

// Elliptical intensity change in fractional image coordinates: center.x runs
// along columns, center.y along rows (both in [0,1]); axes are semi-axes as
// fractions of the image side.
struct LesionSpec {
  std::array<double, 2> center{0.5, 0.5};
  std::array<double, 2> axes{0.05, 0.05};
  double angle = 0.0;  // radians
  double delta_intensity = 0.0;

  void validate() const;
  bool contains(double fx, double fy) const;
};

// Adds delta inside the lesion ellipse and clamps those pixels to [0,1].
// Pixels outside are left bitwise unchanged.
ImageGrid perturb_lesion(const ImageGrid& image, const LesionSpec& lesion);
ImageGrid perturb_lesions(const ImageGrid& image, const std::vector<LesionSpec>& lesions);

// Pixel-center membership of the lesion ellipse (row-major).
std::vector<bool> lesion_mask(const std::vector<int>& shape, const LesionSpec& lesion);

// Prior/target exam pair: the phantom and the phantom with lesions applied.
struct LongitudinalPair {
  ImageGrid prior;
  ImageGrid target;
  std::vector<LesionSpec> lesions;
};

// Default lesion set used by the experiments: a bright growth in the right
// hemisphere and a faint one near the lower ventricles.
std::vector<LesionSpec> default_lesions();
LongitudinalPair make_longitudinal_pair(int size, const std::vector<LesionSpec>& lesions);

}  // namespace nerp::phantoms
