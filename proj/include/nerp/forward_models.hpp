#pragma once

// Linear sensing operators and their adjoints.
//
// CT: 2D parallel-beam Radon transform, ray-driven with bilinear interpolation.
// The image occupies [-0.5, 0.5]^2 (image-width units, x to the right along
// columns, y up along rows), so detector offsets and line integrals are also
// in image widths.
//
// MRI: direct (exact) nonuniform DFT on pixel positions centered at N/2, with
// k-space coordinates in cycles per field of view.

#include <complex>
#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nerp/image.hpp"

namespace nerp::ops {

enum class Modality { ct, mri };

const char* to_string(Modality m);
Modality parse_modality(const std::string& name);

struct SamplingSpec {
  Modality modality = Modality::ct;
  int num_views_or_spokes = 20;
  // Detector bins (CT) or samples per spoke (MRI); 0 selects the default
  // ceil(sqrt(2) N) bins or 2N samples per spoke.
  int samples_per_view = 0;
  double detector_pitch = 1.0;  // pixels
  double noise_sigma = 0.0;     // std of additive Gaussian noise, measurement units
  std::uint64_t noise_seed = 0;

  void validate() const;
};

int default_detector_bins(int image_size);
int default_samples_per_spoke(int image_size);

// ---------------------------------------------------------------- CT -----

struct SinogramData {
  int image_size = 0;
  std::vector<double> angles;   // radians in [0, pi), strictly increasing
  std::vector<double> offsets;  // image-width units, uniform and symmetric
  Eigen::MatrixXd values;       // angles x offsets

  void validate() const;
};

std::vector<double> uniform_angles(int num_views);
std::vector<double> detector_offsets(int image_size, int bins, double pitch_pixels = 1.0);

class SensingOperator {
public:
  virtual ~SensingOperator() = default;

  virtual int image_size() const = 0;
  virtual Eigen::Index measurement_size() const = 0;
  // Both act on row-major flattened square images and flattened real
  // measurement vectors (complex data as [real parts; imaginary parts]).
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& image) const = 0;
  virtual Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& measurements) const = 0;
};

class RadonOperator final : public SensingOperator {
public:
  RadonOperator(int image_size, std::vector<double> angles, std::vector<double> offsets);

  int image_size() const override { return size_; }
  Eigen::Index measurement_size() const override {
    return static_cast<Eigen::Index>(angles_.size() * offsets_.size());
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& image) const override;
  Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& measurements) const override;

  const std::vector<double>& angles() const noexcept { return angles_; }
  const std::vector<double>& offsets() const noexcept { return offsets_; }
  // Distance between samples along a ray, image-width units (half a pixel).
  double step() const noexcept { return step_; }

private:
  template <typename Visit>
  void walk_ray(std::size_t angle, std::size_t bin, Visit&& visit) const;

  int size_;
  std::vector<double> angles_;
  std::vector<double> offsets_;
  double step_;
  int samples_per_ray_;
};

SinogramData radon_forward(const ImageGrid& image, const SamplingSpec& spec);
ImageGrid radon_adjoint(const SinogramData& sino, const std::vector<int>& image_shape);

// Ram-Lak filtered backprojection with linear interpolation, scaled by pi/K.
ImageGrid fbp_reconstruct(const SinogramData& sino, const std::vector<int>& image_shape);

// --------------------------------------------------------------- MRI -----

struct KSpaceData {
  int image_size = 0;
  Eigen::MatrixX2d coords;             // (kx, ky) per sample, cycles per FOV
  Eigen::VectorXcd values;
  Eigen::VectorXd density_weights;     // one per sample, >= 0
  int num_spokes = 0;
  int samples_per_spoke = 0;

  void validate() const;
};

// Spoke k has angle k * pi * (3 - sqrt 5) mod pi; samples are uniformly
// spaced on [-N/2, N/2) along the spoke. Rows are ordered spoke-major.
Eigen::MatrixX2d golden_angle_spokes(int num_spokes, int samples_per_spoke, int grid_size);

double golden_angle();

// Radial ramp |k| normalized to sum 1; samples at DC get half the smallest
// nonzero ramp weight.
Eigen::VectorXd ramp_density_weights(const Eigen::MatrixX2d& coords);

class NudftOperator final : public SensingOperator {
public:
  NudftOperator(int image_size, Eigen::MatrixX2d coords);

  int image_size() const override { return size_; }
  Eigen::Index measurement_size() const override { return 2 * coords_.rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& image) const override;
  Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& measurements) const override;

  // Complex-valued forms: S(k) = sum_p x_p exp(-2 pi i k.p / N) and
  // x_p = Re sum_k w_k S(k) exp(+2 pi i k.p / N) (w = 1 when weights is empty).
  Eigen::VectorXcd transform(const Eigen::VectorXd& image) const;
  Eigen::VectorXd adjoint(const Eigen::VectorXcd& samples, const Eigen::VectorXd& weights = {}) const;

  const Eigen::MatrixX2d& coords() const noexcept { return coords_; }
  Eigen::Index num_samples() const noexcept { return coords_.rows(); }

private:
  int size_;
  Eigen::MatrixX2d coords_;
  // cos/sin of 2 pi k (index - N/2) / N, samples x columns (x) or rows (y).
  Eigen::MatrixXd cos_x_, sin_x_;
  Eigen::MatrixXd cos_y_, sin_y_;
};

Eigen::VectorXcd nudft_forward(const ImageGrid& image, const Eigen::MatrixX2d& coords);
ImageGrid nudft_adjoint(const KSpaceData& samples, const std::vector<int>& image_shape,
                        bool apply_density_compensation);

// Simulated radial acquisition: golden-angle spokes, forward NUDFT, optional
// seeded noise on real and imaginary parts, ramp density weights attached.
KSpaceData radial_forward(const ImageGrid& image, const SamplingSpec& spec);

// Density-compensated adjoint scaled so its point spread function sums to 1.
ImageGrid adjoint_nufft_reconstruct(const KSpaceData& samples, const std::vector<int>& image_shape);

// ------------------------------------------------------ measurements -----

using Measurements = std::variant<SinogramData, KSpaceData>;

Modality modality_of(const Measurements& m);
int image_size_of(const Measurements& m);
std::unique_ptr<SensingOperator> make_operator(const Measurements& m);
// Real measurement vector matching SensingOperator::apply layout.
Eigen::VectorXd flatten(const Measurements& m);
Measurements simulate(const ImageGrid& image, const SamplingSpec& spec);

}  // namespace nerp::ops
