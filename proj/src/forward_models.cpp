#include "nerp/forward_models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <unsupported/Eigen/FFT>

#include "nerp/error.hpp"

namespace nerp::ops {

namespace {

constexpr double kPi = std::numbers::pi;

int require_square_2d(const std::vector<int>& shape, const char* what) {
  if (shape.size() != 2 || shape[0] != shape[1] || shape[0] < 1) {
    throw GeometryError(std::string(what) + " requires a square 2D image");
  }
  return shape[0];
}

Eigen::VectorXd row_major(const ImageGrid& image) {
  return Eigen::Map<const Eigen::VectorXd>(image.data().data(), static_cast<Eigen::Index>(image.size()));
}

ImageGrid from_row_major(const Eigen::VectorXd& v, int n) {
  return ImageGrid({n, n}, std::vector<double>(v.data(), v.data() + v.size()));
}

// Image-major (row-major) view as an N x N matrix with rows = image rows.
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

const char* to_string(Modality m) { return m == Modality::ct ? "ct" : "mri"; }

Modality parse_modality(const std::string& name) {
  if (name == "ct") return Modality::ct;
  if (name == "mri") return Modality::mri;
  throw InputError("unknown modality '" + name + "'");
}

void SamplingSpec::validate() const {
  if (num_views_or_spokes < 1) throw InputError("number of views/spokes must be >= 1");
  if (samples_per_view < 0) throw InputError("samples per view must be >= 0 (0 = default)");
  if (!(detector_pitch > 0.0) || !std::isfinite(detector_pitch)) throw InputError("detector pitch must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw InputError("noise sigma must be finite and >= 0");
}

int default_detector_bins(int image_size) {
  return static_cast<int>(std::ceil(std::numbers::sqrt2 * image_size));
}

int default_samples_per_spoke(int image_size) { return 2 * image_size; }

// ---------------------------------------------------------------- CT -----

std::vector<double> uniform_angles(int num_views) {
  if (num_views < 1) throw InputError("number of views must be >= 1");
  std::vector<double> angles(num_views);
  for (int a = 0; a < num_views; ++a) angles[a] = kPi * a / num_views;
  return angles;
}

std::vector<double> detector_offsets(int image_size, int bins, double pitch_pixels) {
  if (image_size < 1 || bins < 1) throw InputError("detector needs positive image size and bin count");
  const double pitch = pitch_pixels / image_size;
  std::vector<double> offsets(bins);
  for (int b = 0; b < bins; ++b) offsets[b] = (b - 0.5 * (bins - 1)) * pitch;
  return offsets;
}

void SinogramData::validate() const {
  if (image_size < 1) throw ShapeError("sinogram image size must be positive");
  if (angles.empty() || offsets.empty()) throw ShapeError("sinogram needs at least one angle and one bin");
  if (values.rows() != static_cast<Eigen::Index>(angles.size()) ||
      values.cols() != static_cast<Eigen::Index>(offsets.size())) {
    throw ShapeError("sinogram values do not match angles x offsets");
  }
  for (std::size_t a = 1; a < angles.size(); ++a)
    if (!(angles[a] > angles[a - 1])) throw InputError("sinogram angles must be strictly increasing");
  if (!values.allFinite()) throw InputError("sinogram contains non-finite values");
}

RadonOperator::RadonOperator(int image_size, std::vector<double> angles, std::vector<double> offsets)
    : size_(image_size), angles_(std::move(angles)), offsets_(std::move(offsets)) {
  if (size_ < 1) throw GeometryError("image size must be positive");
  if (angles_.empty() || offsets_.empty()) throw GeometryError("need at least one angle and one detector bin");
  step_ = 0.5 / size_;
  const double half_length = 0.5 * std::numbers::sqrt2;
  samples_per_ray_ = 2 * static_cast<int>(std::ceil(half_length / step_)) + 1;
}

template <typename Visit>
void RadonOperator::walk_ray(std::size_t angle, std::size_t bin, Visit&& visit) const {
  const double c = std::cos(angles_[angle]);
  const double s = std::sin(angles_[angle]);
  const double offset = offsets_[bin];
  const int n = size_;
  const double center = 0.5 * (samples_per_ray_ - 1);
  for (int j = 0; j < samples_per_ray_; ++j) {
    const double t = (j - center) * step_;
    const double x = offset * c - t * s;
    const double y = offset * s + t * c;
    const double u = (x + 0.5) * n - 0.5;  // column
    const double v = (0.5 - y) * n - 0.5;  // row
    if (u <= -1.0 || v <= -1.0 || u >= n || v >= n) continue;
    const double uf = std::floor(u);
    const double vf = std::floor(v);
    const int c0 = static_cast<int>(uf);
    const int r0 = static_cast<int>(vf);
    const double fu = u - uf;
    const double fv = v - vf;
    const bool c0_in = c0 >= 0;
    const bool c1_in = c0 + 1 < n;
    const bool r0_in = r0 >= 0;
    const bool r1_in = r0 + 1 < n;
    if (r0_in && c0_in) visit(static_cast<Eigen::Index>(r0) * n + c0, (1 - fu) * (1 - fv) * step_);
    if (r0_in && c1_in) visit(static_cast<Eigen::Index>(r0) * n + c0 + 1, fu * (1 - fv) * step_);
    if (r1_in && c0_in) visit(static_cast<Eigen::Index>(r0 + 1) * n + c0, (1 - fu) * fv * step_);
    if (r1_in && c1_in) visit(static_cast<Eigen::Index>(r0 + 1) * n + c0 + 1, fu * fv * step_);
  }
}

Eigen::VectorXd RadonOperator::apply(const Eigen::VectorXd& image) const {
  if (image.size() != static_cast<Eigen::Index>(size_) * size_) throw ShapeError("image size does not match projector");
  const std::size_t bins = offsets_.size();
  Eigen::VectorXd out(measurement_size());
  for (std::size_t a = 0; a < angles_.size(); ++a) {
    for (std::size_t b = 0; b < bins; ++b) {
      double acc = 0.0;
      walk_ray(a, b, [&](Eigen::Index p, double w) { acc += w * image[p]; });
      out[static_cast<Eigen::Index>(a * bins + b)] = acc;
    }
  }
  return out;
}

Eigen::VectorXd RadonOperator::apply_adjoint(const Eigen::VectorXd& measurements) const {
  if (measurements.size() != measurement_size()) throw ShapeError("sinogram size does not match projector");
  const std::size_t bins = offsets_.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size_) * size_);
  for (std::size_t a = 0; a < angles_.size(); ++a) {
    for (std::size_t b = 0; b < bins; ++b) {
      const double value = measurements[static_cast<Eigen::Index>(a * bins + b)];
      if (value == 0.0) continue;
      walk_ray(a, b, [&](Eigen::Index p, double w) { out[p] += w * value; });
    }
  }
  return out;
}

SinogramData radon_forward(const ImageGrid& image, const SamplingSpec& spec) {
  spec.validate();
  if (spec.modality != Modality::ct) throw InputError("radon_forward requires a CT sampling spec");
  const int n = require_square_2d(image.shape(), "radon_forward");
  const int bins = spec.samples_per_view > 0 ? spec.samples_per_view : default_detector_bins(n);

  SinogramData sino;
  sino.image_size = n;
  sino.angles = uniform_angles(spec.num_views_or_spokes);
  sino.offsets = detector_offsets(n, bins, spec.detector_pitch);
  const RadonOperator op(n, sino.angles, sino.offsets);
  Eigen::VectorXd flat = op.apply(row_major(image));
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.noise_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] += noise(rng);
  }
  sino.values = Eigen::Map<const RowMajorMatrix>(flat.data(), static_cast<Eigen::Index>(sino.angles.size()), bins);
  return sino;
}

ImageGrid radon_adjoint(const SinogramData& sino, const std::vector<int>& image_shape) {
  sino.validate();
  const int n = require_square_2d(image_shape, "radon_adjoint");
  if (n != sino.image_size) throw ShapeError("image shape does not match sinogram geometry");
  const RadonOperator op(n, sino.angles, sino.offsets);
  const RowMajorMatrix rm = sino.values;
  const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
  return from_row_major(op.apply_adjoint(flat), n);
}

ImageGrid fbp_reconstruct(const SinogramData& sino, const std::vector<int>& image_shape) {
  sino.validate();
  const int n = require_square_2d(image_shape, "fbp_reconstruct");
  const int num_angles = static_cast<int>(sino.angles.size());
  const int bins = static_cast<int>(sino.offsets.size());
  const double tau = bins > 1 ? sino.offsets[1] - sino.offsets[0] : 1.0 / n;

  int padded = 1;
  while (padded < 2 * bins) padded <<= 1;

  // Band-limited ramp kernel sampled at the detector pitch, FFT'd once.
  std::vector<double> kernel(padded, 0.0);
  kernel[0] = 1.0 / (4.0 * tau * tau);
  for (int k = 1; k <= padded / 2; ++k) {
    if (k % 2 == 0) continue;
    const double v = -1.0 / (k * k * kPi * kPi * tau * tau);
    kernel[k] = v;
    kernel[padded - k] = v;
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> response;
  fft.fwd(response, kernel);

  Eigen::MatrixXd filtered(num_angles, bins);
  std::vector<double> row(padded);
  std::vector<std::complex<double>> spectrum;
  std::vector<double> back;
  for (int a = 0; a < num_angles; ++a) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int b = 0; b < bins; ++b) row[b] = sino.values(a, b);
    fft.fwd(spectrum, row);
    for (int k = 0; k < padded; ++k) spectrum[k] *= response[k].real();
    fft.inv(back, spectrum);
    for (int b = 0; b < bins; ++b) filtered(a, b) = tau * back[b];
  }

  ImageGrid out = ImageGrid::square(n);
  const double scale = kPi / num_angles;
  const double first = sino.offsets.front();
  for (int a = 0; a < num_angles; ++a) {
    const double c = std::cos(sino.angles[a]);
    const double s = std::sin(sino.angles[a]);
    for (int r = 0; r < n; ++r) {
      const double y = 0.5 - (r + 0.5) / n;
      for (int col = 0; col < n; ++col) {
        const double x = (col + 0.5) / n - 0.5;
        const double pos = (x * c + y * s - first) / tau;
        const double pf = std::floor(pos);
        const int i0 = static_cast<int>(pf);
        const double f = pos - pf;
        double v = 0.0;
        if (i0 >= 0 && i0 < bins) v += (1.0 - f) * filtered(a, i0);
        if (i0 + 1 >= 0 && i0 + 1 < bins) v += f * filtered(a, i0 + 1);
        out(r, col) += scale * v;
      }
    }
  }
  return out;
}

// --------------------------------------------------------------- MRI -----

double golden_angle() { return kPi * (3.0 - std::sqrt(5.0)); }

Eigen::MatrixX2d golden_angle_spokes(int num_spokes, int samples_per_spoke, int grid_size) {
  if (num_spokes < 1 || samples_per_spoke < 1 || grid_size < 1) throw InputError("spoke counts must be >= 1");
  Eigen::MatrixX2d coords(static_cast<Eigen::Index>(num_spokes) * samples_per_spoke, 2);
  const double spacing = static_cast<double>(grid_size) / samples_per_spoke;
  for (int k = 0; k < num_spokes; ++k) {
    const double angle = std::fmod(k * golden_angle(), kPi);
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    for (int j = 0; j < samples_per_spoke; ++j) {
      const double radius = -0.5 * grid_size + j * spacing;
      const Eigen::Index row = static_cast<Eigen::Index>(k) * samples_per_spoke + j;
      coords(row, 0) = radius * c;
      coords(row, 1) = radius * s;
    }
  }
  return coords;
}

Eigen::VectorXd ramp_density_weights(const Eigen::MatrixX2d& coords) {
  Eigen::VectorXd w = coords.rowwise().norm();
  constexpr double kDcTolerance = 1e-12;
  double smallest = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] > kDcTolerance) smallest = std::min(smallest, w[i]);
  if (!std::isfinite(smallest)) smallest = 1.0;  // only DC samples
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w[i] <= kDcTolerance) w[i] = 0.5 * smallest;
  const double total = w.sum();
  if (total > 0.0) w /= total;
  return w;
}

void KSpaceData::validate() const {
  if (image_size < 1) throw ShapeError("k-space image size must be positive");
  if (values.size() != coords.rows()) throw ShapeError("k-space value count does not match coordinates");
  if (density_weights.size() != 0 && density_weights.size() != coords.rows()) {
    throw ShapeError("density weight count does not match samples");
  }
  if (!values.allFinite()) throw InputError("k-space contains non-finite values");
  if ((density_weights.array() < 0.0).any()) throw InputError("density weights must be >= 0");
}

NudftOperator::NudftOperator(int image_size, Eigen::MatrixX2d coords) : size_(image_size), coords_(std::move(coords)) {
  if (size_ < 1) throw GeometryError("image size must be positive");
  const double band = 0.5 * size_ + 1e-9;
  if (!coords_.allFinite() || (coords_.array().abs() > band).any()) {
    throw InputError("k-space coordinate outside the Nyquist band [-N/2, N/2]");
  }
  const Eigen::Index k = coords_.rows();
  cos_x_.resize(k, size_);
  sin_x_.resize(k, size_);
  cos_y_.resize(k, size_);
  sin_y_.resize(k, size_);
  for (int p = 0; p < size_; ++p) {
    const double pos = p - 0.5 * size_;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double px = 2.0 * kPi * coords_(i, 0) * pos / size_;
      const double py = 2.0 * kPi * coords_(i, 1) * pos / size_;
      cos_x_(i, p) = std::cos(px);
      sin_x_(i, p) = std::sin(px);
      cos_y_(i, p) = std::cos(py);
      sin_y_(i, p) = std::sin(py);
    }
  }
}

Eigen::VectorXcd NudftOperator::transform(const Eigen::VectorXd& image) const {
  if (image.size() != static_cast<Eigen::Index>(size_) * size_) throw ShapeError("image size does not match NUDFT");
  const Eigen::Map<const RowMajorMatrix> x(image.data(), size_, size_);
  // T = X * conj-phase over columns; exp(-i a) = cos a - i sin a.
  const Eigen::MatrixXd tr = x * cos_x_.transpose();
  const Eigen::MatrixXd ti = -(x * sin_x_.transpose());
  const Eigen::Index k = coords_.rows();
  Eigen::VectorXcd out(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double re = cos_y_.row(i).dot(tr.col(i)) + sin_y_.row(i).dot(ti.col(i));
    const double im = cos_y_.row(i).dot(ti.col(i)) - sin_y_.row(i).dot(tr.col(i));
    out[i] = {re, im};
  }
  return out;
}

Eigen::VectorXd NudftOperator::adjoint(const Eigen::VectorXcd& samples, const Eigen::VectorXd& weights) const {
  const Eigen::Index k = coords_.rows();
  if (samples.size() != k) throw ShapeError("sample count does not match NUDFT coordinates");
  if (weights.size() != 0 && weights.size() != k) throw ShapeError("weight count does not match samples");
  Eigen::VectorXd zr = samples.real();
  Eigen::VectorXd zi = samples.imag();
  if (weights.size() != 0) {
    zr.array() *= weights.array();
    zi.array() *= weights.array();
  }
  // U = z * exp(+i a_x), x = Re(exp(+i a_y)^T U).
  const Eigen::MatrixXd ur = cos_x_.array().colwise() * zr.array() - sin_x_.array().colwise() * zi.array();
  const Eigen::MatrixXd ui = sin_x_.array().colwise() * zr.array() + cos_x_.array().colwise() * zi.array();
  const RowMajorMatrix x = cos_y_.transpose() * ur - sin_y_.transpose() * ui;
  return Eigen::Map<const Eigen::VectorXd>(x.data(), x.size());
}

Eigen::VectorXd NudftOperator::apply(const Eigen::VectorXd& image) const {
  const Eigen::VectorXcd s = transform(image);
  Eigen::VectorXd out(2 * s.size());
  out.head(s.size()) = s.real();
  out.tail(s.size()) = s.imag();
  return out;
}

Eigen::VectorXd NudftOperator::apply_adjoint(const Eigen::VectorXd& measurements) const {
  const Eigen::Index k = coords_.rows();
  if (measurements.size() != 2 * k) throw ShapeError("measurement size does not match NUDFT");
  Eigen::VectorXcd z(k);
  z.real() = measurements.head(k);
  z.imag() = measurements.tail(k);
  return adjoint(z);
}

Eigen::VectorXcd nudft_forward(const ImageGrid& image, const Eigen::MatrixX2d& coords) {
  const int n = require_square_2d(image.shape(), "nudft_forward");
  return NudftOperator(n, coords).transform(row_major(image));
}

ImageGrid nudft_adjoint(const KSpaceData& samples, const std::vector<int>& image_shape,
                        bool apply_density_compensation) {
  samples.validate();
  const int n = require_square_2d(image_shape, "nudft_adjoint");
  if (n != samples.image_size) throw ShapeError("image shape does not match k-space geometry");
  if (apply_density_compensation && samples.density_weights.size() != samples.coords.rows()) {
    throw ShapeError("density compensation requested but weights are missing");
  }
  const NudftOperator op(n, samples.coords);
  const Eigen::VectorXd weights = apply_density_compensation ? samples.density_weights : Eigen::VectorXd();
  return from_row_major(op.adjoint(samples.values, weights), n);
}

KSpaceData radial_forward(const ImageGrid& image, const SamplingSpec& spec) {
  spec.validate();
  if (spec.modality != Modality::mri) throw InputError("radial_forward requires an MRI sampling spec");
  const int n = require_square_2d(image.shape(), "radial_forward");
  KSpaceData out;
  out.image_size = n;
  out.num_spokes = spec.num_views_or_spokes;
  out.samples_per_spoke = spec.samples_per_view > 0 ? spec.samples_per_view : default_samples_per_spoke(n);
  out.coords = golden_angle_spokes(out.num_spokes, out.samples_per_spoke, n);
  out.values = NudftOperator(n, out.coords).transform(row_major(image));
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.noise_seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (Eigen::Index i = 0; i < out.values.size(); ++i) {
      const double re = noise(rng);
      const double im = noise(rng);
      out.values[i] += std::complex<double>(re, im);
    }
  }
  out.density_weights = ramp_density_weights(out.coords);
  return out;
}

ImageGrid adjoint_nufft_reconstruct(const KSpaceData& samples, const std::vector<int>& image_shape) {
  ImageGrid img = nudft_adjoint(samples, image_shape, true);
  // A centered unit impulse has S(k) = 1 everywhere, so its compensated
  // adjoint is the point spread function.
  const NudftOperator op(samples.image_size, samples.coords);
  const Eigen::VectorXcd ones = Eigen::VectorXcd::Ones(samples.coords.rows());
  const double gain = op.adjoint(ones, samples.density_weights).sum();
  if (std::abs(gain) > 0.0) {
    for (double& v : img.data()) v /= gain;
  }
  return img;
}

// ------------------------------------------------------ measurements -----

Modality modality_of(const Measurements& m) {
  return std::holds_alternative<SinogramData>(m) ? Modality::ct : Modality::mri;
}

int image_size_of(const Measurements& m) {
  return std::visit([](const auto& d) { return d.image_size; }, m);
}

std::unique_ptr<SensingOperator> make_operator(const Measurements& m) {
  if (const auto* sino = std::get_if<SinogramData>(&m)) {
    sino->validate();
    return std::make_unique<RadonOperator>(sino->image_size, sino->angles, sino->offsets);
  }
  const auto& k = std::get<KSpaceData>(m);
  k.validate();
  return std::make_unique<NudftOperator>(k.image_size, k.coords);
}

Eigen::VectorXd flatten(const Measurements& m) {
  if (const auto* sino = std::get_if<SinogramData>(&m)) {
    const RowMajorMatrix rm = sino->values;
    return Eigen::Map<const Eigen::VectorXd>(rm.data(), rm.size());
  }
  const auto& k = std::get<KSpaceData>(m);
  Eigen::VectorXd out(2 * k.values.size());
  out.head(k.values.size()) = k.values.real();
  out.tail(k.values.size()) = k.values.imag();
  return out;
}

Measurements simulate(const ImageGrid& image, const SamplingSpec& spec) {
  if (spec.modality == Modality::ct) return radon_forward(image, spec);
  return radial_forward(image, spec);
}

}  // namespace nerp::ops
