#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "nerp/error.hpp"
#include "nerp/forward_models.hpp"
#include "nerp/metrics.hpp"
#include "nerp/phantoms.hpp"

using namespace nerp;
using namespace nerp::ops;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd random_vector(Eigen::Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

Eigen::VectorXcd random_complex(Eigen::Index n, unsigned seed) {
  const Eigen::VectorXd a = random_vector(2 * n, seed);
  Eigen::VectorXcd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = {a[i], a[n + i]};
  return v;
}

// Dense matrix of a linear operator, one column per basis image.
Eigen::MatrixXd assemble(const SensingOperator& op) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(op.image_size()) * op.image_size();
  Eigen::MatrixXd A(op.measurement_size(), pixels);
  for (Eigen::Index j = 0; j < pixels; ++j) A.col(j) = op.apply(Eigen::VectorXd::Unit(pixels, j));
  return A;
}

// Complex DFT matrix written from the definition: rows are samples, columns
// are pixels in row-major order, positions centered at N/2 (kx pairs with
// the column index, ky with the row index).
Eigen::MatrixXcd dense_dft(int n, const Eigen::MatrixX2d& k) {
  Eigen::MatrixXcd F(k.rows(), n * n);
  for (Eigen::Index s = 0; s < k.rows(); ++s) {
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) {
        const double phase = -2.0 * kPi * (k(s, 0) * (c - n / 2.0) + k(s, 1) * (r - n / 2.0)) / n;
        F(s, r * n + c) = std::polar(1.0, phase);
      }
    }
  }
  return F;
}

Eigen::VectorXd flat(const ImageGrid& img) {
  return Eigen::Map<const Eigen::VectorXd>(img.data().data(), static_cast<Eigen::Index>(img.size()));
}

// Disk of radius `radius` (image widths) centered in the field, with pixel
// values equal to the covered area fraction (16x16 subsamples).
ImageGrid disk(int n, double radius) {
  ImageGrid img = ImageGrid::square(n);
  const int sub = 16;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int inside = 0;
      for (int i = 0; i < sub; ++i) {
        for (int j = 0; j < sub; ++j) {
          const double x = (c + (j + 0.5) / sub) / n - 0.5;
          const double y = 0.5 - (r + (i + 0.5) / sub) / n;
          inside += x * x + y * y <= radius * radius;
        }
      }
      img(r, c) = static_cast<double>(inside) / (sub * sub);
    }
  }
  return img;
}

SamplingSpec ct_spec(int views) {
  SamplingSpec s;
  s.modality = Modality::ct;
  s.num_views_or_spokes = views;
  return s;
}

SamplingSpec mri_spec(int spokes) {
  SamplingSpec s;
  s.modality = Modality::mri;
  s.num_views_or_spokes = spokes;
  return s;
}

}  // namespace

TEST_CASE("sampling defaults") {
  CHECK(default_detector_bins(64) == 91);
  CHECK(default_detector_bins(8) == 12);
  CHECK(default_samples_per_spoke(64) == 128);
  const auto off = detector_offsets(8, 12, 1.0);
  REQUIRE(off.size() == 12);
  CHECK(off.front() == doctest::Approx(-5.5 / 8));
  CHECK(off.back() == doctest::Approx(5.5 / 8));
  const auto ang = uniform_angles(4);
  REQUIRE(ang.size() == 4);
  CHECK(ang[0] == 0.0);
  CHECK(ang[2] == doctest::Approx(kPi / 2));
}

TEST_CASE("radon of a zero image is zero") {
  const auto sino = radon_forward(ImageGrid::square(16), ct_spec(7));
  CHECK(sino.values.rows() == 7);
  CHECK(sino.values.cols() == default_detector_bins(16));
  CHECK(sino.values.isZero(0));
}

TEST_CASE("radon of a centered disk matches the chord length") {
  const int n = 128;
  const double radius = 0.3;
  // Oracle check: quadrature of the area-fraction image along a vertical line
  // agrees with the analytic chord before it is used as the reference.
  const ImageGrid img = disk(n, radius);
  {
    const int c = n / 2 + 10;
    double sum = 0.0;
    for (int r = 0; r < n; ++r) sum += img(r, c) / n;
    const double s = (c + 0.5) / n - 0.5;
    CHECK(sum == doctest::Approx(2 * std::sqrt(radius * radius - s * s)).epsilon(0.01));
  }
  const auto sino = radon_forward(img, ct_spec(12));
  double worst = 0.0;
  for (Eigen::Index a = 0; a < sino.values.rows(); ++a) {
    for (std::size_t b = 0; b < sino.offsets.size(); ++b) {
      const double s = sino.offsets[b];
      if (std::abs(s) > 0.7 * radius) continue;
      const double chord = 2 * std::sqrt(radius * radius - s * s);
      worst = std::max(worst, std::abs(sino.values(a, static_cast<Eigen::Index>(b)) - chord) / chord);
    }
  }
  CHECK(worst < 0.02);
}

TEST_CASE("radon is linear") {
  const ImageGrid img = phantoms::shepp_logan(32);
  ImageGrid twice = img;
  for (auto& v : twice.values()) v *= 2.0;
  const auto a = radon_forward(img, ct_spec(9));
  const auto b = radon_forward(twice, ct_spec(9));
  CHECK(b.values == 2.0 * a.values);

  RadonOperator op(16, uniform_angles(5), detector_offsets(16, default_detector_bins(16)));
  const Eigen::VectorXd x = random_vector(256, 1), z = random_vector(256, 2);
  const Eigen::VectorXd lhs = op.apply(1.5 * x - 0.25 * z);
  const Eigen::VectorXd rhs = 1.5 * op.apply(x) - 0.25 * op.apply(z);
  CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
}

TEST_CASE("radon adjoint equals the dense transpose") {
  RadonOperator op(8, uniform_angles(6), detector_offsets(8, default_detector_bins(8)));
  const Eigen::MatrixXd A = assemble(op);
  CHECK(A.cwiseAbs().sum() > 0);
  for (unsigned trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_vector(64, 100 + trial);
    const Eigen::VectorXd y = random_vector(op.measurement_size(), 200 + trial);
    const Eigen::VectorXd aty = op.apply_adjoint(y);
    CHECK((aty - A.transpose() * y).norm() <= 1e-12 * aty.norm());
    const double mismatch = std::abs(op.apply(x).dot(y) - x.dot(aty)) / (op.apply(x).norm() * y.norm());
    CHECK(mismatch < 1e-6);
  }
}

TEST_CASE("radon adjoint of zero is zero and geometry is checked") {
  const auto sino = radon_forward(ImageGrid::square(8, 1.0), ct_spec(4));
  SinogramData zero = sino;
  zero.values.setZero();
  const auto img = radon_adjoint(zero, {8, 8});
  for (double v : img.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(radon_adjoint(sino, {9, 9}), ShapeError);
}

TEST_CASE("single sinogram bin backprojects onto its ray footprint") {
  const int n = 16;
  auto sino = radon_forward(ImageGrid::square(n), ct_spec(5));
  const Eigen::Index a = 2, b = 7;
  sino.values(a, b) = 1.0;
  const auto img = radon_adjoint(sino, {n, n});
  const double th = sino.angles[static_cast<std::size_t>(a)];
  const double s = sino.offsets[static_cast<std::size_t>(b)];
  int support = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (img(r, c) == 0.0) continue;
      ++support;
      const double x = (c + 0.5) / n - 0.5;
      const double y = 0.5 - (r + 0.5) / n;
      const double dist = std::abs(x * std::cos(th) + y * std::sin(th) - s);
      CHECK(dist <= std::sqrt(2.0) / n + 1e-12);
    }
  }
  CHECK(support > 0);
  CHECK(support < n * n / 2);
}

TEST_CASE("radon rejects non-square images") {
  CHECK_THROWS_AS(radon_forward(ImageGrid({8, 9}), ct_spec(4)), GeometryError);
  CHECK_THROWS_AS(radial_forward(ImageGrid({8, 9}), mri_spec(4)), GeometryError);
}

TEST_CASE("fbp: dense views reconstruct the phantom") {
  const ImageGrid truth = phantoms::shepp_logan(128);
  const auto dense = fbp_reconstruct(radon_forward(truth, ct_spec(180)), {128, 128});
  const auto sparse = fbp_reconstruct(radon_forward(truth, ct_spec(20)), {128, 128});
  const double p180 = metrics::psnr(dense, truth);
  const double p20 = metrics::psnr(sparse, truth);
  MESSAGE("FBP PSNR 180 views " << p180 << " dB, 20 views " << p20 << " dB");
  // scikit-image radon/iradon (ramp, linear) on this phantom gives 25.34 dB.
  CHECK(p180 >= 25.0);
  CHECK(p20 < p180);
}

TEST_CASE("fbp of a zero sinogram is zero") {
  auto sino = radon_forward(ImageGrid::square(16), ct_spec(8));
  const auto img = fbp_reconstruct(sino, {16, 16});
  for (double v : img.values()) CHECK(v == 0.0);
}

TEST_CASE("fbp quality does not drop as views increase") {
  const ImageGrid truth = phantoms::shepp_logan(64);
  double prev = -1e9;
  for (int views : {10, 20, 45, 90, 180}) {
    const double p = metrics::psnr(fbp_reconstruct(radon_forward(truth, ct_spec(views)), {64, 64}), truth);
    CAPTURE(views);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("golden-angle spokes") {
  CHECK(golden_angle() == doctest::Approx(std::fmod(kPi * (3 - std::sqrt(5.0)), kPi)));
  CHECK(golden_angle() == doctest::Approx(2.39996).epsilon(1e-5));
  const int spp = 16, n = 8;
  const auto one = golden_angle_spokes(1, spp, n);
  REQUIRE(one.rows() == spp);
  for (Eigen::Index i = 0; i < spp; ++i) CHECK(one(i, 1) == doctest::Approx(0.0));
  CHECK(one(0, 0) == doctest::Approx(-n / 2.0));
  CHECK(one(spp - 1, 0) < n / 2.0);

  const auto k = golden_angle_spokes(5, spp, n);
  REQUIRE(k.rows() == 5 * spp);
  for (int s = 0; s < 5; ++s) {
    const double expected = std::fmod(s * kPi * (3 - std::sqrt(5.0)), kPi);
    const Eigen::RowVector2d dir = k.row(s * spp + spp - 1).normalized();
    CHECK(dir(0) == doctest::Approx(std::cos(expected)));
    CHECK(dir(1) == doctest::Approx(std::sin(expected)));
    double nearest = 1e9;
    for (int j = 0; j < spp; ++j) nearest = std::min(nearest, k.row(s * spp + j).norm());
    CHECK(nearest < static_cast<double>(n) / spp);
  }
  CHECK((k.array().abs() <= n / 2.0 + 1e-12).all());
}

TEST_CASE("nudft of a centered impulse has unit magnitude") {
  const int n = 16;
  ImageGrid img = ImageGrid::square(n);
  img(n / 2, n / 2) = 1.0;
  const auto s = nudft_forward(img, golden_angle_spokes(7, 2 * n, n));
  for (Eigen::Index i = 0; i < s.size(); ++i) CHECK(std::abs(s[i]) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("nudft DC sample is the image sum") {
  const ImageGrid img = phantoms::shepp_logan(32);
  Eigen::MatrixX2d k = Eigen::MatrixX2d::Zero(1, 2);
  const auto s = nudft_forward(img, k);
  double sum = 0.0;
  for (double v : img.values()) sum += v;
  CHECK(s[0].real() == doctest::Approx(sum).epsilon(1e-12));
  CHECK(std::abs(s[0].imag()) < 1e-9);
}

TEST_CASE("nudft matches the dense DFT matrix") {
  const int n = 8;
  const auto k = golden_angle_spokes(6, 11, n);
  const Eigen::MatrixXcd F = dense_dft(n, k);
  NudftOperator op(n, k);
  for (unsigned trial = 0; trial < 5; ++trial) {
    const Eigen::VectorXd x = random_vector(n * n, trial);
    const Eigen::VectorXcd ref = F * x.cast<std::complex<double>>();
    CHECK((op.transform(x) - ref).norm() <= 1e-10 * ref.norm());
    const Eigen::VectorXcd y = random_complex(k.rows(), 50 + trial);
    const Eigen::VectorXd adj_ref = (F.adjoint() * y).real();
    CHECK((op.adjoint(y) - adj_ref).norm() <= 1e-10 * adj_ref.norm());
  }
}

TEST_CASE("nudft adjoint dot test") {
  const int n = 8;
  NudftOperator op(n, golden_angle_spokes(5, 16, n));
  for (unsigned trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_vector(n * n, 300 + trial);
    const Eigen::VectorXd y = random_vector(op.measurement_size(), 400 + trial);
    const Eigen::VectorXd ax = op.apply(x);
    const double mismatch = std::abs(ax.dot(y) - x.dot(op.apply_adjoint(y))) / (ax.norm() * y.norm());
    CHECK(mismatch < 1e-6);
  }
}

TEST_CASE("nudft on a full Cartesian grid inverts up to scale") {
  const int n = 8;
  Eigen::MatrixX2d k(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) k.row(i * n + j) << j - n / 2, i - n / 2;
  NudftOperator op(n, k);
  const Eigen::VectorXd x = random_vector(n * n, 9);
  const Eigen::VectorXd back = op.adjoint(op.transform(x));
  CHECK((back - n * n * x).norm() <= 1e-10 * x.norm() * n * n);
}

TEST_CASE("nudft rejects out-of-band coordinates") {
  Eigen::MatrixX2d k(1, 2);
  k << 4.5, 0.0;
  CHECK_THROWS_AS(NudftOperator(8, k), InputError);
  CHECK_THROWS_AS(nudft_forward(ImageGrid::square(8), k), InputError);
}

TEST_CASE("density weights") {
  const auto k = golden_angle_spokes(4, 16, 8);
  const auto w = ramp_density_weights(k);
  CHECK(w.sum() == doctest::Approx(1.0));
  CHECK((w.array() >= 0).all());
  double smallest = 1e9;
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    if (k.row(i).norm() > 1e-12) smallest = std::min(smallest, w[i]);
  for (Eigen::Index i = 0; i < k.rows(); ++i) {
    if (k.row(i).norm() <= 1e-12) {
      CHECK(w[i] == doctest::Approx(0.5 * smallest));
    } else {
      CHECK(w[i] / k.row(i).norm() == doctest::Approx(smallest / 0.5));
    }
  }
}

TEST_CASE("nudft adjoint: zero samples, weight mismatch, compensation") {
  const ImageGrid img = phantoms::shepp_logan(16);
  auto data = radial_forward(img, mri_spec(6));
  CHECK(data.values.size() == 6 * default_samples_per_spoke(16));
  KSpaceData zero = data;
  zero.values.setZero();
  for (double v : nudft_adjoint(zero, {16, 16}, true).values()) CHECK(v == 0.0);
  KSpaceData bad = data;
  bad.density_weights.conservativeResize(3);
  CHECK_THROWS_AS(nudft_adjoint(bad, {16, 16}, true), ShapeError);

  NudftOperator op(16, data.coords);
  const auto plain = nudft_adjoint(data, {16, 16}, false);
  CHECK((flat(plain) - op.adjoint(data.values)).norm() < 1e-9);
  const auto comp = nudft_adjoint(data, {16, 16}, true);
  CHECK((flat(comp) - op.adjoint(data.values, data.density_weights)).norm() < 1e-9);
}

TEST_CASE("adjoint nufft baseline recovers the phantom roughly") {
  const ImageGrid truth = phantoms::shepp_logan(64);
  const auto y = radial_forward(truth, mri_spec(40));
  const auto recon = adjoint_nufft_reconstruct(y, {64, 64});
  double mean_t = 0, mean_r = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    mean_t += truth[i];
    mean_r += recon[i];
  }
  CHECK(mean_r == doctest::Approx(mean_t).epsilon(0.05));
  CHECK(metrics::psnr(recon, truth) > 15.0);
  const auto dense = adjoint_nufft_reconstruct(radial_forward(truth, mri_spec(160)), {64, 64});
  CHECK(metrics::psnr(dense, truth) > metrics::psnr(recon, truth));
}

TEST_CASE("noise is off by default and seeded when on") {
  const ImageGrid img = phantoms::shepp_logan(16);
  for (auto spec : {ct_spec(6), mri_spec(6)}) {
    const auto a = flatten(simulate(img, spec));
    const auto b = flatten(simulate(img, spec));
    CHECK(a == b);
    spec.noise_sigma = 0.1;
    spec.noise_seed = 5;
    const auto c = flatten(simulate(img, spec));
    const auto d = flatten(simulate(img, spec));
    CHECK(c == d);
    CHECK(c != a);
    const double sd = std::sqrt((c - a).squaredNorm() / static_cast<double>(a.size()));
    CHECK(sd == doctest::Approx(0.1).epsilon(0.2));
    spec.noise_seed = 6;
    CHECK(flatten(simulate(img, spec)) != c);
  }
}

TEST_CASE("measurement helpers") {
  const ImageGrid img = phantoms::shepp_logan(16);
  const Measurements ct = simulate(img, ct_spec(6));
  const Measurements mr = simulate(img, mri_spec(3));
  CHECK(modality_of(ct) == Modality::ct);
  CHECK(modality_of(mr) == Modality::mri);
  CHECK(image_size_of(mr) == 16);
  for (const auto* m : {&ct, &mr}) {
    const auto op = make_operator(*m);
    CHECK((op->apply(flat(img)) - flatten(*m)).norm() < 1e-9);
  }
  CHECK(parse_modality("mri") == Modality::mri);
  CHECK_THROWS(parse_modality("pet"));
  SamplingSpec bad = ct_spec(0);
  CHECK_THROWS_AS(bad.validate(), InputError);
}
