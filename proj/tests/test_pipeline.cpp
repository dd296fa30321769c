#include <doctest.h>

#include <cmath>
#include <limits>

#include "nerp/error.hpp"
#include "nerp/metrics.hpp"
#include "nerp/phantoms.hpp"
#include "nerp/pipeline.hpp"

using namespace nerp;

namespace {

ReconConfig small_config(ops::Modality modality, int size) {
  ReconConfig cfg = ReconConfig::defaults_for(modality, size);
  cfg.depth = 4;
  cfg.width = 64;
  cfg.fourier_m = 64;
  cfg.prior_iters = 300;
  cfg.recon_iters = 100;
  cfg.seed = 3;
  cfg.sampling.num_views_or_spokes = 8;
  return cfg;
}

Eigen::VectorXd flat(const ImageGrid& img) {
  return Eigen::Map<const Eigen::VectorXd>(img.data().data(), static_cast<Eigen::Index>(img.size()));
}

template <typename T>
bool same_network(const NeuralField<T>& a, const NeuralField<T>& b) {
  return a.network.identical_to(b.network) && a.encoding.matrix() == b.encoding.matrix();
}

// Central differences of measurement_loss over every parameter, in double.
double end_to_end_gradient_error(NeuralField<double> field, const ops::SensingOperator& op, const Eigen::VectorXd& y,
                                 int size, double h = 1e-5) {
  const auto encoded = mlp::fourier_features<double>(make_coordinate_grid({size, size}), field.encoding);
  mlp::Gradients<double> grads;
  measurement_loss(field, encoded, op, y, &grads);
  double worst = 0.0;
  for (std::size_t l = 0; l < grads.size(); ++l) {
    auto probe = [&](double& p, double analytic) {
      const double keep = p;
      p = keep + h;
      const double up = measurement_loss<double>(field, encoded, op, y);
      p = keep - h;
      const double down = measurement_loss<double>(field, encoded, op, y);
      p = keep;
      const double numeric = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic)));
    };
    auto& layer = field.network.mutable_layers()[l];
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) probe(layer.weight(r, c), grads[l].weight(r, c));
      probe(layer.bias(r), grads[l].bias(r));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("coordinate grid") {
  const auto g1 = make_coordinate_grid({2});
  REQUIRE(g1.rows() == 1);
  REQUIRE(g1.cols() == 2);
  CHECK(g1(0, 0) == 0.25);
  CHECK(g1(0, 1) == 0.75);

  const auto g4 = make_coordinate_grid({4, 4});
  CHECK(g4(0, 0) == 0.125);
  CHECK(g4(1, 0) == 0.125);
  CHECK(g4(0, 1) == 0.125);
  CHECK(g4(1, 1) == 0.375);
  CHECK(g4(0, 4) == 0.375);

  const auto big = make_coordinate_grid({256, 256});
  CHECK(big.cols() == 65536);
  CHECK(big.minCoeff() > 0.0);
  CHECK(big.maxCoeff() < 1.0);

  const auto g3 = make_coordinate_grid({2, 3, 4});
  CHECK(g3.rows() == 3);
  CHECK(g3.cols() == 24);
  CHECK(g3(2, 1) == 0.375);
}

TEST_CASE("published defaults") {
  const auto ct = ReconConfig::defaults_for(ops::Modality::ct);
  CHECK(ct.width == 256);
  CHECK(ct.depth == 8);
  CHECK(ct.fourier_m == 256);
  CHECK(ct.fourier_sigma == 4.0);
  CHECK(ct.prior_lr == 1e-4);
  CHECK(ct.recon_lr == 1e-5);
  CHECK(ct.prior_iters == 1000);
  CHECK(ct.recon_iters == 1000);
  CHECK(ct.sampling.num_views_or_spokes == 20);
  const auto mri = ReconConfig::defaults_for(ops::Modality::mri);
  CHECK(mri.width == 512);
  CHECK(mri.fourier_sigma == 3.0);
  CHECK(mri.sampling.num_views_or_spokes == 40);
  CHECK(ReconConfig::defaults_for(ops::Modality::ct, 64).fourier_sigma == 1.0);
}

TEST_CASE("config validation") {
  ReconConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto expect_bad = [](auto mutate) {
    ReconConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  expect_bad([](ReconConfig& c) { c.prior_iters = -1; });
  expect_bad([](ReconConfig& c) { c.recon_lr = 0.0; });
  expect_bad([](ReconConfig& c) { c.fourier_sigma = -2.0; });
  expect_bad([](ReconConfig& c) { c.depth = 1; });
  expect_bad([](ReconConfig& c) { c.sampling.num_views_or_spokes = 0; });
  expect_bad([](ReconConfig& c) { c.sampling.noise_sigma = std::numeric_limits<double>::infinity(); });
}

TEST_CASE("zero iterations leave the initialization untouched") {
  auto cfg = small_config(ops::Modality::ct, 16);
  cfg.prior_iters = 0;
  const auto embedded = embed_prior(phantoms::shepp_logan(16), cfg);
  CHECK(embedded.losses.empty());
  CHECK(same_network(embedded.field, init_field<float>(cfg, 2)));

  cfg.recon_iters = 0;
  const auto y = ops::simulate(phantoms::shepp_logan(16), cfg.sampling);
  const auto op = ops::make_operator(y);
  const auto trained = train_reconstruction(embedded.field, *op, ops::flatten(y), cfg);
  CHECK(trained.losses.empty());
  CHECK(same_network(trained.field, embedded.field));
}

TEST_CASE("zero-weight field infers its bias") {
  auto field = init_field<double>(small_config(ops::Modality::ct, 8), 2);
  for (auto& l : field.network.mutable_layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  field.network.mutable_layers().back().bias(0) = 0.625;
  const auto img = infer_image(field, {5, 7});
  CHECK(img.shape() == std::vector<int>{5, 7});
  for (double v : img.values()) CHECK(v == 0.625);
}

TEST_CASE("constant prior embeds to high fidelity") {
  ReconConfig cfg = ReconConfig::defaults_for(ops::Modality::ct, 32);
  cfg.depth = 4;
  cfg.width = 64;
  cfg.prior_iters = 200;
  const auto result = embed_prior(ImageGrid::square(32, 0.5), cfg);
  MESSAGE("constant-image fit PSNR " << result.fit_psnr << " dB");
  CHECK(result.fit_psnr >= 60.0);
  CHECK(result.losses.size() == 200);
  CHECK(result.losses.back() < result.losses.front());
}

TEST_CASE("embed_prior rejects unnormalized priors") {
  auto cfg = small_config(ops::Modality::ct, 8);
  CHECK_THROWS_AS(embed_prior(ImageGrid::square(8, 1.5), cfg), InputError);
}

TEST_CASE("end-to-end gradient through the Radon model") {
  ReconConfig cfg = ReconConfig::defaults_for(ops::Modality::ct, 8);
  cfg.depth = 2;
  cfg.width = 8;
  cfg.fourier_m = 8;
  cfg.sampling.num_views_or_spokes = 3;
  const auto field = init_field<double>(cfg, 2);
  const auto target = phantoms::shepp_logan(8);
  const auto y = ops::simulate(target, cfg.sampling);
  const auto op = ops::make_operator(y);
  CHECK(end_to_end_gradient_error(field, *op, ops::flatten(y), 8) < 1e-3);
}

TEST_CASE("end-to-end gradient through the NUDFT model") {
  ReconConfig cfg = ReconConfig::defaults_for(ops::Modality::mri, 8);
  cfg.depth = 3;
  cfg.width = 6;
  cfg.fourier_m = 8;
  cfg.sampling.num_views_or_spokes = 3;
  const auto field = init_field<double>(cfg, 2);
  const auto y = ops::simulate(phantoms::shepp_logan(8), cfg.sampling);
  const auto op = ops::make_operator(y);
  CHECK(end_to_end_gradient_error(field, *op, ops::flatten(y), 8) < 1e-3);
}

TEST_CASE("prior fixed point") {
  const int n = 32;
  auto cfg = small_config(ops::Modality::ct, n);
  cfg.sampling.num_views_or_spokes = 20;
  const auto prior = phantoms::shepp_logan(n);
  const auto embedded = embed_prior(prior, cfg);
  const auto y = ops::simulate(prior, cfg.sampling);
  const auto op = ops::make_operator(y);

  const ImageGrid fit = infer_image(embedded.field, {n, n});
  const double propagated = op->apply(flat(fit) - flat(prior)).squaredNorm();
  const auto trained = train_reconstruction(embedded.field, *op, ops::flatten(y), cfg);
  CHECK(trained.losses.front() <= propagated + 1e-6);

  const double final_psnr = metrics::psnr(infer_image(trained.field, {n, n}), prior);
  MESSAGE("fit " << embedded.fit_psnr << " dB, after training " << final_psnr << " dB");
  CHECK(final_psnr >= embedded.fit_psnr - 1.0);
}

TEST_CASE("inference reproduces the final training intensities") {
  const int n = 16;
  auto cfg = small_config(ops::Modality::mri, n);
  cfg.recon_iters = 20;
  const auto y = ops::simulate(phantoms::shepp_logan(n), cfg.sampling);
  const auto op = ops::make_operator(y);
  const auto trained = train_reconstruction(init_field<float>(cfg, 2), *op, ops::flatten(y), cfg);
  const auto img = infer_image(trained.field, {n, n});
  REQUIRE(trained.final_intensities.size() == n * n);
  CHECK((flat(img) - trained.final_intensities).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(trained.final_loss == doctest::Approx(measurement_loss<float>(
                                  trained.field,
                                  mlp::fourier_features<float>(make_coordinate_grid({n, n}), trained.field.encoding),
                                  *op, ops::flatten(y))));
}

TEST_CASE("reconstruction is deterministic") {
  const int n = 16;
  auto cfg = small_config(ops::Modality::ct, n);
  cfg.prior_iters = 30;
  cfg.recon_iters = 30;
  const auto pair = phantoms::make_longitudinal_pair(n, phantoms::default_lesions());
  const auto y = ops::simulate(pair.target, cfg.sampling);
  const auto a = reconstruct(pair.prior, y, cfg, ReconMode::nerp);
  const auto b = reconstruct(pair.prior, y, cfg, ReconMode::nerp);
  CHECK(a.image.data() == b.image.data());
  CHECK(a.losses == b.losses);
  CHECK(a.prior_losses == b.prior_losses);
  CHECK(a.prior_losses.size() == 30);
  CHECK(a.losses.size() == 30);

  const auto reuse_src = embed_prior(pair.prior, cfg);
  const auto c = reconstruct(pair.prior, y, cfg, ReconMode::nerp, {}, &reuse_src);
  CHECK(c.image.data() == a.image.data());
}

TEST_CASE("mode contracts") {
  const int n = 16;
  auto cfg = small_config(ops::Modality::ct, n);
  cfg.recon_iters = 10;
  const auto target = phantoms::shepp_logan(n);
  const auto y = ops::simulate(target, cfg.sampling);

  CHECK_THROWS_AS(reconstruct(std::nullopt, y, cfg, ReconMode::nerp), ConfigError);
  CHECK_THROWS_AS(reconstruct(phantoms::shepp_logan(8), y, cfg, ReconMode::nerp), ShapeError);

  const auto grff = reconstruct(std::nullopt, y, cfg, ReconMode::grff);
  CHECK(grff.field.network.activation() == mlp::Activation::relu);
  CHECK(grff.prior_losses.empty());

  // The ablation is exactly training from a fresh initialization.
  const auto ablation = reconstruct(std::nullopt, y, cfg, ReconMode::nerp_no_prior);
  CHECK(ablation.field.network.activation() == mlp::Activation::sine);
  ReconConfig scratch = cfg;
  scratch.recon_lr = cfg.scratch_lr;
  const auto op = ops::make_operator(y);
  const auto direct = train_reconstruction(init_field<float>(cfg, 2), *op, ops::flatten(y), scratch);
  CHECK(same_network(direct.field, ablation.field));
  CHECK(direct.losses == ablation.losses);

  CHECK(parse_recon_mode("nerp_no_prior") == ReconMode::nerp_no_prior);
  CHECK(to_string(ReconMode::grff) == "grff");
  CHECK_THROWS_AS(parse_recon_mode("fbp"), ConfigError);
}

TEST_CASE("fields can be inferred at a finer grid") {
  const int n = 16;
  auto cfg = small_config(ops::Modality::ct, n);
  const auto prior = phantoms::shepp_logan(n);
  const auto embedded = embed_prior(prior, cfg);
  const auto coarse = infer_image(embedded.field, {n, n});
  const auto fine = infer_image(embedded.field, {2 * n, 2 * n});
  CHECK(fine.shape() == std::vector<int>{2 * n, 2 * n});
  CHECK(fine.all_finite());
  // Box-downsampling the fine grid lands close to the coarse one.
  ImageGrid down = ImageGrid::square(n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      down(r, c) = 0.25 * (fine(2 * r, 2 * c) + fine(2 * r + 1, 2 * c) + fine(2 * r, 2 * c + 1) +
                           fine(2 * r + 1, 2 * c + 1));
  CHECK(metrics::psnr(down, coarse) > 20.0);
}

TEST_CASE("non-finite measurements abort with the iteration index") {
  const int n = 8;
  auto cfg = small_config(ops::Modality::ct, n);
  const auto y = ops::simulate(phantoms::shepp_logan(n), cfg.sampling);
  const auto op = ops::make_operator(y);
  Eigen::VectorXd bad = ops::flatten(y);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    train_reconstruction(init_field<float>(cfg, 2), *op, bad, cfg);
    FAIL("expected OptimizerError");
  } catch (const OptimizerError& e) {
    CHECK(e.iteration() == 0);
  }
  CHECK_THROWS_AS(train_reconstruction(init_field<float>(cfg, 2), *op, Eigen::VectorXd::Zero(3), cfg), ShapeError);
}
