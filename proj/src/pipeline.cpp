#include "nerp/pipeline.hpp"

#include <cmath>
#include <string>

#include "nerp/error.hpp"
#include "nerp/metrics.hpp"

namespace nerp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void check_finite_loss(double loss, std::string_view stage, int iteration) {
  if (!std::isfinite(loss)) {
    throw OptimizerError("non-finite " + std::string(stage) + " loss", iteration);
  }
}

template <typename T>
void check_field(const NeuralField<T>& field) {
  if (field.network.input_dim() != field.encoding.output_dim()) {
    throw ShapeError("network input " + std::to_string(field.network.input_dim()) +
                     " does not match encoding output " + std::to_string(field.encoding.output_dim()));
  }
}

}  // namespace

std::string_view to_string(ReconMode m) {
  switch (m) {
    case ReconMode::nerp: return "nerp";
    case ReconMode::nerp_no_prior: return "nerp_no_prior";
    case ReconMode::grff: return "grff";
  }
  return "unknown";
}

ReconMode parse_recon_mode(std::string_view name) {
  if (name == "nerp") return ReconMode::nerp;
  if (name == "nerp_no_prior") return ReconMode::nerp_no_prior;
  if (name == "grff") return ReconMode::grff;
  throw ConfigError("unknown reconstruction mode '" + std::string(name) + "'");
}

void ReconConfig::validate() const {
  if (fourier_m < 1) throw ConfigError("fourier_m must be >= 1");
  if (!(fourier_sigma > 0.0) || !std::isfinite(fourier_sigma)) throw ConfigError("fourier_sigma must be positive");
  if (depth < 2) throw ConfigError("depth must be >= 2");
  if (width < 1) throw ConfigError("width must be >= 1");
  if (!(omega0 > 0.0)) throw ConfigError("omega0 must be positive");
  if (prior_iters < 0 || recon_iters < 0) throw ConfigError("iteration counts must be >= 0");
  if (!(prior_lr > 0.0) || !(recon_lr > 0.0) || !(scratch_lr > 0.0)) throw ConfigError("learning rates must be positive");
  try {
    sampling.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

ReconConfig ReconConfig::defaults_for(ops::Modality modality, int image_size) {
  if (image_size < 1) throw ConfigError("image size must be positive");
  ReconConfig cfg;
  cfg.sampling.modality = modality;
  if (modality == ops::Modality::mri) {
    cfg.width = 512;
    cfg.fourier_sigma = 3.0;
    cfg.sampling.num_views_or_spokes = 40;
  } else {
    cfg.width = 256;
    cfg.fourier_sigma = 4.0;
    cfg.sampling.num_views_or_spokes = 20;
  }
  cfg.fourier_sigma *= static_cast<double>(image_size) / kReferenceGridSize;
  return cfg;
}

Eigen::MatrixXd make_coordinate_grid(const std::vector<int>& shape) {
  const std::size_t count = element_count(shape);
  const int dims = static_cast<int>(shape.size());
  Eigen::MatrixXd grid(dims, static_cast<Eigen::Index>(count));
  std::vector<int> index(dims, 0);
  for (std::size_t i = 0; i < count; ++i) {
    for (int d = 0; d < dims; ++d) grid(d, static_cast<Eigen::Index>(i)) = (index[d] + 0.5) / shape[d];
    for (int d = dims - 1; d >= 0; --d) {
      if (++index[d] < shape[d]) break;
      index[d] = 0;
    }
  }
  return grid;
}

template <typename T>
NeuralField<T> init_field(const ReconConfig& cfg, int spatial_dims, std::optional<mlp::Activation> activation) {
  cfg.validate();
  mlp::FourierEncoding encoding(cfg.fourier_m, spatial_dims, cfg.fourier_sigma, splitmix64(cfg.seed));
  auto network = mlp::init_params<T>(cfg.depth, cfg.width, encoding.output_dim(), activation.value_or(cfg.activation),
                                     splitmix64(cfg.seed ^ 0x6e657270ULL), cfg.omega0);
  return NeuralField<T>{std::move(encoding), std::move(network)};
}

template <typename T>
ImageGrid infer_image(const NeuralField<T>& field, const std::vector<int>& shape) {
  check_field(field);
  if (static_cast<int>(shape.size()) != field.encoding.input_dim()) {
    throw ShapeError("inference shape has " + std::to_string(shape.size()) + " axes, field expects " +
                     std::to_string(field.encoding.input_dim()));
  }
  const auto encoded = mlp::fourier_features<T>(make_coordinate_grid(shape), field.encoding);
  const auto out = mlp::evaluate(field.network, encoded);
  std::vector<double> values(static_cast<std::size_t>(out.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) values[static_cast<std::size_t>(i)] = static_cast<double>(out[i]);
  return ImageGrid(shape, std::move(values));
}

template <typename T>
double measurement_loss(const NeuralField<T>& field, const mlp::Matrix<T>& encoded, const ops::SensingOperator& model,
                        const Eigen::VectorXd& y, mlp::Gradients<T>* grads, Eigen::VectorXd* intensities) {
  const Eigen::Index pixels = static_cast<Eigen::Index>(model.image_size()) * model.image_size();
  if (encoded.cols() != pixels) throw ShapeError("encoded grid does not match operator image size");
  if (y.size() != model.measurement_size()) {
    throw ShapeError("measurement vector has " + std::to_string(y.size()) + " entries, operator produces " +
                     std::to_string(model.measurement_size()));
  }
  Eigen::VectorXd x;
  mlp::Tape<T> tape;
  if (grads) {
    auto fwd = mlp::forward(field.network, encoded);
    x = fwd.output.template cast<double>();
    tape = std::move(fwd.tape);
  } else {
    x = mlp::evaluate(field.network, encoded).template cast<double>();
  }
  const Eigen::VectorXd residual = model.apply(x) - y;
  const double loss = residual.squaredNorm();
  if (grads) {
    const Eigen::VectorXd image_grad = 2.0 * model.apply_adjoint(residual);
    *grads = mlp::backward(field.network, tape, mlp::Vector<T>(image_grad.template cast<T>()));
  }
  if (intensities) *intensities = std::move(x);
  return loss;
}

template <typename T>
double embedding_loss(const NeuralField<T>& field, const mlp::Matrix<T>& encoded, const Eigen::VectorXd& target,
                      mlp::Gradients<T>* grads) {
  if (encoded.cols() != target.size()) throw ShapeError("encoded grid does not match target size");
  const double n = static_cast<double>(target.size());
  if (grads) {
    auto fwd = mlp::forward(field.network, encoded);
    const Eigen::VectorXd diff = fwd.output.template cast<double>() - target;
    const Eigen::VectorXd g = (2.0 / n) * diff;
    *grads = mlp::backward(field.network, fwd.tape, mlp::Vector<T>(g.template cast<T>()));
    return diff.squaredNorm() / n;
  }
  const Eigen::VectorXd diff = mlp::evaluate(field.network, encoded).template cast<double>() - target;
  return diff.squaredNorm() / n;
}

EmbedResult embed_prior(const ImageGrid& prior, const ReconConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (prior.empty() || !prior.all_finite()) throw InputError("prior image must be non-empty and finite");
  for (double v : prior.values()) {
    if (v < 0.0 || v > 1.0) throw InputError("prior image must be normalized to [0,1]");
  }
  EmbedResult result{init_field<float>(cfg, prior.ndim()), {}, 0.0};
  const auto encoded = mlp::fourier_features<float>(make_coordinate_grid(prior.shape()), result.field.encoding);
  const Eigen::VectorXd target =
      Eigen::Map<const Eigen::VectorXd>(prior.data().data(), static_cast<Eigen::Index>(prior.size()));

  mlp::AdamState<float> adam(result.field.network, {.lr = cfg.prior_lr});
  mlp::Gradients<float> grads;
  result.losses.reserve(static_cast<std::size_t>(cfg.prior_iters));
  for (int it = 0; it < cfg.prior_iters; ++it) {
    const double loss = embedding_loss(result.field, encoded, target, &grads);
    check_finite_loss(loss, "prior embedding", it);
    result.losses.push_back(loss);
    if (progress) progress("prior", it, loss);
    mlp::adam_step(result.field.network, grads, adam);
  }
  result.fit_psnr = metrics::psnr(infer_image(result.field, prior.shape()), prior);
  return result;
}

TrainResult train_reconstruction(const NeuralField<float>& init, const ops::SensingOperator& model,
                                 const Eigen::VectorXd& y, const ReconConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  check_field(init);
  if (init.encoding.input_dim() != 2) throw ShapeError("forward models operate on 2D fields");
  const int n = model.image_size();
  const auto encoded = mlp::fourier_features<float>(make_coordinate_grid({n, n}), init.encoding);
  if (y.size() != model.measurement_size()) throw ShapeError("measurements do not match forward model geometry");

  TrainResult result{init, {}, 0.0, {}};
  mlp::AdamState<float> adam(result.field.network, {.lr = cfg.recon_lr});
  mlp::Gradients<float> grads;
  result.losses.reserve(static_cast<std::size_t>(cfg.recon_iters));
  for (int it = 0; it < cfg.recon_iters; ++it) {
    const double loss = measurement_loss(result.field, encoded, model, y, &grads);
    check_finite_loss(loss, "reconstruction", it);
    result.losses.push_back(loss);
    if (progress) progress("recon", it, loss);
    mlp::adam_step(result.field.network, grads, adam);
  }
  result.final_loss = measurement_loss<float>(result.field, encoded, model, y, nullptr, &result.final_intensities);
  check_finite_loss(result.final_loss, "reconstruction", cfg.recon_iters);
  return result;
}

ReconResult reconstruct(const std::optional<ImageGrid>& prior, const ops::Measurements& y, const ReconConfig& cfg,
                        ReconMode mode, const ProgressFn& progress, const EmbedResult* embedded) {
  cfg.validate();
  if (mode == ReconMode::nerp && !prior) throw ConfigError("nerp mode requires a prior image");
  const int n = ops::image_size_of(y);
  if (mode == ReconMode::nerp && prior->shape() != std::vector<int>{n, n}) {
    throw ShapeError("prior shape does not match the measurement geometry");
  }
  const auto model = ops::make_operator(y);
  const Eigen::VectorXd data = ops::flatten(y);

  std::optional<NeuralField<float>> init;
  ReconConfig train_cfg = cfg;
  std::vector<double> prior_losses;
  double fit_psnr = 0.0;
  switch (mode) {
    case ReconMode::nerp: {
      if (embedded) {
        if (embedded->field.network.depth() != cfg.depth || embedded->field.network.width() != cfg.width ||
            embedded->field.encoding.features() != cfg.fourier_m) {
          throw ConfigError("reused prior embedding does not match the configuration");
        }
        prior_losses = embedded->losses;
        fit_psnr = embedded->fit_psnr;
        init.emplace(embedded->field);
      } else {
        EmbedResult fresh = embed_prior(*prior, cfg, progress);
        prior_losses = std::move(fresh.losses);
        fit_psnr = fresh.fit_psnr;
        init.emplace(std::move(fresh.field));
      }
      break;
    }
    case ReconMode::nerp_no_prior:
      init.emplace(init_field<float>(cfg, 2));
      train_cfg.recon_lr = cfg.scratch_lr;
      break;
    case ReconMode::grff:
      init.emplace(init_field<float>(cfg, 2, mlp::Activation::relu));
      train_cfg.recon_lr = cfg.scratch_lr;
      break;
  }

  TrainResult trained = train_reconstruction(*init, *model, data, train_cfg, progress);
  ReconResult out{infer_image(trained.field, {n, n}), std::move(trained.losses), std::move(prior_losses), fit_psnr,
                  std::move(trained.field)};
  return out;
}

#define NERP_INSTANTIATE_PIPELINE(T)                                                                             \
  template NeuralField<T> init_field<T>(const ReconConfig&, int, std::optional<mlp::Activation>);              \
  template ImageGrid infer_image<T>(const NeuralField<T>&, const std::vector<int>&);                           \
  template double measurement_loss<T>(const NeuralField<T>&, const mlp::Matrix<T>&, const ops::SensingOperator&, \
                                      const Eigen::VectorXd&, mlp::Gradients<T>*, Eigen::VectorXd*);           \
  template double embedding_loss<T>(const NeuralField<T>&, const mlp::Matrix<T>&, const Eigen::VectorXd&,       \
                                    mlp::Gradients<T>*);

NERP_INSTANTIATE_PIPELINE(float)
NERP_INSTANTIATE_PIPELINE(double)

#undef NERP_INSTANTIATE_PIPELINE

}  // namespace nerp
