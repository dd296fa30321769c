#pragma once

// Reconstruction by optimizing a coordinate network:
//   1. prior embedding: fit the network to a prior image of the same subject,
//   2. measurement-constrained training: minimize ||A f(grid) - y||^2 starting
//      from the prior-embedded weights,
//   3. inference: evaluate the trained network on the full coordinate grid.

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "nerp/forward_models.hpp"
#include "nerp/image.hpp"
#include "nerp/mlp.hpp"

namespace nerp {

enum class ReconMode { nerp, nerp_no_prior, grff };

std::string_view to_string(ReconMode m);
ReconMode parse_recon_mode(std::string_view name);

struct ReconConfig {
  int fourier_m = 256;
  double fourier_sigma = 4.0;
  int depth = 8;
  int width = 256;
  mlp::Activation activation = mlp::Activation::sine;
  double omega0 = mlp::kDefaultOmega0;
  int prior_iters = 1000;
  int recon_iters = 1000;
  double prior_lr = 1e-4;
  double recon_lr = 1e-5;
  // Learning rate for modes that train from random initialization
  // (nerp_no_prior, grff); recon_lr is a fine-tuning rate for embedded weights.
  double scratch_lr = 1e-4;
  std::uint64_t seed = 0;
  ops::SamplingSpec sampling;

  void validate() const;

  // Published settings per modality: CT uses width 256 / sigma 4, MRI width
  // 512 / sigma 3; both use depth 8, 256 Fourier features, 1000 iterations per
  // stage and learning rates 1e-4 (prior) / 1e-5 (reconstruction).
  //
  // sigma is in cycles per unit coordinate and the published values belong to
  // 256-pixel grids, so it is scaled by image_size / 256 to keep the same
  // bandwidth relative to the pixel grid.
  static ReconConfig defaults_for(ops::Modality modality, int image_size = kReferenceGridSize);

  static constexpr int kReferenceGridSize = 256;
};

// Pixel centers mapped into [0,1]^n: coordinate d of index i is
// (i + 0.5) / shape[d]. One column per pixel in row-major order.
Eigen::MatrixXd make_coordinate_grid(const std::vector<int>& shape);

// The encoding and network together define the continuous image.
template <typename T>
struct NeuralField {
  mlp::FourierEncoding encoding;
  mlp::MlpParams<T> network;
};

// Encoding and randomly initialized network for cfg; the encoding and
// the weights use independent streams derived from cfg.seed.
template <typename T>
NeuralField<T> init_field(const ReconConfig& cfg, int spatial_dims, std::optional<mlp::Activation> activation = {});

// Progress callback: (stage, iteration, loss).
using ProgressFn = std::function<void(std::string_view, int, double)>;

struct EmbedResult {
  NeuralField<float> field;
  std::vector<double> losses;  // mean squared error before each step
  double fit_psnr = 0.0;       // PSNR of the embedded image vs the prior
};

EmbedResult embed_prior(const ImageGrid& prior, const ReconConfig& cfg, const ProgressFn& progress = {});

struct TrainResult {
  NeuralField<float> field;
  std::vector<double> losses;         // data loss before each step
  double final_loss = 0.0;            // data loss at the returned parameters
  Eigen::VectorXd final_intensities;  // network output behind final_loss
};

// Adam on L(theta) = ||A f_theta(grid) - y||^2. The gradient with respect to
// the image is 2 A^T (A x - y), chained into the network backward pass.
TrainResult train_reconstruction(const NeuralField<float>& init, const ops::SensingOperator& model,
                                 const Eigen::VectorXd& y, const ReconConfig& cfg, const ProgressFn& progress = {});

// Evaluates the field on the pixel-center grid of `shape` (any resolution).
template <typename T>
ImageGrid infer_image(const NeuralField<T>& field, const std::vector<int>& shape);

// Data loss and (optionally) its parameter gradient for a precomputed
// encoded grid. `intensities` receives the network output when non-null.
template <typename T>
double measurement_loss(const NeuralField<T>& field, const mlp::Matrix<T>& encoded, const ops::SensingOperator& model,
                        const Eigen::VectorXd& y, mlp::Gradients<T>* grads = nullptr,
                        Eigen::VectorXd* intensities = nullptr);

// Mean squared error to `target` (row-major) and its gradient.
template <typename T>
double embedding_loss(const NeuralField<T>& field, const mlp::Matrix<T>& encoded, const Eigen::VectorXd& target,
                      mlp::Gradients<T>* grads = nullptr);

struct ReconResult {
  ImageGrid image;
  std::vector<double> losses;        // reconstruction-stage curve
  std::vector<double> prior_losses;  // empty unless mode == nerp
  double prior_fit_psnr = 0.0;
  NeuralField<float> field;
};

// Full pipeline. nerp requires a prior; grff forces ReLU activations.
// `embedded` lets callers reuse one prior embedding across several
// measurement sets (it must come from embed_prior with the same cfg).
ReconResult reconstruct(const std::optional<ImageGrid>& prior, const ops::Measurements& y, const ReconConfig& cfg,
                        ReconMode mode, const ProgressFn& progress = {}, const EmbedResult* embedded = nullptr);

}  // namespace nerp
