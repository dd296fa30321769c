#pragma once

// Coordinate MLP: Fourier feature encoding, dense layers with sine or ReLU
// activations, hand-written backpropagation and Adam.
//
// Batches are stored column-major with one column per sample, so a layer is a
// single GEMM `W * H`. Templates are instantiated for float (training
// kernels) and double (gradient checks).

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace nerp::mlp {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

enum class Activation { sine, relu };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Default sine frequency multiplier for periodic-activation networks.
inline constexpr double kDefaultOmega0 = 30.0;

// Random Fourier feature projection gamma(c) = [cos(2 pi B c), sin(2 pi B c)].
// B has `features` rows and `input_dim` columns with N(0, sigma^2) entries.
class FourierEncoding {
public:
  FourierEncoding(int features, int input_dim, double sigma, std::uint64_t seed);

  // Encoding with an explicit projection matrix (rows = features).
  static FourierEncoding from_matrix(Eigen::MatrixXd matrix);

  const Eigen::MatrixXd& matrix() const noexcept { return matrix_; }
  int features() const noexcept { return static_cast<int>(matrix_.rows()); }
  int input_dim() const noexcept { return static_cast<int>(matrix_.cols()); }
  int output_dim() const noexcept { return 2 * features(); }
  double sigma() const noexcept { return sigma_; }
  std::uint64_t seed() const noexcept { return seed_; }

private:
  FourierEncoding(Eigen::MatrixXd matrix, double sigma, std::uint64_t seed);

  Eigen::MatrixXd matrix_;
  double sigma_;
  std::uint64_t seed_;
};

// Encodes a batch of coordinates (input_dim x batch, entries in [0,1]).
// Column i of the result is [cos(2 pi B c_i); sin(2 pi B c_i)].
// Throws InputError for coordinates outside [0,1], ShapeError on dim mismatch.
template <typename T>
Matrix<T> fourier_features(const Eigen::MatrixXd& coords, const FourierEncoding& enc);

template <typename T>
struct Layer {
  Matrix<T> weight;  // out x in
  Vector<T> bias;    // out
};

template <typename T>
using Gradients = std::vector<Layer<T>>;

// Weights and biases of a fully connected network with a scalar output.
//
// Every mutation through mutable_layers() stamps a new revision; tapes record
// the revision they were produced under so backward() can reject stale tapes.
template <typename T>
class MlpParams {
public:
  MlpParams(std::vector<Layer<T>> layers, Activation activation, double omega0 = kDefaultOmega0);

  const std::vector<Layer<T>>& layers() const noexcept { return layers_; }
  std::vector<Layer<T>>& mutable_layers();

  Activation activation() const noexcept { return activation_; }
  double omega0() const noexcept { return omega0_; }
  int depth() const noexcept { return static_cast<int>(layers_.size()); }
  int width() const { return static_cast<int>(layers_.front().weight.rows()); }
  int input_dim() const { return static_cast<int>(layers_.front().weight.cols()); }
  std::size_t parameter_count() const;
  bool all_finite() const;
  std::uint64_t revision() const noexcept { return revision_; }

  template <typename U>
  MlpParams<U> cast() const {
    std::vector<Layer<U>> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) out.push_back({l.weight.template cast<U>(), l.bias.template cast<U>()});
    return MlpParams<U>(std::move(out), activation_, omega0_);
  }

  // Bitwise comparison of all weights and biases plus activation settings.
  bool identical_to(const MlpParams& other) const;

private:
  void validate() const;

  std::vector<Layer<T>> layers_;
  Activation activation_;
  double omega0_;
  std::uint64_t revision_;
};

// Deterministic initialization. Sine networks follow the periodic-activation
// recipe: first layer U(+-1/fan_in), later layers U(+-sqrt(6/fan_in)/omega0).
// ReLU networks use U(+-sqrt(6/fan_in)). Biases are U(+-1/sqrt(fan_in)).
// Values are drawn in double precision, so init_params<float> equals
// init_params<double> cast to float.
template <typename T>
MlpParams<T> init_params(int depth, int width, int input_dim, Activation activation, std::uint64_t seed,
                         double omega0 = kDefaultOmega0);

// Activations cached by forward() for the matching backward().
template <typename T>
struct Tape {
  std::uint64_t revision = 0;
  Matrix<T> input;
  // pre_activations[l] holds omega0*z (sine) or z (relu) for hidden layer l;
  // activations[l] is the layer output fed to layer l+1.
  std::vector<Matrix<T>> pre_activations;
  std::vector<Matrix<T>> activations;
  Eigen::Index batch() const noexcept { return input.cols(); }
};

template <typename T>
struct ForwardResult {
  Vector<T> output;
  Tape<T> tape;
};

// Network output for every column of `encoded`. The last layer is linear.
template <typename T>
ForwardResult<T> forward(const MlpParams<T>& params, const Matrix<T>& encoded);

// Forward pass without recording a tape, evaluated in chunks of `chunk` columns.
template <typename T>
Vector<T> evaluate(const MlpParams<T>& params, const Matrix<T>& encoded, Eigen::Index chunk = 16384);

// Gradient of sum_i output_grads[i] * output[i] with respect to every parameter.
// Throws ContractError if the tape was recorded under another revision.
template <typename T>
Gradients<T> backward(const MlpParams<T>& params, const Tape<T>& tape, const Vector<T>& output_grads);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class AdamState {
public:
  AdamState(const MlpParams<T>& params, AdamConfig config);

  const AdamConfig& config() const noexcept { return config_; }
  long step_count() const noexcept { return step_; }
  const std::vector<Layer<T>>& first_moment() const noexcept { return m_; }
  const std::vector<Layer<T>>& second_moment() const noexcept { return v_; }

private:
  template <typename U>
  friend void adam_step(MlpParams<U>&, const Gradients<U>&, AdamState<U>&);

  AdamConfig config_;
  std::vector<Layer<T>> m_;
  std::vector<Layer<T>> v_;
  long step_ = 0;
};

// One bias-corrected Adam update in place. Throws OptimizerError if any
// gradient entry is non-finite (parameters and state are left untouched).
template <typename T>
void adam_step(MlpParams<T>& params, const Gradients<T>& grads, AdamState<T>& state);

template <typename T>
Gradients<T> zero_gradients(const MlpParams<T>& params);

}  // namespace nerp::mlp
