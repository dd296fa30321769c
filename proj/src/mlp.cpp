#include "nerp/mlp.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "nerp/error.hpp"

namespace nerp::mlp {

namespace {

std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
void require_same_shapes(const std::vector<Layer<T>>& a, const std::vector<Layer<T>>& b, const char* what) {
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].weight.rows() == b[i].weight.rows() && a[i].weight.cols() == b[i].weight.cols() &&
         a[i].bias.size() == b[i].bias.size();
  }
  if (!ok) throw ShapeError(std::string(what) + ": layer shapes do not match parameters");
}

// Runs the hidden stack and the linear output layer on one block of columns.
template <typename T>
Vector<T> run_layers(const MlpParams<T>& params, const Matrix<T>& input, Tape<T>* tape) {
  const auto& layers = params.layers();
  const T omega = static_cast<T>(params.omega0());
  const bool sine = params.activation() == Activation::sine;
  const std::size_t hidden = layers.size() - 1;

  if (tape) {
    tape->pre_activations.resize(hidden);
    tape->activations.resize(hidden);
  }

  Matrix<T> h;
  for (std::size_t l = 0; l < hidden; ++l) {
    const Matrix<T>& prev = l == 0 ? input : h;
    Matrix<T> z = layers[l].weight * prev;
    z.colwise() += layers[l].bias;
    if (sine) z *= omega;
    Matrix<T> a = sine ? Matrix<T>(z.array().sin()) : Matrix<T>(z.array().max(T(0)));
    if (tape) {
      tape->pre_activations[l] = std::move(z);
      tape->activations[l] = a;
    }
    h = std::move(a);
  }
  Matrix<T> out = layers.back().weight * h;
  out.colwise() += layers.back().bias;
  return out.transpose();
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::sine ? "sine" : "relu"; }

Activation parse_activation(std::string_view name) {
  if (name == "sine") return Activation::sine;
  if (name == "relu") return Activation::relu;
  throw InputError("unknown activation '" + std::string(name) + "'");
}

FourierEncoding::FourierEncoding(Eigen::MatrixXd matrix, double sigma, std::uint64_t seed)
    : matrix_(std::move(matrix)), sigma_(sigma), seed_(seed) {}

FourierEncoding::FourierEncoding(int features, int input_dim, double sigma, std::uint64_t seed)
    : sigma_(sigma), seed_(seed) {
  if (features < 1 || input_dim < 1) throw InputError("Fourier encoding dimensions must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("Fourier encoding sigma must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  matrix_.resize(features, input_dim);
  // Fill row by row so the draw order does not depend on storage order.
  for (int r = 0; r < features; ++r)
    for (int c = 0; c < input_dim; ++c) matrix_(r, c) = normal(rng);
}

FourierEncoding FourierEncoding::from_matrix(Eigen::MatrixXd matrix) {
  if (matrix.rows() < 1 || matrix.cols() < 1) throw InputError("Fourier matrix must be non-empty");
  if (!matrix.allFinite()) throw InputError("Fourier matrix must be finite");
  return FourierEncoding(std::move(matrix), 0.0, 0);
}

template <typename T>
Matrix<T> fourier_features(const Eigen::MatrixXd& coords, const FourierEncoding& enc) {
  if (coords.rows() != enc.input_dim()) {
    throw ShapeError("coordinate dimension " + std::to_string(coords.rows()) + " does not match encoding input " +
                     std::to_string(enc.input_dim()));
  }
  if (coords.size() > 0 && !((coords.array() >= 0.0).all() && (coords.array() <= 1.0).all())) {
    throw InputError("coordinates must lie in [0,1]");
  }
  const Eigen::MatrixXd phase = (2.0 * std::numbers::pi) * (enc.matrix() * coords);
  const Eigen::Index m = enc.features();
  Matrix<T> out(2 * m, coords.cols());
  out.topRows(m) = phase.array().cos().matrix().template cast<T>();
  out.bottomRows(m) = phase.array().sin().matrix().template cast<T>();
  return out;
}

template <typename T>
MlpParams<T>::MlpParams(std::vector<Layer<T>> layers, Activation activation, double omega0)
    : layers_(std::move(layers)), activation_(activation), omega0_(omega0), revision_(next_revision()) {
  validate();
}

template <typename T>
void MlpParams<T>::validate() const {
  if (layers_.size() < 2) throw ShapeError("network needs at least two layers");
  if (!(omega0_ > 0.0)) throw InputError("omega0 must be positive");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() < 1 || layer.weight.cols() < 1) throw ShapeError("empty weight matrix");
    if (layer.bias.size() != layer.weight.rows()) throw ShapeError("bias length does not match weight rows");
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " input does not match previous output");
    }
  }
  if (layers_.back().weight.rows() != 1) throw ShapeError("final layer must have a single output");
}

template <typename T>
std::vector<Layer<T>>& MlpParams<T>::mutable_layers() {
  revision_ = next_revision();
  return layers_;
}

template <typename T>
std::size_t MlpParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

template <typename T>
bool MlpParams<T>::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

template <typename T>
bool MlpParams<T>::identical_to(const MlpParams& other) const {
  if (activation_ != other.activation_ || omega0_ != other.omega0_ || layers_.size() != other.layers_.size())
    return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& a = layers_[l];
    const auto& b = other.layers_[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size())
      return false;
    if (!(a.weight.array() == b.weight.array()).all() || !(a.bias.array() == b.bias.array()).all()) return false;
  }
  return true;
}

template <typename T>
MlpParams<T> init_params(int depth, int width, int input_dim, Activation activation, std::uint64_t seed,
                         double omega0) {
  if (depth < 2) throw ShapeError("depth must be >= 2, got " + std::to_string(depth));
  if (width < 1 || input_dim < 1) throw ShapeError("width and input_dim must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Layer<T>> layers;
  layers.reserve(depth);
  for (int l = 0; l < depth; ++l) {
    const int fan_in = l == 0 ? input_dim : width;
    const int fan_out = l == depth - 1 ? 1 : width;
    double bound = 0.0;
    if (activation == Activation::sine) {
      bound = l == 0 ? 1.0 / fan_in : std::sqrt(6.0 / fan_in) / omega0;
    } else {
      bound = std::sqrt(6.0 / fan_in);
    }
    std::uniform_real_distribution<double> wdist(-bound, bound);
    const double bias_bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> bdist(-bias_bound, bias_bound);
    Layer<T> layer{Matrix<T>(fan_out, fan_in), Vector<T>(fan_out)};
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.weight(r, c) = static_cast<T>(wdist(rng));
    for (int r = 0; r < fan_out; ++r) layer.bias(r) = static_cast<T>(bdist(rng));
    layers.push_back(std::move(layer));
  }
  return MlpParams<T>(std::move(layers), activation, omega0);
}

template <typename T>
ForwardResult<T> forward(const MlpParams<T>& params, const Matrix<T>& encoded) {
  if (encoded.rows() != params.input_dim()) {
    throw ShapeError("encoded dimension " + std::to_string(encoded.rows()) + " does not match network input " +
                     std::to_string(params.input_dim()));
  }
  ForwardResult<T> result;
  result.tape.revision = params.revision();
  result.tape.input = encoded;
  result.output = run_layers(params, encoded, &result.tape);
  return result;
}

template <typename T>
Vector<T> evaluate(const MlpParams<T>& params, const Matrix<T>& encoded, Eigen::Index chunk) {
  if (encoded.rows() != params.input_dim()) {
    throw ShapeError("encoded dimension " + std::to_string(encoded.rows()) + " does not match network input " +
                     std::to_string(params.input_dim()));
  }
  if (chunk < 1) chunk = encoded.cols();
  Vector<T> out(encoded.cols());
  for (Eigen::Index start = 0; start < encoded.cols(); start += chunk) {
    const Eigen::Index n = std::min(chunk, encoded.cols() - start);
    out.segment(start, n) = run_layers<T>(params, encoded.middleCols(start, n), nullptr);
  }
  return out;
}

template <typename T>
Gradients<T> backward(const MlpParams<T>& params, const Tape<T>& tape, const Vector<T>& output_grads) {
  if (tape.revision != params.revision()) {
    throw ContractError("tape was recorded for a different parameter revision");
  }
  const auto& layers = params.layers();
  const std::size_t hidden = layers.size() - 1;
  if (tape.activations.size() != hidden || tape.input.rows() != params.input_dim()) {
    throw ContractError("tape does not match network structure");
  }
  if (output_grads.size() != tape.batch()) {
    throw ShapeError("output gradient length does not match tape batch");
  }
  const bool sine = params.activation() == Activation::sine;
  const T omega = static_cast<T>(params.omega0());

  Gradients<T> grads(layers.size());
  // dz for the output layer is the upstream gradient itself (1 x batch).
  Matrix<T> dz = output_grads.transpose();
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Matrix<T>& in = l == 0 ? tape.input : tape.activations[l - 1];
    grads[l].weight.noalias() = dz * in.transpose();
    grads[l].bias = dz.rowwise().sum();
    if (l == 0) break;
    Matrix<T> da = layers[l].weight.transpose() * dz;
    const Matrix<T>& pre = tape.pre_activations[l - 1];
    if (sine) {
      dz = da.array() * (omega * pre.array().cos());
    } else {
      dz = da.array() * (pre.array() > T(0)).template cast<T>();
    }
  }
  return grads;
}

template <typename T>
Gradients<T> zero_gradients(const MlpParams<T>& params) {
  Gradients<T> g;
  for (const auto& l : params.layers()) {
    g.push_back({Matrix<T>::Zero(l.weight.rows(), l.weight.cols()), Vector<T>::Zero(l.bias.size())});
  }
  return g;
}

template <typename T>
AdamState<T>::AdamState(const MlpParams<T>& params, AdamConfig config)
    : config_(config), m_(zero_gradients(params)), v_(zero_gradients(params)) {
  if (!(config.lr > 0.0)) throw InputError("learning rate must be positive");
  if (!(config.beta1 > 0.0 && config.beta1 < 1.0) || !(config.beta2 > 0.0 && config.beta2 < 1.0)) {
    throw InputError("Adam betas must lie in (0,1)");
  }
  if (!(config.epsilon > 0.0)) throw InputError("Adam epsilon must be positive");
}

template <typename T>
void adam_step(MlpParams<T>& params, const Gradients<T>& grads, AdamState<T>& state) {
  require_same_shapes(params.layers(), grads, "adam_step gradients");
  require_same_shapes(params.layers(), state.m_, "adam_step state");
  for (const auto& g : grads) {
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw OptimizerError("non-finite gradient entry", state.step_);
    }
  }

  const AdamConfig& c = state.config_;
  const long t = state.step_ + 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  const T b1 = static_cast<T>(c.beta1);
  const T b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(c.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.epsilon);

  auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
    m.array() = b1 * m.array() + (T(1) - b1) * g.array();
    v.array() = b2 * v.array() + (T(1) - b2) * g.array().square();
    p.array() -= step_size * m.array() / (v.array().sqrt() * inv_sqrt_bc2 + eps);
  };

  auto& layers = params.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weight, grads[l].weight, state.m_[l].weight, state.v_[l].weight);
    update(layers[l].bias, grads[l].bias, state.m_[l].bias, state.v_[l].bias);
  }
  state.step_ = t;
}

#define NERP_INSTANTIATE_MLP(T)                                                                              \
  template Matrix<T> fourier_features<T>(const Eigen::MatrixXd&, const FourierEncoding&);                 \
  template class MlpParams<T>;                                                                            \
  template MlpParams<T> init_params<T>(int, int, int, Activation, std::uint64_t, double);                 \
  template ForwardResult<T> forward<T>(const MlpParams<T>&, const Matrix<T>&);                            \
  template Vector<T> evaluate<T>(const MlpParams<T>&, const Matrix<T>&, Eigen::Index);                    \
  template Gradients<T> backward<T>(const MlpParams<T>&, const Tape<T>&, const Vector<T>&);               \
  template class AdamState<T>;                                                                            \
  template void adam_step<T>(MlpParams<T>&, const Gradients<T>&, AdamState<T>&);                          \
  template Gradients<T> zero_gradients<T>(const MlpParams<T>&);

NERP_INSTANTIATE_MLP(float)
NERP_INSTANTIATE_MLP(double)

#undef NERP_INSTANTIATE_MLP

}  // namespace nerp::mlp
