#pragma once

// Experiment runner behind the `nerp` executable: strict JSON configuration,
// input preparation, per-mode reconstruction, CSV/manifest output.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerp/forward_models.hpp"
#include "nerp/image.hpp"
#include "nerp/phantoms.hpp"
#include "nerp/pipeline.hpp"

namespace nerp::cli {

inline constexpr const char* kVersion = "0.1.0";

// How loaded prior/target images are mapped to [0,1].
enum class Normalization { joint, independent };

// Reconstruction modes plus the two analytic baselines.
enum class Method { nerp, nerp_no_prior, grff, fbp, adjoint_nufft };

std::string to_string(Method m);
Method parse_method(const std::string& name);

enum class SweepAxis { views, spokes, depth, width };

std::string to_string(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string& name);

struct ExperimentConfig {
  int image_size = 64;
  ReconConfig recon = ReconConfig::defaults_for(ops::Modality::ct, 64);
  std::vector<Method> modes{Method::nerp, Method::nerp_no_prior, Method::fbp};
  std::vector<phantoms::LesionSpec> lesions = phantoms::default_lesions();
  std::optional<std::filesystem::path> prior_path;
  std::optional<std::filesystem::path> target_path;
  std::optional<std::filesystem::path> measurements_path;
  Normalization normalization = Normalization::joint;
  std::filesystem::path output_dir = "nerp_out";
  std::optional<SweepAxis> sweep_axis;
  std::vector<int> sweep_values;

  ops::Modality modality() const { return recon.sampling.modality; }
  bool has_prior() const { return !target_path || prior_path; }
};

// Parses a configuration document. Missing keys take the modality defaults
// for the configured image size; unknown keys raise ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

// Fully resolved configuration (every key present); parse_config of the
// result reproduces the same configuration.
nlohmann::json to_json(const ExperimentConfig& cfg);

// FNV-1a 64 of the canonical resolved configuration, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// Checks modes against the modality, prior availability and input paths.
// Throws ConfigError; runs before anything is computed.
void validate(const ExperimentConfig& cfg);

struct ExperimentInputs {
  std::optional<ImageGrid> prior;
  ImageGrid target;
  ops::Measurements measurements;
};

ExperimentInputs prepare_inputs(const ExperimentConfig& cfg);

struct ModeOutcome {
  Method method;
  double psnr = 0.0;
  double ssim = 0.0;
  int iterations = 0;
  double wall_seconds = 0.0;
  ImageGrid image;
  std::vector<double> losses;
  std::vector<double> prior_losses;
};

// Runs every configured mode on prepared inputs. `shared_embedding`, when
// given, replaces the prior-embedding stage of the nerp mode.
std::vector<ModeOutcome> run_modes(const ExperimentConfig& cfg, const ExperimentInputs& inputs,
                                   const EmbedResult* shared_embedding = nullptr, bool verbose = false);

// CSV bodies. Metrics rows are deterministic; timings live in their own file.
std::string metrics_csv(const std::vector<ModeOutcome>& outcomes);
std::string timing_csv(const std::vector<ModeOutcome>& outcomes);

// Commands. Each writes into a temporary sibling of cfg.output_dir and
// renames it into place only when everything succeeded.
void cmd_simulate(const ExperimentConfig& cfg);
std::vector<ModeOutcome> cmd_reconstruct(const ExperimentConfig& cfg, bool verbose = false);

struct SweepRow {
  int value;
  Method method;
  double psnr;
  double ssim;
};

// Repeats the reconstruction for each value of the axis with the shared seed.
// Up to `workers` points run concurrently.
std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<int>& values,
                                int workers = 1, bool verbose = false);
std::string sweep_csv(const std::vector<SweepRow>& rows);

// Worker cap from NERP_THREADS (default 1).
int worker_limit();

// Entry point used by the executable; returns the process exit status.
int main(int argc, char** argv);

}  // namespace nerp::cli
