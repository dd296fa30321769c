#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <CLI11.hpp>

#include "nerp/error.hpp"
#include "nerp/io.hpp"
#include "nerp/metrics.hpp"

namespace nerp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex log_mutex;

void log_line(const std::string& text) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << text << '\n';
}

// ------------------------------------------------------------ parsing ----

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_key(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("invalid value for '" + std::string(key) + "' in " + where);
  }
}

phantoms::LesionSpec parse_lesion(const json& j) {
  check_keys(j, {"center", "axes", "angle", "delta_intensity"}, "lesion");
  phantoms::LesionSpec l;
  read_key(j, "center", l.center, "lesion");
  read_key(j, "axes", l.axes, "lesion");
  read_key(j, "angle", l.angle, "lesion");
  read_key(j, "delta_intensity", l.delta_intensity, "lesion");
  try {
    l.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return l;
}

json lesion_json(const phantoms::LesionSpec& l) {
  return {{"center", l.center}, {"axes", l.axes}, {"angle", l.angle}, {"delta_intensity", l.delta_intensity}};
}

Normalization parse_normalization(const std::string& name) {
  if (name == "joint") return Normalization::joint;
  if (name == "independent") return Normalization::independent;
  throw ConfigError("unknown normalization '" + name + "' (expected joint or independent)");
}

template <typename F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

// ------------------------------------------------------------ outputs ----

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string eigen_version() {
  return std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION);
}

json manifest(const ExperimentConfig& cfg, const std::string& command) {
  return {{"command", command},
          {"config_hash", config_hash(cfg)},
          {"seed", cfg.recon.seed},
          {"config", to_json(cfg)},
          {"versions",
           {{"nerp", kVersion},
            {"eigen", eigen_version()},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}}}};
}

void write_run_metadata(const fs::path& dir, const ExperimentConfig& cfg, const std::string& command) {
  io::write_file(dir / "manifest.json", manifest(cfg, command).dump(2) + "\n");
  io::write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
}

fs::path normalized_output(fs::path out) {
  out = out.lexically_normal();
  if (out.filename().empty()) out = out.parent_path();
  if (out.empty()) throw ConfigError("output directory must not be empty");
  return out;
}

// Runs `body` against a fresh staging directory next to `out`, then swaps it
// into place. On failure the staging directory is removed and `out` is left
// as it was.
template <typename F>
void with_staging(const fs::path& requested, F&& body) {
  const fs::path out = normalized_output(requested);
  fs::path parent = out.parent_path();
  if (parent.empty()) parent = ".";
  fs::create_directories(parent);
  static std::atomic<unsigned> counter{0};
  const std::string tag = std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const fs::path staging = parent / ("." + out.filename().string() + ".tmp-" + tag);
  fs::remove_all(staging);
  fs::create_directories(staging);
  try {
    body(staging);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(staging, ec);
    throw;
  }
  if (fs::exists(out)) {
    const fs::path old = parent / ("." + out.filename().string() + ".old-" + tag);
    fs::rename(out, old);
    fs::rename(staging, out);
    fs::remove_all(old);
  } else {
    fs::rename(staging, out);
  }
}

void save_preview_and_raw(const ImageGrid& img, const fs::path& dir, const std::string& stem) {
  io::save_image(img, dir / (stem + ".f64"), io::ImageFormat::raw_f64);
  io::save_image(img.clamped(), dir / (stem + ".png"), io::ImageFormat::png);
}

void write_mode_outputs(const std::vector<ModeOutcome>& outcomes, const fs::path& dir) {
  for (const auto& o : outcomes) {
    const std::string name = to_string(o.method);
    save_preview_and_raw(o.image, dir, name);
    if (o.method == Method::fbp || o.method == Method::adjoint_nufft) continue;
    io::write_loss_csv(o.losses, dir / ("loss_" + name + ".csv"));
    if (!o.prior_losses.empty()) io::write_loss_csv(o.prior_losses, dir / ("prior_loss_" + name + ".csv"));
  }
  io::write_file(dir / "metrics.csv", metrics_csv(outcomes));
  io::write_file(dir / "timing.csv", timing_csv(outcomes));
}

ReconMode recon_mode(Method m) {
  switch (m) {
    case Method::nerp: return ReconMode::nerp;
    case Method::nerp_no_prior: return ReconMode::nerp_no_prior;
    case Method::grff: return ReconMode::grff;
    default: throw ContractError("not a training mode");
  }
}

ImageGrid load_square(const fs::path& path, const char* role) {
  ImageGrid img = io::load_image(path, io::format_from_extension(path));
  if (img.ndim() != 2 || img.rows() != img.cols()) {
    throw GeometryError(std::string(role) + " image must be a square 2D image: " + path.string());
  }
  if (!img.all_finite()) throw InputError(std::string(role) + " image contains non-finite values");
  return img;
}

ImageGrid map_range(const ImageGrid& img, double lo, double hi) {
  ImageGrid out = img;
  const double span = hi - lo;
  for (auto& v : out.values()) v = span > 0.0 ? (v - lo) / span : 0.0;
  out.source_min = lo;
  out.source_max = hi;
  return out;
}

std::pair<double, double> value_range(const ImageGrid& img) {
  double lo = img[0], hi = img[0];
  for (double v : img.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- names ----

std::string to_string(Method m) {
  switch (m) {
    case Method::nerp: return "nerp";
    case Method::nerp_no_prior: return "nerp_no_prior";
    case Method::grff: return "grff";
    case Method::fbp: return "fbp";
    case Method::adjoint_nufft: return "adjoint_nufft";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::nerp, Method::nerp_no_prior, Method::grff, Method::fbp, Method::adjoint_nufft}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + name + "'");
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::views: return "views";
    case SweepAxis::spokes: return "spokes";
    case SweepAxis::depth: return "depth";
    case SweepAxis::width: return "width";
  }
  return "unknown";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  for (SweepAxis a : {SweepAxis::views, SweepAxis::spokes, SweepAxis::depth, SweepAxis::width}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown sweep axis '" + name + "' (expected views, spokes, depth or width)");
}

// --------------------------------------------------------------- config ----

ExperimentConfig parse_config(const json& doc) {
  check_keys(doc,
             {"modality", "image_size", "seed", "modes", "output_dir", "sampling", "network", "training", "phantom",
              "inputs", "sweep"},
             "config");
  std::string modality_name = "ct";
  read_key(doc, "modality", modality_name, "config");
  const ops::Modality modality = as_config_error([&] { return ops::parse_modality(modality_name); });

  ExperimentConfig cfg;
  read_key(doc, "image_size", cfg.image_size, "config");
  if (cfg.image_size < 1) throw ConfigError("image_size must be positive");
  cfg.recon = as_config_error([&] { return ReconConfig::defaults_for(modality, cfg.image_size); });
  read_key(doc, "seed", cfg.recon.seed, "config");

  if (doc.contains("modes")) {
    std::vector<std::string> names;
    read_key(doc, "modes", names, "config");
    cfg.modes.clear();
    for (const auto& n : names) cfg.modes.push_back(parse_method(n));
  } else {
    cfg.modes = {Method::nerp, Method::nerp_no_prior,
                 modality == ops::Modality::ct ? Method::fbp : Method::adjoint_nufft};
  }
  std::string out = cfg.output_dir.string();
  read_key(doc, "output_dir", out, "config");
  cfg.output_dir = out;

  if (doc.contains("sampling")) {
    const json& s = doc.at("sampling");
    check_keys(s, {"views_or_spokes", "samples_per_view", "detector_pitch", "noise_sigma", "noise_seed"}, "sampling");
    auto& sp = cfg.recon.sampling;
    read_key(s, "views_or_spokes", sp.num_views_or_spokes, "sampling");
    read_key(s, "samples_per_view", sp.samples_per_view, "sampling");
    read_key(s, "detector_pitch", sp.detector_pitch, "sampling");
    read_key(s, "noise_sigma", sp.noise_sigma, "sampling");
    read_key(s, "noise_seed", sp.noise_seed, "sampling");
  }
  if (doc.contains("network")) {
    const json& n = doc.at("network");
    check_keys(n, {"fourier_m", "fourier_sigma", "depth", "width", "activation", "omega0"}, "network");
    read_key(n, "fourier_m", cfg.recon.fourier_m, "network");
    read_key(n, "fourier_sigma", cfg.recon.fourier_sigma, "network");
    read_key(n, "depth", cfg.recon.depth, "network");
    read_key(n, "width", cfg.recon.width, "network");
    read_key(n, "omega0", cfg.recon.omega0, "network");
    if (n.contains("activation")) {
      std::string act;
      read_key(n, "activation", act, "network");
      cfg.recon.activation = as_config_error([&] { return mlp::parse_activation(act); });
    }
  }
  if (doc.contains("training")) {
    const json& t = doc.at("training");
    check_keys(t, {"prior_iters", "recon_iters", "prior_lr", "recon_lr", "scratch_lr"}, "training");
    read_key(t, "prior_iters", cfg.recon.prior_iters, "training");
    read_key(t, "recon_iters", cfg.recon.recon_iters, "training");
    read_key(t, "prior_lr", cfg.recon.prior_lr, "training");
    read_key(t, "recon_lr", cfg.recon.recon_lr, "training");
    read_key(t, "scratch_lr", cfg.recon.scratch_lr, "training");
  }
  if (doc.contains("phantom")) {
    const json& p = doc.at("phantom");
    check_keys(p, {"lesions"}, "phantom");
    if (p.contains("lesions")) {
      if (!p.at("lesions").is_array()) throw ConfigError("phantom.lesions must be an array");
      cfg.lesions.clear();
      for (const auto& l : p.at("lesions")) cfg.lesions.push_back(parse_lesion(l));
    }
  }
  if (doc.contains("inputs")) {
    const json& in = doc.at("inputs");
    check_keys(in, {"prior", "target", "measurements", "normalization"}, "inputs");
    auto path_key = [&](const char* key, std::optional<fs::path>& dst) {
      if (!in.contains(key) || in.at(key).is_null()) return;
      std::string p;
      read_key(in, key, p, "inputs");
      dst = p;
    };
    path_key("prior", cfg.prior_path);
    path_key("target", cfg.target_path);
    path_key("measurements", cfg.measurements_path);
    if (in.contains("normalization")) {
      std::string n;
      read_key(in, "normalization", n, "inputs");
      cfg.normalization = parse_normalization(n);
    }
  }
  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    check_keys(s, {"axis", "values"}, "sweep");
    if (s.contains("axis")) {
      std::string axis;
      read_key(s, "axis", axis, "sweep");
      cfg.sweep_axis = parse_sweep_axis(axis);
    }
    read_key(s, "values", cfg.sweep_values, "sweep");
  }
  as_config_error([&] {
    cfg.recon.validate();
    return 0;
  });
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  const auto bytes = as_config_error([&] { return io::read_file(path); });
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed config " + path.string() + ": " + e.what(), e.byte);
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& cfg) {
  const auto& r = cfg.recon;
  const auto& s = r.sampling;
  json modes = json::array();
  for (Method m : cfg.modes) modes.push_back(to_string(m));
  json lesions = json::array();
  for (const auto& l : cfg.lesions) lesions.push_back(lesion_json(l));
  json inputs = {{"normalization", cfg.normalization == Normalization::joint ? "joint" : "independent"}};
  if (cfg.prior_path) inputs["prior"] = cfg.prior_path->string();
  if (cfg.target_path) inputs["target"] = cfg.target_path->string();
  if (cfg.measurements_path) inputs["measurements"] = cfg.measurements_path->string();
  json doc = {
      {"modality", ops::to_string(s.modality)},
      {"image_size", cfg.image_size},
      {"seed", r.seed},
      {"modes", modes},
      {"output_dir", cfg.output_dir.string()},
      {"sampling",
       {{"views_or_spokes", s.num_views_or_spokes},
        {"samples_per_view", s.samples_per_view},
        {"detector_pitch", s.detector_pitch},
        {"noise_sigma", s.noise_sigma},
        {"noise_seed", s.noise_seed}}},
      {"network",
       {{"fourier_m", r.fourier_m},
        {"fourier_sigma", r.fourier_sigma},
        {"depth", r.depth},
        {"width", r.width},
        {"activation", std::string(mlp::to_string(r.activation))},
        {"omega0", r.omega0}}},
      {"training",
       {{"prior_iters", r.prior_iters},
        {"recon_iters", r.recon_iters},
        {"prior_lr", r.prior_lr},
        {"recon_lr", r.recon_lr},
        {"scratch_lr", r.scratch_lr}}},
      {"phantom", {{"lesions", lesions}}},
      {"inputs", inputs},
  };
  if (cfg.sweep_axis) doc["sweep"] = {{"axis", to_string(*cfg.sweep_axis)}, {"values", cfg.sweep_values}};
  return doc;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json doc = to_json(cfg);
  // Where results go does not change what is computed.
  doc.erase("output_dir");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(doc.dump())));
  return buf;
}

void validate(const ExperimentConfig& cfg) {
  as_config_error([&] {
    cfg.recon.validate();
    return 0;
  });
  if (cfg.modes.empty()) throw ConfigError("at least one mode is required");
  std::set<Method> seen;
  for (Method m : cfg.modes) {
    if (!seen.insert(m).second) throw ConfigError("mode '" + to_string(m) + "' listed twice");
    if (m == Method::fbp && cfg.modality() != ops::Modality::ct) throw ConfigError("fbp requires ct measurements");
    if (m == Method::adjoint_nufft && cfg.modality() != ops::Modality::mri) {
      throw ConfigError("adjoint_nufft requires mri measurements");
    }
    if (m == Method::nerp && !cfg.has_prior()) {
      throw ConfigError("mode 'nerp' requires a prior image (inputs.prior)");
    }
  }
  if (cfg.prior_path && !cfg.target_path) throw ConfigError("inputs.prior requires inputs.target");
  for (const auto* p : {&cfg.prior_path, &cfg.target_path, &cfg.measurements_path}) {
    if (*p && !fs::is_regular_file(**p)) throw ConfigError("input file not found: " + (*p)->string());
  }
  if (!cfg.target_path && cfg.image_size < 8) throw ConfigError("phantom image_size must be >= 8");
  for (const auto& l : cfg.lesions) {
    as_config_error([&] {
      l.validate();
      return 0;
    });
  }
  const fs::path out = normalized_output(cfg.output_dir);
  if (fs::exists(out) && !fs::is_directory(out)) {
    throw ConfigError("output path exists and is not a directory: " + out.string());
  }
  if (cfg.sweep_axis) {
    if (*cfg.sweep_axis == SweepAxis::views && cfg.modality() != ops::Modality::ct) {
      throw ConfigError("views sweeps require ct");
    }
    if (*cfg.sweep_axis == SweepAxis::spokes && cfg.modality() != ops::Modality::mri) {
      throw ConfigError("spokes sweeps require mri");
    }
    if ((*cfg.sweep_axis == SweepAxis::views || *cfg.sweep_axis == SweepAxis::spokes) && cfg.measurements_path) {
      throw ConfigError("sampling sweeps simulate their own measurements; remove inputs.measurements");
    }
    for (int v : cfg.sweep_values) {
      if (v < 1) throw ConfigError("sweep values must be positive");
    }
  }
}

// --------------------------------------------------------------- inputs ----

ExperimentInputs prepare_inputs(const ExperimentConfig& cfg) {
  ExperimentInputs in{std::nullopt, ImageGrid{}, ops::SinogramData{}};
  if (cfg.target_path) {
    ImageGrid target = load_square(*cfg.target_path, "target");
    if (target.rows() != cfg.image_size) {
      throw ConfigError("target is " + std::to_string(target.rows()) + " pixels wide but image_size is " +
                        std::to_string(cfg.image_size));
    }
    std::optional<ImageGrid> prior;
    if (cfg.prior_path) {
      prior = load_square(*cfg.prior_path, "prior");
      if (!prior->same_shape(target)) throw ShapeError("prior and target shapes differ");
    }
    if (cfg.normalization == Normalization::joint) {
      const auto [lo, hi] = value_range(prior ? *prior : target);
      in.target = map_range(target, lo, hi);
      if (prior) in.prior = map_range(*prior, lo, hi);
    } else {
      in.target = target.normalized();
      if (prior) in.prior = prior->normalized();
    }
  } else {
    auto pair = phantoms::make_longitudinal_pair(cfg.image_size, cfg.lesions);
    in.prior = std::move(pair.prior);
    in.target = std::move(pair.target);
  }

  if (cfg.measurements_path) {
    in.measurements = io::load_measurements(*cfg.measurements_path);
    if (ops::modality_of(in.measurements) != cfg.modality()) {
      throw ConfigError("measurement file modality does not match the configuration");
    }
    if (ops::image_size_of(in.measurements) != cfg.image_size) {
      throw ConfigError("measurement file image size does not match the configuration");
    }
  } else {
    in.measurements = ops::simulate(in.target, cfg.recon.sampling);
  }
  return in;
}

// ---------------------------------------------------------------- modes ----

std::vector<ModeOutcome> run_modes(const ExperimentConfig& cfg, const ExperimentInputs& inputs,
                                   const EmbedResult* shared_embedding, bool verbose) {
  const int n = ops::image_size_of(inputs.measurements);
  const std::vector<int> shape{n, n};
  std::vector<ModeOutcome> outcomes;
  for (Method m : cfg.modes) {
    ModeOutcome o;
    o.method = m;
    const auto t0 = std::chrono::steady_clock::now();
    const std::string label = to_string(m);
    ProgressFn progress;
    if (verbose) {
      progress = [label](std::string_view stage, int it, double loss) {
        if (it % 100 == 0) {
          char buf[160];
          std::snprintf(buf, sizeof buf, "[%s] %s iter %d loss %.6g", label.c_str(), std::string(stage).c_str(),
                        it, loss);
          log_line(buf);
        }
      };
    }
    switch (m) {
      case Method::fbp:
        o.image = ops::fbp_reconstruct(std::get<ops::SinogramData>(inputs.measurements), shape);
        break;
      case Method::adjoint_nufft:
        o.image = ops::adjoint_nufft_reconstruct(std::get<ops::KSpaceData>(inputs.measurements), shape);
        break;
      default: {
        auto r = reconstruct(inputs.prior, inputs.measurements, cfg.recon, recon_mode(m), progress,
                             m == Method::nerp ? shared_embedding : nullptr);
        o.image = std::move(r.image);
        o.losses = std::move(r.losses);
        o.prior_losses = std::move(r.prior_losses);
        o.iterations = cfg.recon.recon_iters + (m == Method::nerp ? cfg.recon.prior_iters : 0);
      }
    }
    o.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.psnr = metrics::psnr(o.image, inputs.target);
    o.ssim = metrics::ssim(o.image, inputs.target);
    if (verbose) {
      log_line("[" + label + "] psnr " + metrics::format_metric(o.psnr) + " ssim " + metrics::format_metric(o.ssim));
    }
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

std::string metrics_csv(const std::vector<ModeOutcome>& outcomes) {
  std::string out = "mode,psnr,ssim,iters\n";
  for (const auto& o : outcomes) {
    out += to_string(o.method) + "," + metrics::format_metric(o.psnr) + "," + metrics::format_metric(o.ssim) + "," +
           std::to_string(o.iterations) + "\n";
  }
  return out;
}

std::string timing_csv(const std::vector<ModeOutcome>& outcomes) {
  std::string out = "mode,wall_time_s\n";
  char buf[32];
  for (const auto& o : outcomes) {
    std::snprintf(buf, sizeof buf, "%.3f", o.wall_seconds);
    out += to_string(o.method) + "," + buf + "\n";
  }
  return out;
}

// ------------------------------------------------------------- commands ----

void cmd_simulate(const ExperimentConfig& cfg) {
  validate(cfg);
  const ExperimentInputs inputs = prepare_inputs(cfg);
  with_staging(cfg.output_dir, [&](const fs::path& dir) {
    if (inputs.prior) save_preview_and_raw(*inputs.prior, dir, "prior");
    save_preview_and_raw(inputs.target, dir, "target");
    io::save_measurements(inputs.measurements, dir / "measurements.bin");
    write_run_metadata(dir, cfg, "simulate");
  });
}

std::vector<ModeOutcome> cmd_reconstruct(const ExperimentConfig& cfg, bool verbose) {
  validate(cfg);
  const ExperimentInputs inputs = prepare_inputs(cfg);
  std::vector<ModeOutcome> outcomes;
  with_staging(cfg.output_dir, [&](const fs::path& dir) {
    outcomes = run_modes(cfg, inputs, nullptr, verbose);
    write_mode_outputs(outcomes, dir);
    if (inputs.prior) save_preview_and_raw(*inputs.prior, dir, "prior");
    save_preview_and_raw(inputs.target, dir, "target");
    write_run_metadata(dir, cfg, "reconstruct");
  });
  return outcomes;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<int>& values,
                                int workers, bool verbose) {
  ExperimentConfig cfg = base;
  cfg.sweep_axis = axis;
  cfg.sweep_values = values;
  validate(cfg);
  if (values.empty()) throw ConfigError("sweep needs at least one value");

  std::vector<ExperimentConfig> points;
  for (int v : values) {
    ExperimentConfig p = cfg;
    p.sweep_axis.reset();
    p.sweep_values.clear();
    switch (axis) {
      case SweepAxis::views:
      case SweepAxis::spokes: p.recon.sampling.num_views_or_spokes = v; break;
      case SweepAxis::depth: p.recon.depth = v; break;
      case SweepAxis::width: p.recon.width = v; break;
    }
    validate(p);
    points.push_back(std::move(p));
  }

  const ExperimentInputs base_inputs = prepare_inputs(cfg);
  const bool sampling_axis = axis == SweepAxis::views || axis == SweepAxis::spokes;
  bool wants_nerp = false;
  for (Method m : cfg.modes) wants_nerp = wants_nerp || m == Method::nerp;
  // The prior embedding does not depend on the sampling, so sampling sweeps
  // embed once and start every point from the same weights.
  std::optional<EmbedResult> shared;
  if (sampling_axis && wants_nerp) {
    if (verbose) log_line("[sweep] embedding prior once for all points");
    shared = embed_prior(*base_inputs.prior, cfg.recon);
  }

  std::vector<std::vector<ModeOutcome>> results(points.size());
  with_staging(cfg.output_dir, [&](const fs::path& dir) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(points.size());
    auto worker = [&] {
      for (std::size_t i = next++; i < points.size(); i = next++) {
        try {
          ExperimentInputs in = base_inputs;
          if (sampling_axis) in.measurements = ops::simulate(in.target, points[i].recon.sampling);
          results[i] = run_modes(points[i], in, shared ? &*shared : nullptr, verbose);
          const fs::path sub = dir / (to_string(axis) + "_" + std::to_string(values[i]));
          fs::create_directories(sub);
          write_mode_outputs(results[i], sub);
          write_run_metadata(sub, points[i], "sweep-point");
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const int count = std::max(1, std::min<int>(workers, static_cast<int>(points.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < count; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i)
      for (const auto& o : results[i]) rows.push_back({values[i], o.method, o.psnr, o.ssim});
    io::write_file(dir / "sweep.csv", sweep_csv(rows));
    write_run_metadata(dir, cfg, "sweep");
  });

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (const auto& o : results[i]) rows.push_back({values[i], o.method, o.psnr, o.ssim});
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "value,mode,psnr,ssim\n";
  for (const auto& r : rows) {
    out += std::to_string(r.value) + "," + to_string(r.method) + "," + metrics::format_metric(r.psnr) + "," +
           metrics::format_metric(r.ssim) + "\n";
  }
  return out;
}

int worker_limit() {
  const char* env = std::getenv("NERP_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("NERP_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(v, 1024));
}

// ------------------------------------------------------------------ CLI ----

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction from sparse measurements with prior-embedded neural representations"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string modes;
    std::optional<int> views;
    std::optional<int> spokes;
    bool quiet = false;
  };
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON experiment configuration");
    sub->add_option("--seed", common.seed, "Seed for initialization (overrides config)");
    sub->add_option("--out", common.out, "Output directory (overrides config)");
    sub->add_option("--mode", common.modes, "Comma-separated modes: nerp,nerp_no_prior,grff,fbp,adjoint_nufft");
    auto* v = sub->add_option("--views", common.views, "CT projection count (overrides config)");
    auto* s = sub->add_option("--spokes", common.spokes, "MRI spoke count (overrides config)");
    v->excludes(s);
    sub->add_flag("--quiet", common.quiet, "Suppress progress output");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate phantoms and simulated measurements");
  add_common(simulate);
  auto* recon = app.add_subcommand("reconstruct", "Run reconstruction modes and write images and metrics");
  add_common(recon);
  auto* sweep = app.add_subcommand("sweep", "Repeat reconstruction across a parameter axis");
  add_common(sweep);
  std::string axis_name;
  std::string sweep_values;
  sweep->add_option("--axis", axis_name, "views, spokes, depth or width");
  sweep->add_option("--values", sweep_values, "Comma-separated integer values");

  auto* metric = app.add_subcommand("metrics", "PSNR and SSIM of an image against a reference");
  std::string test_path, ref_path;
  double data_range = 1.0;
  metric->add_option("--test", test_path, "Image to evaluate")->required();
  metric->add_option("--ref", ref_path, "Reference image")->required();
  metric->add_option("--range", data_range, "Data range");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (metric->parsed()) {
      const auto a = io::load_image(test_path, io::format_from_extension(test_path));
      const auto b = io::load_image(ref_path, io::format_from_extension(ref_path));
      metrics::SsimOptions opts;
      opts.data_range = data_range;
      std::cout << "psnr,ssim\n"
                << metrics::format_metric(metrics::psnr(a, b, data_range)) << ','
                << metrics::format_metric(metrics::ssim(a, b, opts)) << '\n';
      return 0;
    }

    json doc = json::object();
    if (!common.config.empty()) {
      const auto bytes = as_config_error([&] { return io::read_file(common.config); });
      try {
        doc = json::parse(bytes.begin(), bytes.end());
      } catch (const json::parse_error& e) {
        throw ParseError("malformed config " + common.config + ": " + e.what(), e.byte);
      }
      require_object(doc, "config");
    }
    // Flags override config keys before strict parsing.
    if (common.seed) doc["seed"] = *common.seed;
    if (!common.out.empty()) doc["output_dir"] = common.out;
    if (!common.modes.empty()) doc["modes"] = split_list(common.modes);
    const std::string modality = doc.value("modality", std::string("ct"));
    if (common.views) {
      if (modality != "ct") throw ConfigError("--views applies to ct configurations; use --spokes for mri");
      doc["sampling"]["views_or_spokes"] = *common.views;
    }
    if (common.spokes) {
      if (modality != "mri") throw ConfigError("--spokes applies to mri configurations; use --views for ct");
      doc["sampling"]["views_or_spokes"] = *common.spokes;
    }
    ExperimentConfig cfg = parse_config(doc);
    const bool verbose = !common.quiet;

    if (simulate->parsed()) {
      cmd_simulate(cfg);
      std::cout << "wrote " << normalized_output(cfg.output_dir).string() << '\n';
    } else if (recon->parsed()) {
      const auto outcomes = cmd_reconstruct(cfg, verbose);
      std::cout << metrics_csv(outcomes);
    } else if (sweep->parsed()) {
      if (!axis_name.empty()) cfg.sweep_axis = parse_sweep_axis(axis_name);
      if (!sweep_values.empty()) {
        cfg.sweep_values.clear();
        for (const auto& v : split_list(sweep_values)) {
          try {
            std::size_t used = 0;
            cfg.sweep_values.push_back(std::stoi(v, &used));
            if (used != v.size()) throw std::invalid_argument(v);
          } catch (const std::exception&) {
            throw ConfigError("sweep value '" + v + "' is not an integer");
          }
        }
      }
      if (!cfg.sweep_axis) throw ConfigError("sweep needs --axis (or sweep.axis in the config)");
      const auto rows = cmd_sweep(cfg, *cfg.sweep_axis, cfg.sweep_values, worker_limit(), verbose);
      std::cout << sweep_csv(rows);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error at byte " << e.offset() << ": " << e.what() << '\n';
    return 2;
  } catch (const OptimizerError& e) {
    std::cerr << "optimizer error at iteration " << e.iteration() << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace nerp::cli
