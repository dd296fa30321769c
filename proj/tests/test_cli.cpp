#include <doctest.h>

#include <filesystem>
#include <random>

#include "cli.hpp"
#include "nerp/error.hpp"
#include "nerp/io.hpp"

using namespace nerp;
using namespace nerp::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("nerp_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

json small_doc(const std::string& modality, const fs::path& out) {
  return {{"modality", modality},
          {"image_size", 16},
          {"seed", 5},
          {"output_dir", out.string()},
          {"sampling", {{"views_or_spokes", 6}}},
          {"network", {{"fourier_m", 16}, {"depth", 3}, {"width", 24}}},
          {"training", {{"prior_iters", 20}, {"recon_iters", 15}}}};
}

std::string slurp(const fs::path& p) {
  const auto bytes = io::read_file(p);
  return {bytes.begin(), bytes.end()};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config parsing fills modality defaults and rejects unknown keys") {
  const auto cfg = parse_config(json::object());
  CHECK(cfg.modality() == ops::Modality::ct);
  CHECK(cfg.image_size == 64);
  CHECK(cfg.recon.depth == 8);
  CHECK(cfg.recon.width == 256);

  const auto mri = parse_config({{"modality", "mri"}});
  CHECK(mri.modes.back() == Method::adjoint_nufft);

  CHECK_THROWS_AS(parse_config({{"modality", "pet"}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"imagesize", 32}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"network", {{"layers", 3}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"network", {{"depth", "eight"}}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"modes", {"nerp", "magic"}}}), ConfigError);
  CHECK_THROWS_AS(parse_config({{"training", {{"recon_lr", -1.0}}}}), ConfigError);
}

TEST_CASE("resolved config round trips and hashes stably") {
  TempDir dir;
  const auto cfg = parse_config(small_doc("mri", dir / "out"));
  const auto again = parse_config(to_json(cfg));
  CHECK(to_json(again) == to_json(cfg));
  CHECK(config_hash(again) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);

  auto moved = cfg;
  moved.output_dir = dir / "elsewhere";
  CHECK(config_hash(moved) == config_hash(cfg));
  auto reseeded = cfg;
  reseeded.recon.seed = 6;
  CHECK(config_hash(reseeded) != config_hash(cfg));
}

TEST_CASE("validation runs before any computation") {
  TempDir dir;
  auto doc = small_doc("ct", dir / "out");
  doc["modes"] = {"adjoint_nufft"};
  CHECK_THROWS_AS(validate(parse_config(doc)), ConfigError);

  doc["modes"] = {"fbp", "fbp"};
  CHECK_THROWS_AS(validate(parse_config(doc)), ConfigError);

  const auto target = dir / "target.f64";
  io::save_image(phantoms::shepp_logan(16), target, io::ImageFormat::raw_f64);
  doc["modes"] = {"nerp"};
  doc["inputs"] = {{"target", target.string()}};
  auto cfg = parse_config(doc);
  CHECK_FALSE(cfg.has_prior());
  CHECK_THROWS_AS(cmd_reconstruct(cfg), ConfigError);
  CHECK_FALSE(fs::exists(dir / "out"));

  doc["inputs"] = {{"target", (dir / "missing.f64").string()}};
  doc["modes"] = {"fbp"};
  CHECK_THROWS_AS(validate(parse_config(doc)), ConfigError);
}

TEST_CASE("reconstruct writes one metrics row per mode") {
  TempDir dir;
  auto doc = small_doc("ct", dir / "run");
  doc["modes"] = {"nerp", "fbp"};
  const auto outcomes = cmd_reconstruct(parse_config(doc));
  REQUIRE(outcomes.size() == 2);
  CHECK(outcomes[0].iterations == 35);
  CHECK(outcomes[1].iterations == 0);

  const std::string csv = slurp(dir / "run" / "metrics.csv");
  CHECK(csv.rfind("mode,psnr,ssim,iters\n", 0) == 0);
  CHECK(count_lines(csv) == 3);
  CHECK(csv.find("\nfbp,") != std::string::npos);
  for (const char* f : {"nerp.png", "nerp.f64", "fbp.png", "loss_nerp.csv", "prior_loss_nerp.csv", "timing.csv",
                        "manifest.json", "config.json", "target.png", "prior.png"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / "run" / f));
  }
  CHECK(count_lines(slurp(dir / "run" / "loss_nerp.csv")) == 16);

  const auto manifest = json::parse(slurp(dir / "run" / "manifest.json"));
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("config_hash") == config_hash(parse_config(doc)));

  // Nothing is left behind next to the output.
  int siblings = 0;
  for (const auto& e : fs::directory_iterator(dir.path)) siblings += e.is_directory();
  CHECK(siblings == 1);
}

TEST_CASE("reconstruct replaces an existing output directory") {
  TempDir dir;
  auto doc = small_doc("mri", dir / "run");
  doc["modes"] = {"adjoint_nufft"};
  fs::create_directories(dir / "run");
  io::write_file(dir / "run" / "stale.txt", "x");
  cmd_reconstruct(parse_config(doc));
  CHECK_FALSE(fs::exists(dir / "run" / "stale.txt"));
  CHECK(fs::exists(dir / "run" / "adjoint_nufft.png"));
}

TEST_CASE("simulate is deterministic and shaped by the sampling") {
  TempDir dir;
  auto ct = small_doc("ct", dir / "a");
  cmd_simulate(parse_config(ct));
  ct["output_dir"] = (dir / "b").string();
  cmd_simulate(parse_config(ct));
  CHECK(io::read_file(dir / "a" / "measurements.bin") == io::read_file(dir / "b" / "measurements.bin"));
  CHECK(io::read_file(dir / "a" / "target.f64") == io::read_file(dir / "b" / "target.f64"));

  const auto sino = std::get<ops::SinogramData>(io::load_measurements(dir / "a" / "measurements.bin"));
  CHECK(sino.values.rows() == 6);
  CHECK(sino.values.cols() == static_cast<Eigen::Index>(sino.offsets.size()));

  auto mri = small_doc("mri", dir / "m");
  mri["sampling"]["views_or_spokes"] = 40;
  mri["sampling"]["samples_per_view"] = 20;
  cmd_simulate(parse_config(mri));
  const auto k = std::get<ops::KSpaceData>(io::load_measurements(dir / "m" / "measurements.bin"));
  CHECK(k.values.size() == 40 * 20);
  CHECK(k.num_spokes == 40);
}

TEST_CASE("loaded images are normalized jointly by default") {
  TempDir dir;
  ImageGrid prior = ImageGrid::square(16, 100.0);
  prior(3, 3) = 300.0;
  ImageGrid target = ImageGrid::square(16, 100.0);
  target(5, 5) = 500.0;
  io::save_image(prior, dir / "p.f64", io::ImageFormat::raw_f64);
  io::save_image(target, dir / "t.f64", io::ImageFormat::raw_f64);
  auto doc = small_doc("ct", dir / "out");
  doc["inputs"] = {{"prior", (dir / "p.f64").string()}, {"target", (dir / "t.f64").string()}};
  auto in = prepare_inputs(parse_config(doc));
  CHECK((*in.prior)(3, 3) == doctest::Approx(1.0));
  CHECK(in.target(5, 5) == doctest::Approx(2.0));
  CHECK(in.target(0, 0) == doctest::Approx(0.0));

  doc["inputs"]["normalization"] = "independent";
  in = prepare_inputs(parse_config(doc));
  CHECK(in.target(5, 5) == doctest::Approx(1.0));

  doc["image_size"] = 32;
  CHECK_THROWS_AS(prepare_inputs(parse_config(doc)), ConfigError);
}

TEST_CASE("sweep produces a row per value and mode") {
  TempDir dir;
  auto doc = small_doc("ct", dir / "sweep");
  doc["modes"] = {"nerp", "fbp"};
  const auto cfg = parse_config(doc);
  const std::vector<int> views{5, 10, 20, 30};
  const auto rows = cmd_sweep(cfg, SweepAxis::views, views, 2);
  REQUIRE(rows.size() == 8);
  for (Method m : {Method::nerp, Method::fbp}) {
    const auto n = std::count_if(rows.begin(), rows.end(), [&](const SweepRow& r) { return r.method == m; });
    CHECK(n == 4);
  }
  CHECK(rows.front().value == 5);
  CHECK(rows.back().value == 30);
  CHECK(count_lines(slurp(dir / "sweep" / "sweep.csv")) == 9);
  CHECK(fs::exists(dir / "sweep" / "views_30" / "metrics.csv"));

  // Threads do not change results.
  auto serial_doc = doc;
  serial_doc["output_dir"] = (dir / "serial").string();
  const auto serial = cmd_sweep(parse_config(serial_doc), SweepAxis::views, views, 1);
  CHECK(sweep_csv(serial) == sweep_csv(rows));

  CHECK_THROWS_AS(cmd_sweep(cfg, SweepAxis::spokes, {4}, 1), ConfigError);
  CHECK_THROWS_AS(cmd_sweep(cfg, SweepAxis::depth, {0}, 1), ConfigError);
}
