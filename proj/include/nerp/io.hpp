#pragma once

// File formats.
//
// Images: raw_f64 (little-endian doubles, row-major, with a `<path>.json`
// sidecar holding the shape), 16-bit binary PGM (P5) and 16-bit grayscale
// PNG. The 16-bit formats store the quantization range in a comment / text
// chunk so intensities outside [0,1] survive a round trip.
//
// Measurements and checkpoints use one container: the 8-byte magic
// "NERPBIN1", a little-endian uint64 header length, a JSON header, then a
// payload of little-endian doubles.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nerp/forward_models.hpp"
#include "nerp/image.hpp"
#include "nerp/pipeline.hpp"

namespace nerp::io {

enum class ImageFormat { raw_f64, pgm, png };

ImageFormat parse_image_format(const std::string& name);
const char* to_string(ImageFormat f);
// Format implied by the extension (.f64/.raw, .pgm, .png).
ImageFormat format_from_extension(const std::filesystem::path& path);

void save_image(const ImageGrid& img, const std::filesystem::path& path, ImageFormat format);
ImageGrid load_image(const std::filesystem::path& path, ImageFormat format);

struct BinaryDocument {
  nlohmann::json header;
  std::vector<double> payload;
};

void write_binary_document(const std::filesystem::path& path, const BinaryDocument& doc);
BinaryDocument read_binary_document(const std::filesystem::path& path);

void save_measurements(const ops::Measurements& m, const std::filesystem::path& path);
ops::Measurements load_measurements(const std::filesystem::path& path);

// Checkpoint of a trained field: architecture, encoding and seed in the
// header; encoding matrix followed by every layer's weights (row-major) and
// biases in the payload.
void save_checkpoint(const NeuralField<float>& field, const std::filesystem::path& path, std::uint64_t seed,
                     const std::string& config_hash);
NeuralField<float> load_checkpoint(const std::filesystem::path& path);

// CSV with header "iteration,loss".
void write_loss_csv(const std::vector<double>& losses, const std::filesystem::path& path);

// Reads a whole file; throws Error when it cannot be opened.
std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace nerp::io
