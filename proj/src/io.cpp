#include "nerp/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <png.h>

#include "nerp/error.hpp"

namespace nerp::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'N', 'E', 'R', 'P', 'B', 'I', 'N', '1'};

template <typename U>
U to_little_endian(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(U)];
    std::memcpy(bytes, &v, sizeof(U));
    std::reverse(bytes, bytes + sizeof(U));
    std::memcpy(&v, bytes, sizeof(U));
    return v;
  }
}

void append_u64(std::string& out, std::uint64_t v) {
  v = to_little_endian(v);
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

void append_f64(std::string& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  append_u64(out, bits);
}

std::uint64_t read_u64(const char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, sizeof v);
  return to_little_endian(v);
}

double read_f64(const char* p) { return std::bit_cast<double>(read_u64(p)); }

fs::path sidecar_path(const fs::path& path) {
  fs::path side = path;
  side += ".json";
  return side;
}

// Quantization range: [0,1] widened to include the data.
std::pair<double, double> quantization_range(const ImageGrid& img) {
  double lo = 0.0;
  double hi = 1.0;
  for (double v : img.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

std::uint16_t quantize(double v, double lo, double hi) {
  const double q = std::round((v - lo) / (hi - lo) * 65535.0);
  return static_cast<std::uint16_t>(std::clamp(q, 0.0, 65535.0));
}

void require_2d(const ImageGrid& img, const char* format) {
  if (img.ndim() != 2) throw ShapeError(std::string(format) + " images must be 2D");
  if (!img.all_finite()) throw InputError("cannot save non-finite image");
}

// ------------------------------------------------------------- raw ----

void save_raw(const ImageGrid& img, const fs::path& path) {
  std::string bytes;
  bytes.reserve(img.size() * 8);
  for (double v : img.values()) append_f64(bytes, v);
  write_file(path, bytes);
  json side = {{"shape", img.shape()},
               {"dtype", "float64"},
               {"byte_order", "little"},
               {"source_min", img.source_min},
               {"source_max", img.source_max}};
  write_file(sidecar_path(path), side.dump(2) + "\n");
}

ImageGrid load_raw(const fs::path& path) {
  const auto side_bytes = read_file(sidecar_path(path));
  json side;
  try {
    side = json::parse(side_bytes.begin(), side_bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed raw_f64 sidecar: ") + e.what(), e.byte);
  }
  std::vector<int> shape;
  try {
    shape = side.at("shape").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("raw_f64 sidecar lacks a valid shape: ") + e.what(), 0);
  }
  const std::size_t count = element_count(shape);
  const auto data = read_file(path);
  if (data.size() != count * 8) {
    throw ParseError("raw_f64 payload holds " + std::to_string(data.size()) + " bytes, expected " +
                         std::to_string(count * 8),
                     std::min(data.size(), count * 8) - std::min(data.size(), count * 8) % 8);
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) values[i] = read_f64(data.data() + 8 * i);
  ImageGrid img(shape, std::move(values));
  img.source_min = side.value("source_min", 0.0);
  img.source_max = side.value("source_max", 1.0);
  return img;
}

// ------------------------------------------------------------- pgm ----

void save_pgm(const ImageGrid& img, const fs::path& path) {
  require_2d(img, "PGM");
  const auto [lo, hi] = quantization_range(img);
  std::ostringstream header;
  header.precision(17);
  header << "P5\n# nerp-range " << lo << ' ' << hi << "\n" << img.cols() << ' ' << img.rows() << "\n65535\n";
  std::string bytes = header.str();
  for (double v : img.values()) {
    const std::uint16_t q = quantize(v, lo, hi);
    bytes.push_back(static_cast<char>(q >> 8));
    bytes.push_back(static_cast<char>(q & 0xff));
  }
  write_file(path, bytes);
}

class PgmReader {
public:
  explicit PgmReader(const std::vector<char>& data) : data_(data) {}

  // Skips whitespace and comments; a "# nerp-range lo hi" comment is recorded.
  void skip_space() {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        const std::size_t start = pos_;
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
        parse_comment(std::string(data_.begin() + static_cast<std::ptrdiff_t>(start),
                                  data_.begin() + static_cast<std::ptrdiff_t>(pos_)));
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_int() {
    skip_space();
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < data_.size() && std::isdigit(static_cast<unsigned char>(data_[pos_]))) {
      v = v * 10 + (data_[pos_] - '0');
      if (v > (1L << 30)) throw ParseError("PGM header value too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError("expected an integer in PGM header", start);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }
  bool has_range = false;
  double lo = 0.0;
  double hi = 1.0;

private:
  void parse_comment(const std::string& line) {
    std::istringstream in(line);
    std::string hash;
    std::string tag;
    double a = 0.0;
    double b = 0.0;
    if (in >> hash >> tag >> a >> b && hash == "#" && tag == "nerp-range" && b > a) {
      has_range = true;
      lo = a;
      hi = b;
    }
  }

  const std::vector<char>& data_;
  std::size_t pos_ = 0;
};

ImageGrid load_pgm(const fs::path& path) {
  const auto data = read_file(path);
  if (data.size() < 2 || data[0] != 'P' || data[1] != '5') throw ParseError("not a binary PGM (P5) file", 0);
  PgmReader reader(data);
  reader.advance(2);
  const long width = reader.read_int();
  const long height = reader.read_int();
  const long maxval = reader.read_int();
  if (width < 1 || height < 1) throw ParseError("PGM dimensions must be positive", reader.pos());
  if (maxval < 1 || maxval > 65535) throw ParseError("PGM maxval out of range", reader.pos());
  if (reader.pos() >= data.size() || !std::isspace(static_cast<unsigned char>(data[reader.pos()]))) {
    throw ParseError("missing whitespace after PGM header", reader.pos());
  }
  reader.advance(1);
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  const std::size_t start = reader.pos();
  if (data.size() < start + count * bytes_per) {
    throw ParseError("truncated PGM pixel data", data.size());
  }
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t q = static_cast<unsigned char>(data[start + i * bytes_per]);
    if (bytes_per == 2) q = (q << 8) | static_cast<unsigned char>(data[start + i * 2 + 1]);
    if (q > static_cast<std::uint32_t>(maxval)) throw ParseError("PGM sample exceeds maxval", start + i * bytes_per);
    const double unit = static_cast<double>(q) / static_cast<double>(maxval);
    values[i] = reader.lo + (reader.hi - reader.lo) * unit;
  }
  return ImageGrid({static_cast<int>(height), static_cast<int>(width)}, std::move(values));
}

// ------------------------------------------------------------- png ----

struct PngReadBuffer {
  const std::vector<char>* data;
  std::size_t pos;
};

[[noreturn]] void png_error_handler(png_structp png, png_const_charp msg) {
  auto* offset = static_cast<std::size_t*>(png_get_error_ptr(png));
  throw ParseError(std::string("PNG error: ") + msg, offset ? *offset : 0);
}

void png_warning_handler(png_structp, png_const_charp) {}

void png_read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* buf = static_cast<PngReadBuffer*>(png_get_io_ptr(png));
  if (buf->pos + length > buf->data->size()) {
    png_error(png, "unexpected end of file");
  }
  std::memcpy(out, buf->data->data() + buf->pos, length);
  buf->pos += length;
}

void png_write_callback(png_structp png, png_bytep in, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(in), length);
}

void png_flush_callback(png_structp) {}

void save_png(const ImageGrid& img, const fs::path& path) {
  require_2d(img, "PNG");
  const auto [lo, hi] = quantization_range(img);
  std::size_t offset = 0;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &offset, png_error_handler, png_warning_handler);
  if (!png) throw Error("cannot allocate PNG writer");
  png_infop info = png_create_info_struct(png);
  std::string bytes;
  try {
    png_set_write_fn(png, &bytes, png_write_callback, png_flush_callback);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()), static_cast<png_uint_32>(img.rows()), 16,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::ostringstream range;
    range.precision(17);
    range << lo << ' ' << hi;
    const std::string range_text = range.str();
    png_text text{};
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("nerp-range");
    text.text = const_cast<char*>(range_text.c_str());
    png_set_text(png, info, &text, 1);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<std::size_t>(img.cols()) * 2);
    for (int r = 0; r < img.rows(); ++r) {
      for (int c = 0; c < img.cols(); ++c) {
        const std::uint16_t q = quantize(img(r, c), lo, hi);
        row[2 * c] = static_cast<unsigned char>(q >> 8);
        row[2 * c + 1] = static_cast<unsigned char>(q & 0xff);
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  write_file(path, bytes);
}

ImageGrid load_png(const fs::path& path) {
  const auto data = read_file(path);
  if (data.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(data.data()), 0, 8) != 0) {
    throw ParseError("not a PNG file", 0);
  }
  PngReadBuffer buffer{&data, 0};
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &buffer.pos, png_error_handler, png_warning_handler);
  if (!png) throw Error("cannot allocate PNG reader");
  png_infop info = png_create_info_struct(png);
  std::vector<double> values;
  int width = 0;
  int height = 0;
  double lo = 0.0;
  double hi = 1.0;
  try {
    png_set_read_fn(png, &buffer, png_read_callback);
    png_read_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) throw ParseError("only grayscale PNG images are supported", buffer.pos);
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    png_textp texts = nullptr;
    int num_text = 0;
    png_get_text(png, info, &texts, &num_text);
    for (int i = 0; i < num_text; ++i) {
      if (std::string(texts[i].key) == "nerp-range") {
        std::istringstream in(texts[i].text);
        double a = 0.0;
        double b = 0.0;
        if (in >> a >> b && b > a) {
          lo = a;
          hi = b;
        }
      }
    }
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    const int bytes_per = depth == 16 ? 2 : 1;
    const double maxval = depth == 16 ? 65535.0 : 255.0;
    std::vector<unsigned char> row(rowbytes);
    values.resize(static_cast<std::size_t>(width) * height);
    for (int r = 0; r < height; ++r) {
      png_read_row(png, row.data(), nullptr);
      for (int c = 0; c < width; ++c) {
        std::uint32_t q = row[static_cast<std::size_t>(c) * bytes_per];
        if (bytes_per == 2) q = (q << 8) | row[static_cast<std::size_t>(c) * 2 + 1];
        values[static_cast<std::size_t>(r) * width + c] = lo + (hi - lo) * (q / maxval);
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return ImageGrid({height, width}, std::move(values));
}

// ----------------------------------------------------- containers ----

template <typename T>
std::vector<T> json_vector(const json& header, const char* key) {
  try {
    return header.at(key).get<std::vector<T>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("header field '") + key + "' missing or invalid: " + e.what(), 0);
  }
}

template <typename T>
T json_value(const json& header, const char* key) {
  try {
    return header.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("header field '") + key + "' missing or invalid: " + e.what(), 0);
  }
}

void require_payload(const BinaryDocument& doc, std::size_t expected) {
  if (doc.payload.size() != expected) {
    throw ParseError("payload holds " + std::to_string(doc.payload.size()) + " values, expected " +
                         std::to_string(expected),
                     16);
  }
}

}  // namespace

ImageFormat parse_image_format(const std::string& name) {
  if (name == "raw_f64" || name == "raw" || name == "f64") return ImageFormat::raw_f64;
  if (name == "pgm") return ImageFormat::pgm;
  if (name == "png") return ImageFormat::png;
  throw InputError("unknown image format '" + name + "'");
}

const char* to_string(ImageFormat f) {
  switch (f) {
    case ImageFormat::raw_f64: return "raw_f64";
    case ImageFormat::pgm: return "pgm";
    case ImageFormat::png: return "png";
  }
  return "unknown";
}

ImageFormat format_from_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (ext == ".pgm") return ImageFormat::pgm;
  if (ext == ".png") return ImageFormat::png;
  if (ext == ".f64" || ext == ".raw") return ImageFormat::raw_f64;
  throw InputError("cannot infer image format from extension '" + ext + "'");
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("failed writing " + path.string());
}

void save_image(const ImageGrid& img, const fs::path& path, ImageFormat format) {
  switch (format) {
    case ImageFormat::raw_f64: return save_raw(img, path);
    case ImageFormat::pgm: return save_pgm(img, path);
    case ImageFormat::png: return save_png(img, path);
  }
}

ImageGrid load_image(const fs::path& path, ImageFormat format) {
  switch (format) {
    case ImageFormat::raw_f64: return load_raw(path);
    case ImageFormat::pgm: return load_pgm(path);
    case ImageFormat::png: return load_png(path);
  }
  throw InputError("unknown image format");
}

void write_binary_document(const fs::path& path, const BinaryDocument& doc) {
  const std::string header = doc.header.dump();
  std::string bytes(kMagic, sizeof kMagic);
  append_u64(bytes, header.size());
  bytes += header;
  bytes.reserve(bytes.size() + doc.payload.size() * 8);
  for (double v : doc.payload) append_f64(bytes, v);
  write_file(path, bytes);
}

BinaryDocument read_binary_document(const fs::path& path) {
  const auto data = read_file(path);
  if (data.size() < 16) throw ParseError("file too short for a container header", data.size());
  if (!std::equal(kMagic, kMagic + 8, data.begin())) throw ParseError("bad container magic", 0);
  const std::uint64_t header_len = read_u64(data.data() + 8);
  if (header_len > data.size() - 16) throw ParseError("container header extends past end of file", data.size());
  BinaryDocument doc;
  try {
    doc.header = json::parse(data.begin() + 16, data.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed container header: ") + e.what(), 16 + e.byte);
  }
  const std::size_t payload_start = 16 + header_len;
  const std::size_t payload_bytes = data.size() - payload_start;
  if (payload_bytes % 8 != 0) {
    throw ParseError("payload is not a whole number of doubles", data.size() - payload_bytes % 8);
  }
  doc.payload.resize(payload_bytes / 8);
  for (std::size_t i = 0; i < doc.payload.size(); ++i) doc.payload[i] = read_f64(data.data() + payload_start + 8 * i);
  return doc;
}

void save_measurements(const ops::Measurements& m, const fs::path& path) {
  BinaryDocument doc;
  if (const auto* sino = std::get_if<ops::SinogramData>(&m)) {
    sino->validate();
    doc.header = {{"kind", "sinogram"},
                  {"image_size", sino->image_size},
                  {"angles", sino->angles},
                  {"offsets", sino->offsets},
                  {"rows", sino->values.rows()},
                  {"cols", sino->values.cols()}};
    doc.payload.reserve(static_cast<std::size_t>(sino->values.size()));
    for (Eigen::Index r = 0; r < sino->values.rows(); ++r)
      for (Eigen::Index c = 0; c < sino->values.cols(); ++c) doc.payload.push_back(sino->values(r, c));
  } else {
    const auto& k = std::get<ops::KSpaceData>(m);
    k.validate();
    const Eigen::Index n = k.coords.rows();
    doc.header = {{"kind", "kspace"},
                  {"image_size", k.image_size},
                  {"num_spokes", k.num_spokes},
                  {"samples_per_spoke", k.samples_per_spoke},
                  {"count", n},
                  {"has_weights", k.density_weights.size() == n},
                  {"layout", "kx,ky interleaved; re,im interleaved; weights"}};
    for (Eigen::Index i = 0; i < n; ++i) {
      doc.payload.push_back(k.coords(i, 0));
      doc.payload.push_back(k.coords(i, 1));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      doc.payload.push_back(k.values[i].real());
      doc.payload.push_back(k.values[i].imag());
    }
    for (Eigen::Index i = 0; i < k.density_weights.size(); ++i) doc.payload.push_back(k.density_weights[i]);
  }
  write_binary_document(path, doc);
}

ops::Measurements load_measurements(const fs::path& path) {
  const BinaryDocument doc = read_binary_document(path);
  const std::string kind = json_value<std::string>(doc.header, "kind");
  if (kind == "sinogram") {
    ops::SinogramData sino;
    sino.image_size = json_value<int>(doc.header, "image_size");
    sino.angles = json_vector<double>(doc.header, "angles");
    sino.offsets = json_vector<double>(doc.header, "offsets");
    const auto rows = json_value<Eigen::Index>(doc.header, "rows");
    const auto cols = json_value<Eigen::Index>(doc.header, "cols");
    if (rows != static_cast<Eigen::Index>(sino.angles.size()) || cols != static_cast<Eigen::Index>(sino.offsets.size())) {
      throw ParseError("sinogram header shape does not match geometry", 16);
    }
    require_payload(doc, static_cast<std::size_t>(rows * cols));
    sino.values.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) sino.values(r, c) = doc.payload[static_cast<std::size_t>(r * cols + c)];
    sino.validate();
    return sino;
  }
  if (kind == "kspace") {
    ops::KSpaceData k;
    k.image_size = json_value<int>(doc.header, "image_size");
    k.num_spokes = json_value<int>(doc.header, "num_spokes");
    k.samples_per_spoke = json_value<int>(doc.header, "samples_per_spoke");
    const auto n = json_value<Eigen::Index>(doc.header, "count");
    const bool has_weights = json_value<bool>(doc.header, "has_weights");
    require_payload(doc, static_cast<std::size_t>(n * (has_weights ? 5 : 4)));
    k.coords.resize(n, 2);
    k.values.resize(n);
    const double* p = doc.payload.data();
    for (Eigen::Index i = 0; i < n; ++i) {
      k.coords(i, 0) = *p++;
      k.coords(i, 1) = *p++;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double re = *p++;
      const double im = *p++;
      k.values[i] = {re, im};
    }
    if (has_weights) {
      k.density_weights.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) k.density_weights[i] = *p++;
    }
    k.validate();
    return k;
  }
  throw ParseError("unknown measurement kind '" + kind + "'", 16);
}

void save_checkpoint(const NeuralField<float>& field, const fs::path& path, std::uint64_t seed,
                     const std::string& config_hash) {
  const auto& net = field.network;
  json layers = json::array();
  for (const auto& l : net.layers()) layers.push_back({l.weight.rows(), l.weight.cols()});
  BinaryDocument doc;
  doc.header = {{"kind", "checkpoint"},
                {"arch",
                 {{"depth", net.depth()},
                  {"width", net.width()},
                  {"input_dim", net.input_dim()},
                  {"activation", std::string(mlp::to_string(net.activation()))},
                  {"omega0", net.omega0()},
                  {"layers", layers}}},
                {"encoding",
                 {{"features", field.encoding.features()},
                  {"input_dim", field.encoding.input_dim()},
                  {"sigma", field.encoding.sigma()},
                  {"seed", field.encoding.seed()}}},
                {"seed", seed},
                {"config_hash", config_hash}};
  const auto& b = field.encoding.matrix();
  for (Eigen::Index r = 0; r < b.rows(); ++r)
    for (Eigen::Index c = 0; c < b.cols(); ++c) doc.payload.push_back(b(r, c));
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) doc.payload.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) doc.payload.push_back(l.bias[r]);
  }
  write_binary_document(path, doc);
}

NeuralField<float> load_checkpoint(const fs::path& path) {
  const BinaryDocument doc = read_binary_document(path);
  if (json_value<std::string>(doc.header, "kind") != "checkpoint") throw ParseError("not a checkpoint file", 16);
  const json& arch = doc.header.at("arch");
  const json& enc = doc.header.at("encoding");
  const int features = json_value<int>(enc, "features");
  const int input_dim = json_value<int>(enc, "input_dim");
  const auto shapes = json_value<std::vector<std::array<Eigen::Index, 2>>>(arch, "layers");
  std::size_t expected = static_cast<std::size_t>(features) * input_dim;
  for (const auto& s : shapes) expected += static_cast<std::size_t>(s[0] * s[1] + s[0]);
  require_payload(doc, expected);

  const double* p = doc.payload.data();
  Eigen::MatrixXd b(features, input_dim);
  for (int r = 0; r < features; ++r)
    for (int c = 0; c < input_dim; ++c) b(r, c) = *p++;
  std::vector<mlp::Layer<float>> layers;
  for (const auto& s : shapes) {
    mlp::Layer<float> l{mlp::Matrix<float>(s[0], s[1]), mlp::Vector<float>(s[0])};
    for (Eigen::Index r = 0; r < s[0]; ++r)
      for (Eigen::Index c = 0; c < s[1]; ++c) l.weight(r, c) = static_cast<float>(*p++);
    for (Eigen::Index r = 0; r < s[0]; ++r) l.bias[r] = static_cast<float>(*p++);
    layers.push_back(std::move(l));
  }
  auto encoding = mlp::FourierEncoding::from_matrix(std::move(b));
  mlp::MlpParams<float> net(std::move(layers), mlp::parse_activation(json_value<std::string>(arch, "activation")),
                            json_value<double>(arch, "omega0"));
  return NeuralField<float>{std::move(encoding), std::move(net)};
}

void write_loss_csv(const std::vector<double>& losses, const fs::path& path) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
  write_file(path, out.str());
}

}  // namespace nerp::io
