#include "nerp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "nerp/error.hpp"

namespace nerp::metrics {

namespace {

void require_same_shape(const ImageGrid& a, const ImageGrid& b) {
  if (!a.same_shape(b)) throw ShapeError("metric inputs must have the same shape");
  if (a.empty()) throw ShapeError("metric inputs must be non-empty");
}

// SSIM map mean for one 2D plane using separable Gaussian filtering over
// "valid" window positions.
double ssim_plane(const std::vector<double>& x, const std::vector<double>& y, int rows, int cols,
                  const SsimOptions& o) {
  const int w = o.window;
  if (rows < w || cols < w) throw InputError("image smaller than the SSIM window");
  std::vector<double> g(w);
  double total = 0.0;
  for (int i = 0; i < w; ++i) {
    const double d = i - 0.5 * (w - 1);
    g[i] = std::exp(-d * d / (2.0 * o.sigma * o.sigma));
    total += g[i];
  }
  for (double& v : g) v /= total;

  const int out_r = rows - w + 1;
  const int out_c = cols - w + 1;
  // Horizontal pass for the five moment images, then vertical.
  auto filter = [&](auto&& value_at) {
    std::vector<double> h(static_cast<std::size_t>(rows) * out_c);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < out_c; ++c) {
        double acc = 0.0;
        for (int k = 0; k < w; ++k) acc += g[k] * value_at(static_cast<std::size_t>(r) * cols + c + k);
        h[static_cast<std::size_t>(r) * out_c + c] = acc;
      }
    std::vector<double> v(static_cast<std::size_t>(out_r) * out_c);
    for (int r = 0; r < out_r; ++r)
      for (int c = 0; c < out_c; ++c) {
        double acc = 0.0;
        for (int k = 0; k < w; ++k) acc += g[k] * h[static_cast<std::size_t>(r + k) * out_c + c];
        v[static_cast<std::size_t>(r) * out_c + c] = acc;
      }
    return v;
  };
  const auto mu_x = filter([&](std::size_t i) { return x[i]; });
  const auto mu_y = filter([&](std::size_t i) { return y[i]; });
  const auto xx = filter([&](std::size_t i) { return x[i] * x[i]; });
  const auto yy = filter([&](std::size_t i) { return y[i] * y[i]; });
  const auto xy = filter([&](std::size_t i) { return x[i] * y[i]; });

  const double c1 = (o.k1 * o.data_range) * (o.k1 * o.data_range);
  const double c2 = (o.k2 * o.data_range) * (o.k2 * o.data_range);
  double sum = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i];
    const double my = mu_y[i];
    const double vx = xx[i] - mx * mx;
    const double vy = yy[i] - my * my;
    const double cov = xy[i] - mx * my;
    sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return sum / static_cast<double>(mu_x.size());
}

}  // namespace

double mse(const ImageGrid& test, const ImageGrid& ref, double data_range) {
  require_same_shape(test, ref);
  if (!(data_range > 0.0)) throw InputError("data range must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double d = std::clamp(test[i], 0.0, data_range) - std::clamp(ref[i], 0.0, data_range);
    acc += d * d;
  }
  return acc / static_cast<double>(test.size());
}

double psnr(const ImageGrid& test, const ImageGrid& ref, double data_range) {
  const double err = mse(test, ref, data_range);
  if (err == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / err);
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double dr = r - 0.5 * (size - 1);
      const double dc = c - 0.5 * (size - 1);
      const double v = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(r) * size + c] = v;
      total += v;
    }
  for (double& v : w) v /= total;
  return w;
}

double ssim(const ImageGrid& test, const ImageGrid& ref, const SsimOptions& opts) {
  require_same_shape(test, ref);
  if (opts.window < 1 || !(opts.sigma > 0.0) || !(opts.data_range > 0.0)) throw InputError("invalid SSIM options");
  const ImageGrid a = test.clamped(0.0, opts.data_range);
  const ImageGrid b = ref.clamped(0.0, opts.data_range);
  if (a.ndim() == 2) return ssim_plane(a.data(), b.data(), a.rows(), a.cols(), opts);
  if (a.ndim() == 3) {
    double sum = 0.0;
    for (int s = 0; s < a.shape()[0]; ++s) {
      const ImageGrid sa = a.slice(s);
      const ImageGrid sb = b.slice(s);
      sum += ssim_plane(sa.data(), sb.data(), sa.rows(), sa.cols(), opts);
    }
    return sum / a.shape()[0];
  }
  throw ShapeError("SSIM requires a 2D image or 3D volume");
}

double masked_mae(const ImageGrid& test, const ImageGrid& ref, const std::vector<bool>& mask) {
  require_same_shape(test, ref);
  if (mask.size() != test.size()) throw ShapeError("mask size does not match image");
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    acc += std::abs(test[i] - ref[i]);
    ++n;
  }
  if (n == 0) throw InputError("mask selects no pixels");
  return acc / static_cast<double>(n);
}

std::string format_metric(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

}  // namespace nerp::metrics
