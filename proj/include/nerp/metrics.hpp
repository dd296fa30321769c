#pragma once

#include <string>
#include <vector>

#include "nerp/image.hpp"

namespace nerp::metrics {

// Peak signal-to-noise ratio in dB. Both images are clamped to
// [0, data_range] first. Identical images give +infinity.
double psnr(const ImageGrid& test, const ImageGrid& ref, double data_range = 1.0);

// Mean squared error after the same clamping psnr() applies.
double mse(const ImageGrid& test, const ImageGrid& ref, double data_range = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Mean SSIM over all window positions fully inside the image (Gaussian
// window). 3D volumes are evaluated slice by slice along the first axis and
// averaged. Images are clamped to [0, data_range].
double ssim(const ImageGrid& test, const ImageGrid& ref, const SsimOptions& opts = {});

// Normalized window weights (window x window, row-major).
std::vector<double> gaussian_window(int size, double sigma);

// Mean absolute error restricted to mask == true.
double masked_mae(const ImageGrid& test, const ImageGrid& ref, const std::vector<bool>& mask);

// "inf" for infinite values, fixed 6-decimal otherwise.
std::string format_metric(double value);

}  // namespace nerp::metrics
