// Image quality metrics on the [0, 1] scale.
#ifndef FINO_METRICS_HPP
#define FINO_METRICS_HPP

#include "fino/image.hpp"

#include <string>

namespace fino {

double mse(const Image& a, const Image& b);

/// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Single-scale SSIM with an 11 x 11 Gaussian window (sigma 1.5),
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2, L = 1, evaluated at every valid window
/// position and averaged over positions and channels.
double ssim(const Image& a, const Image& b);

/// Metric text for reports: "inf" for infinity, fixed precision otherwise.
std::string format_metric(double v, int precision = 4);

}  // namespace fino

#endif  // FINO_METRICS_HPP
