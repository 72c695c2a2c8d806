#include "fino/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fino {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b) || a.size() == 0) {
        throw std::invalid_argument(std::string(what) + ": images must be non-empty and equally shaped");
    }
}

constexpr Index kWindow = 11;
constexpr double kWindowSigma = 1.5;

Eigen::ArrayXd gaussian_window() {
    Eigen::ArrayXd g(kWindow);
    const double centre = (kWindow - 1) / 2.0;
    for (Index i = 0; i < kWindow; ++i) {
        const double d = i - centre;
        g[i] = std::exp(-d * d / (2 * kWindowSigma * kWindowSigma));
    }
    return g / g.sum();
}

// Separable "valid" filtering of an h x w plane.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& plane, const Eigen::ArrayXd& g) {
    const Index h = plane.rows(), w = plane.cols();
    const Index oh = h - kWindow + 1, ow = w - kWindow + 1;
    Eigen::ArrayXXd rows_done(h, ow);
    for (Index x = 0; x < ow; ++x) {
        rows_done.col(x) = Eigen::ArrayXd::Zero(h);
        for (Index k = 0; k < kWindow; ++k) rows_done.col(x) += g[k] * plane.col(x + k);
    }
    Eigen::ArrayXXd out(oh, ow);
    for (Index y = 0; y < oh; ++y) {
        out.row(y) = Eigen::ArrayXXd::Zero(1, ow);
        for (Index k = 0; k < kWindow; ++k) out.row(y) += g[k] * rows_done.row(y + k);
    }
    return out;
}

}  // namespace

double mse(const Image& a, const Image& b) {
    require_same(a, b, "mse");
    return (a.pixels - b.pixels).square().mean();
}

double psnr(const Image& a, const Image& b, double peak) {
    const double err = mse(a, b);
    if (err == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(peak * peak / err);
}

double ssim(const Image& a, const Image& b) {
    require_same(a, b, "ssim");
    if (a.height < kWindow || a.width < kWindow) {
        throw std::invalid_argument("ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                                    " is smaller than the 11x11 window");
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const Eigen::ArrayXd g = gaussian_window();
    double total = 0.0;
    Index count = 0;
    for (Index c = 0; c < a.channels; ++c) {
        Eigen::ArrayXXd pa(a.height, a.width), pb(a.height, a.width);
        for (Index y = 0; y < a.height; ++y) {
            for (Index x = 0; x < a.width; ++x) {
                pa(y, x) = a.at(c, y, x);
                pb(y, x) = b.at(c, y, x);
            }
        }
        const Eigen::ArrayXXd mu_a = filter_valid(pa, g), mu_b = filter_valid(pb, g);
        const Eigen::ArrayXXd var_a = filter_valid(pa * pa, g) - mu_a * mu_a;
        const Eigen::ArrayXXd var_b = filter_valid(pb * pb, g) - mu_b * mu_b;
        const Eigen::ArrayXXd cov = filter_valid(pa * pb, g) - mu_a * mu_b;
        const Eigen::ArrayXXd num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
        const Eigen::ArrayXXd den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
        const Eigen::ArrayXXd map = num / den;
        total += map.sum();
        count += map.size();
    }
    return total / static_cast<double>(count);
}

std::string format_metric(double v, int precision) {
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    if (std::isnan(v)) {
        return "nan";
    }
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

}  // namespace fino
