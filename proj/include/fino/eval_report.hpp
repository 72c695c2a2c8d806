// Per-image evaluation rows and their CSV serialization.
#ifndef FINO_EVAL_REPORT_HPP
#define FINO_EVAL_REPORT_HPP

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace fino {

struct EvalRow {
    std::string path;
    double noisy_psnr = std::numeric_limits<double>::quiet_NaN();
    double denoised_psnr = 0.0;
    double ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::vector<std::pair<std::string, std::string>> config;  // echoed as comment lines
    std::uint64_t seed = 0;
    /// Which pixels the metrics saw, e.g. "unclamped-float".
    std::string domain = "unclamped-float";

    double mean_noisy_psnr() const;
    double mean_denoised_psnr() const;
    double mean_ssim() const;

    /// Header "path,noisy_psnr,denoised_psnr,ssim", one row per image, then a
    /// "mean" row. Comment lines starting with '#' carry the config echo.
    std::string to_csv() const;
};

}  // namespace fino

#endif  // FINO_EVAL_REPORT_HPP
