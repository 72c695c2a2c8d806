#include "fino/eval_report.hpp"

#include "fino/metrics.hpp"

#include <sstream>

namespace fino {

namespace {

template <typename Field>
double mean_of(const std::vector<EvalRow>& rows, Field field) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (const auto& r : rows) total += r.*field;
    return total / static_cast<double>(rows.size());
}

}  // namespace

double EvalReport::mean_noisy_psnr() const { return mean_of(rows, &EvalRow::noisy_psnr); }
double EvalReport::mean_denoised_psnr() const { return mean_of(rows, &EvalRow::denoised_psnr); }
double EvalReport::mean_ssim() const { return mean_of(rows, &EvalRow::ssim); }

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "# seed=" << seed << "\n# domain=" << domain << "\n# ssim=gaussian11_sigma1.5_C1=0.01^2_C2=0.03^2\n";
    for (const auto& [k, v] : config) {
        os << "# " << k << "=" << v << "\n";
    }
    os << "path,noisy_psnr,denoised_psnr,ssim\n";
    for (const auto& r : rows) {
        os << r.path << ',' << format_metric(r.noisy_psnr) << ',' << format_metric(r.denoised_psnr) << ','
           << format_metric(r.ssim, 6) << '\n';
    }
    os << "mean," << format_metric(mean_noisy_psnr()) << ',' << format_metric(mean_denoised_psnr()) << ','
       << format_metric(mean_ssim(), 6) << '\n';
    return os.str();
}

}  // namespace fino
