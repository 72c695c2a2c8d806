// Self-checks shared by the command line tool and the acceptance binary:
// invertibility, Haar orthonormality, and a finite-difference audit of the
// reverse pass through the full objective.
#ifndef FINO_AUDIT_HPP
#define FINO_AUDIT_HPP

#include "fino/flow.hpp"
#include "fino/haar.hpp"
#include "fino/metrics.hpp"
#include "fino/toy_data.hpp"
#include "fino/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace fino {

struct RoundTripReport {
    double max_error = 0.0;
    Index inputs = 0;
    double seconds = 0.0;
};

/// max |Flow^-1(Flow(x)) - x| over `inputs` standard-normal images on a
/// randomly initialized model.
inline RoundTripReport roundtrip_audit(const FlowConfig& cfg, std::uint64_t seed, Index inputs, Index size) {
    const auto start = std::chrono::steady_clock::now();
    FlowModel<double> model(cfg);
    model.initialize(InitMode::random, derive_seed(seed, 0));
    NoGradGuard no_grad;
    RoundTripReport r;
    for (Index i = 0; i < inputs; ++i) {
        const auto x = normal_tensor<double>({1, cfg.input_channels, size, size},
                                             derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
        const auto back = flow_inverse(flow_forward(x, model), model);
        r.max_error = std::max(r.max_error, static_cast<double>((back.value() - x.value()).abs().maxCoeff()));
        ++r.inputs;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

/// Same audit on a given image with a given model.
template <typename Scalar>
double roundtrip_error(const FlowModel<Scalar>& model, const Image& img) {
    NoGradGuard no_grad;
    const auto x = img.to_tensor<Scalar>();
    return static_cast<double>((flow_inverse(flow_forward(x, model), model).value() - x.value()).abs().maxCoeff());
}

struct HaarReport {
    double max_energy_error = 0.0;  // relative
    double max_roundtrip_error = 0.0;
    Index tensors = 0;
};

inline HaarReport haar_audit(std::uint64_t seed, Index tensors) {
    NoGradGuard no_grad;
    HaarReport r;
    Rng shapes(seed);
    for (Index i = 0; i < tensors; ++i) {
        const Index n = 1 + static_cast<Index>(shapes.below(2));
        const Index c = 1 + static_cast<Index>(shapes.below(4));
        const Index h = 2 * (1 + static_cast<Index>(shapes.below(8)));
        const Index w = 2 * (1 + static_cast<Index>(shapes.below(8)));
        const auto x = normal_tensor<double>({n, c, h, w}, derive_seed(seed, static_cast<std::uint64_t>(i)));
        const auto u = haar_forward(x);
        const double ex = x.value().square().sum(), eu = u.value().square().sum();
        r.max_energy_error = std::max(r.max_energy_error, std::abs(ex - eu) / ex);
        r.max_roundtrip_error =
            std::max(r.max_roundtrip_error, (haar_inverse(u).value() - x.value()).abs().maxCoeff());
        ++r.tensors;
    }
    return r;
}

struct GradCheckOptions {
    FlowConfig flow;
    LossWeights weights;
    Index batch = 2;
    Index size = 8;
    double sigma = 25.0 / 255.0;
    double step = 1e-6;
    /// Denominator floor of the relative error, in units of the loss.
    double floor = 1e-4;
    std::uint64_t seed = 3;
};

struct GradCheckReport {
    double worst_relative = 0.0;
    std::string worst_parameter;
    Index worst_index = 0;
    Index checked = 0;
    /// Entries whose central difference straddled a ReLU or |.| kink and were
    /// checked with the one-sided difference on the side of the evaluation point.
    Index one_sided = 0;
    double seconds = 0.0;
};

/// Compares every reverse-mode parameter gradient of the full objective with
/// central finite differences.
inline GradCheckReport gradcheck_audit(const GradCheckOptions& opt, double tolerance = 1e-5) {
    const auto start = std::chrono::steady_clock::now();
    FlowModel<double> model(opt.flow);
    model.initialize(InitMode::random, derive_seed(opt.seed, 0), 0.5);

    const auto images = make_toy_dataset(opt.batch, opt.size, derive_seed(opt.seed, 1), opt.flow.input_channels);
    std::vector<Image> xs, ys, ns;
    Batch<double> batch;
    for (Index i = 0; i < opt.batch; ++i) {
        auto pair = add_awgn(images[static_cast<std::size_t>(i)], opt.sigma,
                             derive_seed(opt.seed, 2 + static_cast<std::uint64_t>(i)));
        xs.push_back(images[static_cast<std::size_t>(i)]);
        ys.push_back(pair.noisy);
        ns.push_back(pair.noise);
        batch.sigma.push_back(opt.sigma);
    }
    batch.x = stack_images<double>(xs);
    batch.y = stack_images<double>(ys);
    batch.n = stack_images<double>(ns);
    const auto z_r = normal_tensor<double>(noise_code_shape(opt.flow, opt.batch, opt.size, opt.size),
                                           derive_seed(opt.seed, 100));

    auto params = model.parameters();
    for (auto& p : params) p.zero_grad();
    backward(compute_objective(model, batch, z_r, opt.weights).total);

    auto loss = [&] {
        NoGradGuard no_grad;
        return compute_objective(model, batch, z_r, opt.weights).total.item();
    };
    const double h = opt.step;
    const double base = loss();
    GradCheckReport r;
    for (auto& p : params) {
        const Array<double> analytic = p.has_grad() ? p.grad() : Array<double>::Zero(p.size());
        for (Index i = 0; i < p.size(); ++i) {
            double& v = p.mutable_value()[i];
            const double saved = v;
            v = saved + h;
            const double up = loss();
            v = saved - h;
            const double down = loss();
            v = saved;
            auto rel = [&](double numeric) {
                return std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
            };
            double err = rel((up - down) / (2 * h));
            if (err >= tolerance) {
                const double forward = rel((up - base) / h), back = rel((base - down) / h);
                if (std::min(forward, back) < tolerance) {
                    ++r.one_sided;
                    err = std::min(forward, back);
                }
            }
            if (err > r.worst_relative || r.checked == 0) {
                r.worst_relative = err;
                r.worst_parameter = p.name();
                r.worst_index = i;
            }
            ++r.checked;
        }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

struct SelftestCase {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Quick property suite: Haar orthonormality, flow invertibility, latent swap
/// identities, reverse-mode gradients and metric units.
inline std::vector<SelftestCase> run_selftest(std::uint64_t seed = 1) {
    std::vector<SelftestCase> out;
    auto record = [&](const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
        SelftestCase c{name};
        try {
            std::tie(c.passed, c.detail) = body();
        } catch (const std::exception& e) {
            c.passed = false;
            c.detail = std::string("threw: ") + e.what();
        }
        out.push_back(std::move(c));
    };
    auto fmt = [](const char* label, double v) {
        std::ostringstream os;
        os << label << "=" << std::setprecision(3) << v;
        return os.str();
    };

    record("haar_orthonormal", [&] {
        const auto r = haar_audit(seed, 100);
        return std::make_pair(r.max_energy_error < 1e-12 && r.max_roundtrip_error < 1e-12,
                              fmt("energy", r.max_energy_error) + " " + fmt("roundtrip", r.max_roundtrip_error));
    });
    record("flow_roundtrip", [&] {
        FlowConfig cfg;
        cfg.hidden_width = 8;
        const auto r = roundtrip_audit(cfg, seed, 5, 16);
        return std::make_pair(r.max_error < 1e-9, fmt("max_error", r.max_error));
    });
    record("latent_swap", [&] {
        FlowConfig cfg;
        cfg.hidden_width = 8;
        FlowModel<double> model(cfg);
        model.initialize(InitMode::random, seed);
        NoGradGuard no_grad;
        const auto x = normal_tensor<double>({1, 1, 16, 16}, derive_seed(seed, 1));
        const auto y = normal_tensor<double>({1, 1, 16, 16}, derive_seed(seed, 2));
        const auto zx = flow_forward(x, model), zy = flow_forward(y, model);
        const double self = (flow_inverse(latent_swap(zx, zx).first, model).value() - x.value()).abs().maxCoeff();
        const auto [a, b] = latent_swap(zx, zy);
        const auto [a2, b2] = latent_swap(a, b);
        const bool exact = (a2.z.value() == zx.z.value()).all() && (b2.z.value() == zy.z.value()).all();
        return std::make_pair(self < 1e-9 && exact, fmt("self_swap_error", self) + (exact ? " double_swap=exact" : " double_swap=differs"));
    });
    record("gradient", [&] {
        GradCheckOptions opt;
        opt.flow.num_blocks = 1;
        opt.flow.layers_per_block = 1;
        opt.flow.hidden_width = 3;
        opt.seed = seed;
        const auto r = gradcheck_audit(opt);
        return std::make_pair(r.worst_relative < 1e-5, fmt("worst_relative", r.worst_relative));
    });
    record("metric_units", [&] {
        Image a(1, 16, 16), b(1, 16, 16);
        for (Index i = 0; i < a.size(); ++i) a.pixels[i] = 0.25 + 0.5 * static_cast<double>(i) / a.size();
        b.pixels = a.pixels + 0.1;
        const double p = psnr(a, b), s = ssim(a, a);
        return std::make_pair(std::abs(p - 20.0) < 1e-9 && s == 1.0, fmt("psnr", p) + " " + fmt("ssim", s));
    });
    return out;
}

}  // namespace fino

#endif  // FINO_AUDIT_HPP
