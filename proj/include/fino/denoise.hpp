// Inference: encode y, keep the clean code, and decode it with a chosen
// noise code z_r.
#ifndef FINO_DENOISE_HPP
#define FINO_DENOISE_HPP

#include "fino/flow.hpp"
#include "fino/image.hpp"
#include "fino/random.hpp"

#include <cstdint>

namespace fino {

enum class DenoiseMode {
    zero,     // z_r = 0, deterministic
    sample,   // one draw z_r ~ N(0, I)
    average,  // mean of `samples` decodes with independent draws
};

struct DenoiseOptions {
    DenoiseMode mode = DenoiseMode::zero;
    std::uint64_t seed = 0;
    Index samples = 8;
};

/// Reflect padding (edge not repeated) on the bottom and right.
inline Image reflect_pad(const Image& img, Index pad_bottom, Index pad_right) {
    if (pad_bottom < 0 || pad_right < 0 || pad_bottom >= img.height || pad_right >= img.width) {
        throw std::invalid_argument("reflect_pad: padding must be smaller than the image extent");
    }
    Image out(img.channels, img.height + pad_bottom, img.width + pad_right);
    auto reflect = [](Index i, Index n) { return i < n ? i : 2 * (n - 1) - i; };
    for (Index c = 0; c < img.channels; ++c) {
        for (Index y = 0; y < out.height; ++y) {
            for (Index x = 0; x < out.width; ++x) {
                out.at(c, y, x) = img.at(c, reflect(y, img.height), reflect(x, img.width));
            }
        }
    }
    return out;
}

/// Denoised estimate of `y`. Extents that are not multiples of 2^B are
/// reflect-padded and the result cropped back; `padded` reports whether that
/// happened. No clamping is applied.
template <typename Scalar>
Image denoise(const FlowModel<Scalar>& model, const Image& y, const DenoiseOptions& opt, bool* padded = nullptr) {
    const auto& cfg = model.config();
    if (y.channels != cfg.input_channels) {
        throw std::invalid_argument("denoise: image has " + std::to_string(y.channels) + " channels, model expects " +
                                    std::to_string(cfg.input_channels));
    }
    NoGradGuard no_grad;
    const Index m = cfg.spatial_multiple();
    const Index pb = (m - y.height % m) % m, pr = (m - y.width % m) % m;
    if (padded) *padded = pb > 0 || pr > 0;
    const Image input = (pb > 0 || pr > 0) ? reflect_pad(y, pb, pr) : y;

    const auto code = flow_forward(input.to_tensor<Scalar>(), model);
    const auto clean = code.clean();
    const Shape noise_shape{1, code.channels() - code.clean_channels, clean.dim(2), clean.dim(3)};

    auto decode = [&](const Tensor<Scalar>& z_r) {
        return Image::from_tensor(flow_inverse(LatentCode<Scalar>::combine(clean, z_r), model));
    };
    auto draw = [&](std::uint64_t seed) {
        Rng rng(seed);
        Array<Scalar> v(numel(noise_shape));
        for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(rng.normal());
        return Tensor<Scalar>(noise_shape, std::move(v));
    };

    Image out;
    switch (opt.mode) {
        case DenoiseMode::zero:
            out = decode(Tensor<Scalar>::zeros(noise_shape));
            break;
        case DenoiseMode::sample:
            out = decode(draw(opt.seed));
            break;
        case DenoiseMode::average: {
            if (opt.samples < 1) {
                throw std::invalid_argument("denoise: average mode needs at least one sample");
            }
            for (Index k = 0; k < opt.samples; ++k) {
                Image one = decode(draw(derive_seed(opt.seed, static_cast<std::uint64_t>(k))));
                if (k == 0) {
                    out = std::move(one);
                } else {
                    out.pixels += one.pixels;
                }
            }
            out.pixels /= static_cast<double>(opt.samples);
            break;
        }
    }
    if (pb > 0 || pr > 0) {
        Image cropped(out.channels, y.height, y.width);
        for (Index c = 0; c < out.channels; ++c)
            for (Index r = 0; r < y.height; ++r)
                for (Index x = 0; x < y.width; ++x) cropped.at(c, r, x) = out.at(c, r, x);
        out = std::move(cropped);
    }
    return out;
}

}  // namespace fino

#endif  // FINO_DENOISE_HPP
