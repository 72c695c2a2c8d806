#include "fino/noise.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fino {

void NoiseSpec::validate() const {
    switch (kind) {
        case Kind::uniform:
            if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("sigma must be >= 0");
            break;
        case Kind::variant:
            if (!(sigma_low >= 0.0) || !(sigma_low <= sigma_high) || !std::isfinite(sigma_high)) {
                throw std::invalid_argument("variant noise needs 0 <= low <= high");
            }
            break;
        case Kind::blind:
            if (!(sigma_low >= 0.0) || !(sigma_low < sigma_high) || !std::isfinite(sigma_high)) {
                throw std::invalid_argument("blind noise needs a range 0 <= low < high");
            }
            break;
    }
}

NoisyPair add_awgn(const Image& x, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("add_awgn: sigma must be finite and >= 0, got " + std::to_string(sigma));
    }
    Rng rng(seed);
    NoisyPair out;
    out.noise = Image(x.channels, x.height, x.width);
    for (Index i = 0; i < x.size(); ++i) {
        out.noise.pixels[i] = sigma * rng.normal();
    }
    out.noisy = x;
    out.noisy.pixels += out.noise.pixels;
    out.sigma = sigma;
    return out;
}

NoisyPair add_variant_awgn(const Image& x, const SigmaMap& map, std::uint64_t seed) {
    if (map.height != x.height || map.width != x.width) {
        throw std::invalid_argument("add_variant_awgn: sigma map is " + std::to_string(map.height) + "x" +
                                    std::to_string(map.width) + ", image is " + std::to_string(x.height) + "x" +
                                    std::to_string(x.width));
    }
    Rng rng(seed);
    NoisyPair out;
    out.noise = Image(x.channels, x.height, x.width);
    for (Index c = 0; c < x.channels; ++c) {
        for (Index p = 0; p < x.plane(); ++p) {
            out.noise.pixels[c * x.plane() + p] = map.values[p] * rng.normal();
        }
    }
    out.noisy = x;
    out.noisy.pixels += out.noise.pixels;
    out.sigma = std::sqrt(map.values.square().mean());
    out.sigma_map = map;
    return out;
}

SigmaMap make_variant_map(Index height, Index width, double low, double high, std::uint64_t seed) {
    if (!(low >= 0.0) || !(low <= high) || !std::isfinite(high)) {
        throw std::invalid_argument("make_variant_map: need 0 <= low <= high, got (" + std::to_string(low) + ", " +
                                    std::to_string(high) + ")");
    }
    if (height < 1 || width < 1) {
        throw std::invalid_argument("make_variant_map: empty map");
    }
    constexpr Index grid = 8;
    Rng rng(seed);
    Eigen::ArrayXXd coarse(grid, grid);
    for (Index i = 0; i < grid; ++i) {
        for (Index j = 0; j < grid; ++j) {
            coarse(i, j) = rng.uniform(low, high);
        }
    }
    SigmaMap map{height, width, Eigen::ArrayXd(height * width)};
    auto coord = [](Index i, Index n) { return n == 1 ? 0.0 : static_cast<double>(i) * (grid - 1) / double(n - 1); };
    for (Index y = 0; y < height; ++y) {
        const double gy = coord(y, height);
        const Index y0 = std::min<Index>(static_cast<Index>(gy), grid - 2);
        const double fy = gy - y0;
        for (Index x = 0; x < width; ++x) {
            const double gx = coord(x, width);
            const Index x0 = std::min<Index>(static_cast<Index>(gx), grid - 2);
            const double fx = gx - x0;
            const double top = (1 - fx) * coarse(y0, x0) + fx * coarse(y0, x0 + 1);
            const double bot = (1 - fx) * coarse(y0 + 1, x0) + fx * coarse(y0 + 1, x0 + 1);
            // Convex combination; the clamp only absorbs rounding.
            map.values[y * width + x] = std::clamp((1 - fy) * top + fy * bot, low, high);
        }
    }
    return map;
}

double sample_sigma(Rng& rng, double low, double high) {
    if (!(low < high)) {
        throw std::invalid_argument("sample_sigma: empty range");
    }
    return low + (high - low) * rng.uniform_open_closed();
}

NoisyPair synthesize_noise(const Image& x, const NoiseSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case NoiseSpec::Kind::uniform:
            return add_awgn(x, spec.sigma, spec.seed);
        case NoiseSpec::Kind::variant:
            return add_variant_awgn(x, make_variant_map(x.height, x.width, spec.sigma_low, spec.sigma_high,
                                                        derive_seed(spec.seed, 1)),
                                    derive_seed(spec.seed, 2));
        case NoiseSpec::Kind::blind: {
            Rng rng(derive_seed(spec.seed, 1));
            return add_awgn(x, sample_sigma(rng, spec.sigma_low, spec.sigma_high), derive_seed(spec.seed, 2));
        }
    }
    throw std::invalid_argument("unknown noise kind");
}

Image crop(const Image& img, Index top, Index left, Index height, Index width) {
    if (top < 0 || left < 0 || top + height > img.height || left + width > img.width) {
        throw std::invalid_argument("crop: window outside image");
    }
    Image out(img.channels, height, width);
    for (Index c = 0; c < img.channels; ++c) {
        for (Index y = 0; y < height; ++y) {
            for (Index x = 0; x < width; ++x) {
                out.at(c, y, x) = img.at(c, top + y, left + x);
            }
        }
    }
    return out;
}

std::vector<CropPair> crop_patches(const Image& x, const Image& y, Index size, Index count, std::uint64_t seed,
                                   Index multiple, const SigmaMap* map) {
    if (!x.same_shape(y)) {
        throw std::invalid_argument("crop_patches: clean and noisy images differ in shape");
    }
    if (size < 1 || size > std::min(x.height, x.width)) {
        throw std::invalid_argument("crop_patches: crop size " + std::to_string(size) + " exceeds image " +
                                    std::to_string(x.height) + "x" + std::to_string(x.width));
    }
    if (multiple < 1 || size % multiple != 0) {
        throw std::invalid_argument("crop_patches: crop size " + std::to_string(size) + " must be a multiple of " +
                                    std::to_string(multiple) + " (try " + std::to_string(size - size % multiple) +
                                    ")");
    }
    Rng rng(seed);
    std::vector<CropPair> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i) {
        CropPair pair;
        pair.top = static_cast<Index>(rng.below(static_cast<std::uint64_t>(x.height - size + 1)));
        pair.left = static_cast<Index>(rng.below(static_cast<std::uint64_t>(x.width - size + 1)));
        pair.clean = crop(x, pair.top, pair.left, size, size);
        pair.noisy = crop(y, pair.top, pair.left, size, size);
        if (map != nullptr) {
            SigmaMap m{size, size, Eigen::ArrayXd(size * size)};
            for (Index r = 0; r < size; ++r) {
                for (Index c = 0; c < size; ++c) {
                    m.values[r * size + c] = map->at(pair.top + r, pair.left + c);
                }
            }
            pair.sigma_map = std::move(m);
        }
        out.push_back(std::move(pair));
    }
    return out;
}

}  // namespace fino
