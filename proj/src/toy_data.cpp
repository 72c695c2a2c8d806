#include "fino/toy_data.hpp"

#include "fino/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fino {

namespace {

Image make_one(Index size, Index channels, std::uint64_t seed) {
    Rng rng(seed);
    Image img(channels, size, size);
    const double s = static_cast<double>(size);

    // Per-channel tint keeps colour images correlated across channels.
    std::vector<double> tint(static_cast<std::size_t>(channels));
    for (auto& t : tint) t = rng.uniform(0.8, 1.2);

    const double base = rng.uniform(0.2, 0.6);
    const double gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);
    for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
            const double v = base + gx * (x / s - 0.5) + gy * (y / s - 0.5);
            for (Index c = 0; c < channels; ++c) img.at(c, y, x) = v * tint[static_cast<std::size_t>(c)];
        }
    }

    const int shapes = 2 + static_cast<int>(rng.below(3));
    for (int k = 0; k < shapes; ++k) {
        const double level = rng.uniform(0.05, 0.95);
        const bool disc = rng.uniform() < 0.5;
        const double cy = rng.uniform(0, s), cx = rng.uniform(0, s);
        const double ry = rng.uniform(0.12, 0.35) * s, rx = rng.uniform(0.12, 0.35) * s;
        for (Index y = 0; y < size; ++y) {
            for (Index x = 0; x < size; ++x) {
                const double dy = (y - cy) / ry, dx = (x - cx) / rx;
                const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
                if (inside) {
                    for (Index c = 0; c < channels; ++c) img.at(c, y, x) = level * tint[static_cast<std::size_t>(c)];
                }
            }
        }
    }

    const double amp = rng.uniform(0.02, 0.08);
    const double fy = rng.uniform(0.5, 3.0), fx = rng.uniform(0.5, 3.0);
    const double phase = rng.uniform(0, 2 * std::numbers::pi);
    for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
            const double t = amp * std::sin(2 * std::numbers::pi * (fy * y + fx * x) / s + phase);
            for (Index c = 0; c < channels; ++c) img.at(c, y, x) = std::clamp(img.at(c, y, x) + t, 0.0, 1.0);
        }
    }
    return img;
}

}  // namespace

std::vector<Image> make_toy_dataset(Index n_images, Index size, std::uint64_t seed, Index channels) {
    if (n_images < 0 || size < 1 || (channels != 1 && channels != 3)) {
        throw std::invalid_argument("make_toy_dataset: need n >= 0, size >= 1 and 1 or 3 channels");
    }
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(n_images));
    for (Index i = 0; i < n_images; ++i) {
        out.push_back(make_one(size, channels, derive_seed(seed, static_cast<std::uint64_t>(i))));
    }
    return out;
}

}  // namespace fino
