// Noise synthesis for supervised pairs y = x + n, and aligned random crops.
#ifndef FINO_NOISE_HPP
#define FINO_NOISE_HPP

#include "fino/image.hpp"
#include "fino/random.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace fino {

/// The 0-255 noise level convention used on the command line, mapped to [0, 1].
constexpr double sigma_from_8bit(double sigma255) { return sigma255 / 255.0; }

/// Per-pixel standard deviation map, H x W row-major.
struct SigmaMap {
    Index height = 0;
    Index width = 0;
    Eigen::ArrayXd values;

    double at(Index y, Index x) const { return values[y * width + x]; }
};

struct NoiseSpec {
    enum class Kind { uniform, variant, blind };

    Kind kind = Kind::uniform;
    double sigma = 25.0 / 255.0;  // uniform
    double sigma_low = 0.0;       // variant: map bounds; blind: open lower end
    double sigma_high = 55.0 / 255.0;
    std::uint64_t seed = 0;

    static NoiseSpec uniform(double sigma, std::uint64_t seed) { return {Kind::uniform, sigma, 0.0, 0.0, seed}; }
    static NoiseSpec variant(double low, double high, std::uint64_t seed) {
        return {Kind::variant, 0.0, low, high, seed};
    }
    static NoiseSpec blind(double low, double high, std::uint64_t seed) { return {Kind::blind, 0.0, low, high, seed}; }

    void validate() const;
};

struct NoisyPair {
    Image noisy;  // y = x + n, unclipped
    Image noise;  // n
    /// Scalar level for the correlation penalty: sigma itself (uniform), the
    /// sampled sigma (blind) or the RMS of the map (variant).
    double sigma = 0.0;
    std::optional<SigmaMap> sigma_map;
};

/// n ~ N(0, sigma^2 I) from `seed`; sigma is on the [0, 1] scale.
NoisyPair add_awgn(const Image& x, double sigma, std::uint64_t seed);

/// n = map (.) g with g ~ N(0, I); the map is shared by all channels.
NoisyPair add_variant_awgn(const Image& x, const SigmaMap& map, std::uint64_t seed);

/// Smooth map in [low, high]: an 8 x 8 grid of uniform draws, bilinearly
/// upsampled with the grid corners on the image corners.
SigmaMap make_variant_map(Index height, Index width, double low, double high, std::uint64_t seed);

/// Uniform draw on (low, high].
double sample_sigma(Rng& rng, double low, double high);

/// Dispatches on spec.kind; every draw comes from spec.seed.
NoisyPair synthesize_noise(const Image& x, const NoiseSpec& spec);

struct CropPair {
    Image clean;
    Image noisy;
    std::optional<SigmaMap> sigma_map;
    Index top = 0;
    Index left = 0;
};

/// `count` aligned size x size crops of (x, y[, map]). `multiple` is the
/// divisibility the flow requires (2^B).
std::vector<CropPair> crop_patches(const Image& x, const Image& y, Index size, Index count, std::uint64_t seed,
                                   Index multiple = 1, const SigmaMap* map = nullptr);

/// Single crop of one image at a known origin.
Image crop(const Image& img, Index top, Index left, Index height, Index width);

}  // namespace fino

#endif  // FINO_NOISE_HPP
