// Synthetic training corpus: piecewise-constant shapes over a linear ramp
// with a faint sinusoidal texture.
#ifndef FINO_TOY_DATA_HPP
#define FINO_TOY_DATA_HPP

#include "fino/image.hpp"

#include <cstdint>
#include <vector>

namespace fino {

/// Image i depends only on (seed, i). Values are clamped to [0, 1].
std::vector<Image> make_toy_dataset(Index n_images, Index size, std::uint64_t seed, Index channels = 1);

}  // namespace fino

#endif  // FINO_TOY_DATA_HPP
