// Training and held-out image sets: a directory of images or the toy
// generator, and directory listing for the command line tools.
#ifndef FINO_DATASET_HPP
#define FINO_DATASET_HPP

#include "fino/config.hpp"
#include "fino/image.hpp"

#include <string>
#include <vector>

namespace fino {

/// Image files (.pgm, .ppm, .pnm, .fnt) directly inside `dir`, sorted by name.
std::vector<std::string> list_images(const std::string& dir);

struct TrainingData {
    std::vector<Image> train;
    /// Aligned noisy counterparts of `train` (real-noise mode only).
    std::vector<Image> train_noisy;
    std::vector<Image> holdout;
};

/// Toy mode: cfg.toy_images training images and cfg.holdout_images held-out
/// images from disjoint seed streams. Directory mode: every image in
/// cfg.train_dir, the last holdout_images of them held out. Real-noise mode
/// reads train_dir/clean and train_dir/noisy, paired by file name.
TrainingData load_training_data(const TrainConfig& cfg);

}  // namespace fino

#endif  // FINO_DATASET_HPP
