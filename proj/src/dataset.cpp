#include "fino/dataset.hpp"

#include "fino/random.hpp"
#include "fino/toy_data.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

namespace fino {

namespace fs = std::filesystem;

std::vector<std::string> list_images(const std::string& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error(dir + ": not a directory");
    }
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".fnt") {
            out.push_back(entry.path().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::vector<Image> load_all(const std::vector<std::string>& paths) {
    std::vector<Image> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(load_image(p));
    return out;
}

void split_holdout(std::vector<Image>& train, std::vector<Image>& holdout, Index count, const std::string& dir) {
    if (static_cast<Index>(train.size()) <= count) {
        throw std::runtime_error(dir + ": " + std::to_string(train.size()) + " images cannot spare " +
                                 std::to_string(count) + " for evaluation");
    }
    holdout.assign(train.end() - count, train.end());
    train.resize(train.size() - static_cast<std::size_t>(count));
}

}  // namespace

TrainingData load_training_data(const TrainConfig& cfg) {
    TrainingData data;
    const Index channels = cfg.flow.input_channels;
    if (cfg.train_dir.empty()) {
        if (cfg.mode == NoiseMode::real) {
            throw std::runtime_error("real-noise mode needs train_dir with clean/ and noisy/ subdirectories");
        }
        data.train = make_toy_dataset(cfg.toy_images, cfg.toy_size, cfg.data_seed, channels);
        data.holdout = make_toy_dataset(cfg.holdout_images, cfg.toy_size, derive_seed(cfg.data_seed, 1), channels);
        return data;
    }
    if (cfg.mode == NoiseMode::real) {
        const auto clean_dir = (fs::path(cfg.train_dir) / "clean").string();
        const auto noisy_dir = (fs::path(cfg.train_dir) / "noisy").string();
        const auto clean = list_images(clean_dir);
        for (const auto& p : clean) {
            const auto partner = fs::path(noisy_dir) / fs::path(p).filename();
            if (!fs::exists(partner)) {
                throw std::runtime_error(partner.string() + ": missing noisy partner of " + p);
            }
            data.train.push_back(load_image(p));
            data.train_noisy.push_back(load_image(partner.string()));
            if (!data.train.back().same_shape(data.train_noisy.back())) {
                throw std::runtime_error(partner.string() + ": shape differs from " + p);
            }
        }
        if (data.train.empty()) {
            throw std::runtime_error(clean_dir + ": no images");
        }
        return data;
    }
    data.train = load_all(list_images(cfg.train_dir));
    if (data.train.empty()) {
        throw std::runtime_error(cfg.train_dir + ": no images");
    }
    if (cfg.holdout_images > 0) split_holdout(data.train, data.holdout, cfg.holdout_images, cfg.train_dir);
    return data;
}

}  // namespace fino
