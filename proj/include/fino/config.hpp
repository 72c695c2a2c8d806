// Flat key=value configuration files and the training configuration they
// describe.
#ifndef FINO_CONFIG_HPP
#define FINO_CONFIG_HPP

#include "fino/flow.hpp"
#include "fino/objective.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fino {

/// Ordered key=value pairs. '#' starts a comment; blank lines are ignored.
class KeyValues {
public:
    static KeyValues parse(const std::string& text, const std::string& origin = "<string>");
    static KeyValues load(const std::string& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    void set(const std::string& key, std::string value);

    /// Keys never read through get()/get_or().
    std::vector<std::string> unused_keys() const;

    std::string to_string() const;
    const std::map<std::string, std::string>& items() const { return values_; }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
    mutable std::set<std::string> used_;
};

double parse_double(const std::string& text, const std::string& what);
long long parse_int(const std::string& text, const std::string& what);
std::uint64_t parse_u64(const std::string& text, const std::string& what);
bool parse_bool(const std::string& text, const std::string& what);
/// "lo,hi" -> pair.
std::pair<double, double> parse_range(const std::string& text, const std::string& what);

enum class NoiseMode { fixed_sigma, blind, real };

struct TrainConfig {
    FlowConfig flow;
    LossWeights weights;
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    Index lr_decay_every = 0;  // 0 disables the step decay
    double lr_decay_factor = 0.5;
    Index patch_size = 32;
    Index batch_size = 4;
    Index steps = 2000;
    NoiseMode mode = NoiseMode::fixed_sigma;
    double sigma = 25.0 / 255.0;  // [0, 1] scale
    double sigma_low = 0.0;
    double sigma_high = 55.0 / 255.0;
    Index patch_edge = 4;
    Index patch_stride = 2;
    bool joint_channel_patches = false;
    std::uint64_t seed = 1;
    Index eval_every = 250;
    std::string checkpoint_path;
    std::string log_path;
    // Data source: a directory of images, or the toy generator when empty.
    std::string train_dir;
    Index toy_images = 16;
    Index toy_size = 32;
    Index holdout_images = 4;
    std::uint64_t data_seed = 2024;
    bool use_f32 = false;

    void validate() const;

    /// Reads the documented keys; unknown keys are rejected. Noise levels in
    /// the file (sigma, sigma_range) use the 0-255 convention.
    static TrainConfig from_key_values(const KeyValues& kv);
    KeyValues to_key_values() const;
};

}  // namespace fino

#endif  // FINO_CONFIG_HPP
