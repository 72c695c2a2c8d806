#include "fino/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fino {

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string exact(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) {
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        if (kv.has(key)) {
            throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
        }
        kv.set(key, trim(line.substr(eq + 1)));
    }
    return kv;
}

KeyValues KeyValues::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw std::runtime_error("cannot open config " + path);
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
}

const std::string& KeyValues::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw std::runtime_error("missing config key '" + key + "'");
    }
    used_.insert(key);
    return it->second;
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
    return has(key) ? get(key) : fallback;
}

void KeyValues::set(const std::string& key, std::string value) {
    if (!has(key)) order_.push_back(key);
    values_[key] = std::move(value);
}

std::vector<std::string> KeyValues::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& key : order_) {
        if (!used_.count(key)) out.push_back(key);
    }
    return out;
}

std::string KeyValues::to_string() const {
    std::string out;
    for (const auto& key : order_) {
        out += key + "=" + values_.at(key) + "\n";
    }
    return out;
}

double parse_double(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw std::runtime_error("'" + what + "': not a number: '" + text + "'");
}

long long parse_int(const std::string& text, const std::string& what) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::runtime_error("'" + what + "': not an integer: '" + text + "'");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw std::runtime_error("'" + what + "': not an unsigned integer: '" + text + "'");
    }
    return v;
}

bool parse_bool(const std::string& text, const std::string& what) {
    if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "off" || text == "no") return false;
    throw std::runtime_error("'" + what + "': not a boolean: '" + text + "'");
}

std::pair<double, double> parse_range(const std::string& text, const std::string& what) {
    const auto comma = text.find(',');
    if (comma == std::string::npos) {
        throw std::runtime_error("'" + what + "': expected lo,hi but got '" + text + "'");
    }
    return {parse_double(trim(text.substr(0, comma)), what), parse_double(trim(text.substr(comma + 1)), what)};
}

void TrainConfig::validate() const {
    flow.validate();
    weights.validate();
    if (steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (patch_size < 1 || patch_size % flow.spatial_multiple() != 0) {
        throw std::invalid_argument("patch_size " + std::to_string(patch_size) + " must be a positive multiple of " +
                                    std::to_string(flow.spatial_multiple()));
    }
    if (!(lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
        throw std::invalid_argument("invalid optimizer settings");
    }
    if (lr_decay_every < 0 || !(lr_decay_factor > 0.0)) {
        throw std::invalid_argument("invalid learning-rate decay settings");
    }
    if (mode == NoiseMode::fixed_sigma && !(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
    if (mode == NoiseMode::blind && !(sigma_low >= 0.0 && sigma_low < sigma_high)) {
        throw std::invalid_argument("sigma_range must satisfy 0 <= lo < hi");
    }
    if (patch_edge < 1 || patch_stride < 1) throw std::invalid_argument("patch_edge and patch_stride must be >= 1");
    if (eval_every < 0) throw std::invalid_argument("eval_every must be >= 0");
    if (train_dir.empty() && (toy_images < 1 || toy_size < patch_size)) {
        throw std::invalid_argument("toy dataset needs >= 1 image of size >= patch_size");
    }
    if (holdout_images < 0) throw std::invalid_argument("holdout_images must be >= 0");
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
    TrainConfig c;
    auto num = [&](const char* key, auto& field) {
        if (!kv.has(key)) return;
        using T = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<T, double>) {
            field = parse_double(kv.get(key), key);
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            field = parse_u64(kv.get(key), key);
        } else if constexpr (std::is_same_v<T, bool>) {
            field = parse_bool(kv.get(key), key);
        } else {
            field = static_cast<T>(parse_int(kv.get(key), key));
        }
    };
    num("channels", c.flow.input_channels);
    num("blocks", c.flow.num_blocks);
    num("layers", c.flow.layers_per_block);
    num("hidden_width", c.flow.hidden_width);
    num("scale_clamp", c.flow.scale_clamp);
    num("clean_fraction", c.flow.clean_fraction);
    num("alpha", c.weights.alpha);
    num("beta", c.weights.beta);
    num("gamma", c.weights.gamma);
    num("use_rec", c.weights.use_rec);
    num("use_cnt", c.weights.use_cnt);
    num("use_noise", c.weights.use_noise);
    num("lr", c.lr);
    num("beta1", c.beta1);
    num("beta2", c.beta2);
    num("epsilon", c.epsilon);
    num("lr_decay_every", c.lr_decay_every);
    num("lr_decay_factor", c.lr_decay_factor);
    num("patch_size", c.patch_size);
    num("batch_size", c.batch_size);
    num("steps", c.steps);
    num("patch_edge", c.patch_edge);
    num("patch_stride", c.patch_stride);
    num("joint_channel_patches", c.joint_channel_patches);
    num("seed", c.seed);
    num("eval_every", c.eval_every);
    num("toy_images", c.toy_images);
    num("toy_size", c.toy_size);
    num("holdout_images", c.holdout_images);
    num("data_seed", c.data_seed);
    if (kv.has("mode")) {
        const std::string& m = kv.get("mode");
        if (m == "fixed") c.mode = NoiseMode::fixed_sigma;
        else if (m == "blind") c.mode = NoiseMode::blind;
        else if (m == "real") c.mode = NoiseMode::real;
        else throw std::runtime_error("'mode': expected fixed, blind or real but got '" + m + "'");
    }
    if (c.mode == NoiseMode::real) {
        c.weights.use_noise = false;
    }
    if (kv.has("sigma")) c.sigma = parse_double(kv.get("sigma"), "sigma") / 255.0;
    if (kv.has("sigma_range")) {
        const auto [lo, hi] = parse_range(kv.get("sigma_range"), "sigma_range");
        c.sigma_low = lo / 255.0;
        c.sigma_high = hi / 255.0;
    }
    if (kv.has("dtype")) {
        const std::string& d = kv.get("dtype");
        if (d != "f64" && d != "f32") throw std::runtime_error("'dtype': expected f64 or f32 but got '" + d + "'");
        c.use_f32 = d == "f32";
    }
    c.checkpoint_path = kv.get_or("checkpoint", "");
    c.log_path = kv.get_or("log", "");
    c.train_dir = kv.get_or("train_dir", "");
    const auto unused = kv.unused_keys();
    if (!unused.empty()) {
        std::string list;
        for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
        throw std::runtime_error("unknown config key(s): " + list);
    }
    c.validate();
    return c;
}

KeyValues TrainConfig::to_key_values() const {
    KeyValues kv;
    kv.set("channels", std::to_string(flow.input_channels));
    kv.set("blocks", std::to_string(flow.num_blocks));
    kv.set("layers", std::to_string(flow.layers_per_block));
    kv.set("hidden_width", std::to_string(flow.hidden_width));
    kv.set("scale_clamp", exact(flow.scale_clamp));
    kv.set("clean_fraction", exact(flow.clean_fraction));
    kv.set("alpha", exact(weights.alpha));
    kv.set("beta", exact(weights.beta));
    kv.set("gamma", exact(weights.gamma));
    kv.set("use_rec", weights.use_rec ? "true" : "false");
    kv.set("use_cnt", weights.use_cnt ? "true" : "false");
    kv.set("use_noise", weights.use_noise ? "true" : "false");
    kv.set("lr", exact(lr));
    kv.set("beta1", exact(beta1));
    kv.set("beta2", exact(beta2));
    kv.set("epsilon", exact(epsilon));
    kv.set("lr_decay_every", std::to_string(lr_decay_every));
    kv.set("lr_decay_factor", exact(lr_decay_factor));
    kv.set("patch_size", std::to_string(patch_size));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("steps", std::to_string(steps));
    kv.set("mode", mode == NoiseMode::fixed_sigma ? "fixed" : mode == NoiseMode::blind ? "blind" : "real");
    kv.set("sigma", exact(sigma * 255.0));
    kv.set("sigma_range", exact(sigma_low * 255.0) + "," + exact(sigma_high * 255.0));
    kv.set("patch_edge", std::to_string(patch_edge));
    kv.set("patch_stride", std::to_string(patch_stride));
    kv.set("joint_channel_patches", joint_channel_patches ? "true" : "false");
    kv.set("seed", std::to_string(seed));
    kv.set("eval_every", std::to_string(eval_every));
    kv.set("toy_images", std::to_string(toy_images));
    kv.set("toy_size", std::to_string(toy_size));
    kv.set("holdout_images", std::to_string(holdout_images));
    kv.set("data_seed", std::to_string(data_seed));
    kv.set("dtype", use_f32 ? "f32" : "f64");
    if (!checkpoint_path.empty()) kv.set("checkpoint", checkpoint_path);
    if (!log_path.empty()) kv.set("log", log_path);
    if (!train_dir.empty()) kv.set("train_dir", train_dir);
    return kv;
}

}  // namespace fino
