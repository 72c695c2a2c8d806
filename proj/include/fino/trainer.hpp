// Training pipeline: dual encoding, latent swapping, swapped decodes, loss
// assembly, one reverse pass and one ADAM update per step; plus checkpoints.
#ifndef FINO_TRAINER_HPP
#define FINO_TRAINER_HPP

#include "fino/adam.hpp"
#include "fino/config.hpp"
#include "fino/denoise.hpp"
#include "fino/flow.hpp"
#include "fino/image.hpp"
#include "fino/metrics.hpp"
#include "fino/noise.hpp"
#include "fino/objective.hpp"
#include "fino/tensor_io.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace fino {

struct TrainLogRecord {
    Index step = 0;
    double total_loss = 0.0;
    double l_reg = 0.0;
    double l_rec = 0.0;
    double l_cnt = 0.0;
    double l_noise = 0.0;
    std::optional<double> eval_psnr;
    double wall_ms = 0.0;
};

inline std::string log_header() { return "step,total_loss,l_reg,l_rec,l_cnt,l_noise,eval_psnr,wall_ms"; }

inline std::string to_csv(const TrainLogRecord& r) {
    std::ostringstream os;
    os << std::setprecision(17) << r.step << ',' << r.total_loss << ',' << r.l_reg << ',' << r.l_rec << ','
       << r.l_cnt << ',' << r.l_noise << ',';
    if (r.eval_psnr) os << *r.eval_psnr;
    os << ',' << std::setprecision(6) << r.wall_ms;
    return os.str();
}

/// Aligned supervision for one step; sigma holds each item's noise level.
template <typename Scalar>
struct Batch {
    Tensor<Scalar> x;
    Tensor<Scalar> y;
    Tensor<Scalar> n;
    std::vector<double> sigma;
};

struct PatchSettings {
    Index edge = 4;
    Index stride = 2;
    bool joint_channels = false;
};

/// Every intermediate of one evaluation of the objective.
template <typename Scalar>
struct ForwardPass {
    LatentCode<Scalar> zx, zy;
    Tensor<Scalar> y_hat, x_hat, n_hat, y_tilde;
    LossParts<Scalar> parts;
    Tensor<Scalar> total;
};

/// Builds the full objective for one batch. `z_r` fills the noise code of the
/// regression decode and must match the shape of z_n.
template <typename Scalar>
ForwardPass<Scalar> compute_objective(const FlowModel<Scalar>& model, const Batch<Scalar>& batch,
                                      const Tensor<Scalar>& z_r, const LossWeights& weights,
                                      const PatchSettings& patches = {}) {
    if (batch.x.shape() != batch.y.shape() || batch.x.shape() != batch.n.shape()) {
        throw std::invalid_argument("compute_objective: x, y and n batches must share a shape");
    }
    if (weights.use_noise && static_cast<Index>(batch.sigma.size()) != batch.x.dim(0)) {
        throw std::invalid_argument("compute_objective: need one sigma per batch item");
    }
    ForwardPass<Scalar> f;
    f.zx = flow_forward(batch.x, model);
    f.zy = flow_forward(batch.y, model);
    const auto zc_x = f.zx.clean(), zc_y = f.zy.clean();

    f.y_tilde = flow_inverse(LatentCode<Scalar>::combine(zc_y, z_r), model);
    f.parts.reg = loss_reg(f.y_tilde, batch.x);

    if (weights.use_rec || weights.use_noise) {
        f.y_hat = flow_inverse(LatentCode<Scalar>::combine(zc_x, f.zy.noise()), model);
        f.n_hat = f.y_hat - batch.x;
    }
    if (weights.use_rec) {
        f.x_hat = flow_inverse(LatentCode<Scalar>::combine(zc_y, f.zx.noise()), model);
        f.parts.rec = loss_rec(f.n_hat, batch.n, f.x_hat, batch.x);
    }
    if (weights.use_cnt) {
        f.parts.cnt = loss_cnt(zc_x, zc_y);
    }
    if (weights.use_noise) {
        const Index items = batch.x.dim(0);
        Tensor<Scalar> acc;
        for (Index i = 0; i < items; ++i) {
            auto sigma_matrix = noise_correlation(
                extract_patches(batch_select(f.n_hat, i), patches.edge, patches.stride, patches.joint_channels));
            auto term = loss_noise(sigma_matrix, batch.sigma[static_cast<std::size_t>(i)]);
            acc = acc.defined() ? acc + term : term;
        }
        f.parts.noise = scale(acc, Scalar(1) / static_cast<Scalar>(items));
    }
    f.total = total_loss(f.parts, weights);
    return f;
}

struct StepResult {
    bool ok = false;
    std::string diagnostic;
    double total = 0.0, reg = 0.0, rec = 0.0, cnt = 0.0, noise = 0.0;
};

/// One optimization step. On a non-finite loss or gradient the step is
/// abandoned before the update, so the parameters are left untouched.
template <typename Scalar>
StepResult train_step(FlowModel<Scalar>& model, AdamState<Scalar>& adam, const Batch<Scalar>& batch,
                      const Tensor<Scalar>& z_r, const LossWeights& weights, const PatchSettings& patches = {}) {
    StepResult r;
    auto params = model.parameters();
    for (auto& p : params) p.zero_grad();
    try {
        auto f = compute_objective(model, batch, z_r, weights, patches);
        auto value = [](const Tensor<Scalar>& t) { return t.defined() ? static_cast<double>(t.item()) : 0.0; };
        r.total = value(f.total);
        r.reg = value(f.parts.reg);
        r.rec = value(f.parts.rec);
        r.cnt = value(f.parts.cnt);
        r.noise = value(f.parts.noise);
        if (!std::isfinite(r.total)) {
            throw std::domain_error("loss is not finite");
        }
        backward(f.total);
        adam_step(params, adam);
        r.ok = true;
    } catch (const std::domain_error& e) {
        r.ok = false;
        r.diagnostic = std::string("step aborted: ") + e.what();
    }
    return r;
}

/// Standard-normal tensor from `seed`.
template <typename Scalar>
Tensor<Scalar> normal_tensor(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    Array<Scalar> v(numel(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<Scalar>(rng.normal());
    return Tensor<Scalar>(shape, std::move(v));
}

/// Shape of z_n for a batch of `items` images of size h x w.
inline Shape noise_code_shape(const FlowConfig& cfg, Index items, Index h, Index w) {
    const Index m = cfg.spatial_multiple();
    return {items, cfg.latent_channels() - cfg.clean_channels(), h / m, w / m};
}

// ---------------------------------------------------------------------------
// Checkpoints: a text manifest terminated by "end_manifest", then raw tensor
// dumps for the parameters, the first moments and the second moments.

inline constexpr int kCheckpointVersion = 1;

template <typename Scalar>
struct Checkpoint {
    FlowModel<Scalar> model;
    AdamState<Scalar> adam;
    Index step = 0;
    KeyValues manifest;
};

template <typename Scalar>
void save_checkpoint(const std::string& path, const FlowModel<Scalar>& model, const AdamState<Scalar>& adam,
                     Index step, const KeyValues& config_echo = {}) {
    const auto& cfg = model.config();
    auto exact = [](double v) {
        std::ostringstream os;
        os << std::setprecision(17) << v;
        return os.str();
    };
    auto params = model.parameters();
    std::ostringstream manifest;
    manifest << "fino_checkpoint\n"
             << "format_version=" << kCheckpointVersion << "\n"
             << "channels=" << cfg.input_channels << "\n"
             << "blocks=" << cfg.num_blocks << "\n"
             << "layers=" << cfg.layers_per_block << "\n"
             << "hidden_width=" << cfg.hidden_width << "\n"
             << "kernel_size=" << cfg.kernel_size << "\n"
             << "scale_clamp=" << exact(cfg.scale_clamp) << "\n"
             << "clean_fraction=" << exact(cfg.clean_fraction) << "\n"
             << "clean_channels=" << cfg.clean_channels() << "\n"
             << "latent_split=head_clean\n"
             << "dtype=" << (dtype_of<Scalar>() == DType::f64 ? "f64" : "f32") << "\n"
             << "step=" << step << "\n"
             << "adam_steps=" << adam.step_count << "\n"
             << "adam_lr=" << exact(adam.lr) << "\n"
             << "adam_beta1=" << exact(adam.beta1) << "\n"
             << "adam_beta2=" << exact(adam.beta2) << "\n"
             << "adam_epsilon=" << exact(adam.epsilon) << "\n"
             << "has_moments=" << (adam.first_moment.empty() ? 0 : 1) << "\n"
             << "tensors=" << params.size() << "\n";
    for (const auto& [k, v] : config_echo.items()) {
        manifest << "config." << k << "=" << v << "\n";
    }
    manifest << "end_manifest\n";

    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot open checkpoint " + path + " for writing");
    }
    const std::string text = manifest.str();
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) write_tensor(os, p);
    if (!adam.first_moment.empty()) {
        for (const auto& m : adam.first_moment) write_tensor(os, Tensor<Scalar>({m.size()}, m));
        for (const auto& v : adam.second_moment) write_tensor(os, Tensor<Scalar>({v.size()}, v));
    }
    if (!os) {
        throw std::runtime_error("failed writing checkpoint " + path);
    }
}

/// Loads a checkpoint; when `expected` is given its architecture must match.
template <typename Scalar>
Checkpoint<Scalar> load_checkpoint(const std::string& path, const FlowConfig* expected = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    std::string line;
    if (!std::getline(is, line) || line != "fino_checkpoint") {
        throw std::runtime_error(path + ": not a checkpoint (bad first line)");
    }
    std::string text;
    bool terminated = false;
    while (std::getline(is, line)) {
        if (line == "end_manifest") {
            terminated = true;
            break;
        }
        text += line + "\n";
    }
    if (!terminated) {
        throw std::runtime_error(path + ": corrupt manifest (no end_manifest line)");
    }
    Checkpoint<Scalar> ck;
    try {
        ck.manifest = KeyValues::parse(text, path);
        const auto& kv = ck.manifest;
        const auto version = parse_int(kv.get("format_version"), "format_version");
        if (version != kCheckpointVersion) {
            throw std::runtime_error("format version " + std::to_string(version) + " is not supported (expected " +
                                     std::to_string(kCheckpointVersion) + ")");
        }
        FlowConfig cfg;
        cfg.input_channels = parse_int(kv.get("channels"), "channels");
        cfg.num_blocks = parse_int(kv.get("blocks"), "blocks");
        cfg.layers_per_block = parse_int(kv.get("layers"), "layers");
        cfg.hidden_width = parse_int(kv.get("hidden_width"), "hidden_width");
        cfg.kernel_size = parse_int(kv.get("kernel_size"), "kernel_size");
        cfg.scale_clamp = parse_double(kv.get("scale_clamp"), "scale_clamp");
        cfg.clean_fraction = parse_double(kv.get("clean_fraction"), "clean_fraction");
        if (parse_int(kv.get("clean_channels"), "clean_channels") != cfg.clean_channels()) {
            throw std::runtime_error("clean_channels disagrees with clean_fraction");
        }
        if (kv.get("latent_split") != "head_clean") {
            throw std::runtime_error("unknown latent_split '" + kv.get("latent_split") + "'");
        }
        if (expected != nullptr &&
            (expected->num_blocks != cfg.num_blocks || expected->layers_per_block != cfg.layers_per_block ||
             expected->input_channels != cfg.input_channels || expected->hidden_width != cfg.hidden_width ||
             expected->kernel_size != cfg.kernel_size)) {
            throw std::runtime_error("architecture mismatch: checkpoint has B=" + std::to_string(cfg.num_blocks) +
                                     " K=" + std::to_string(cfg.layers_per_block) +
                                     " width=" + std::to_string(cfg.hidden_width) + " channels=" +
                                     std::to_string(cfg.input_channels) + ", expected B=" +
                                     std::to_string(expected->num_blocks) + " K=" +
                                     std::to_string(expected->layers_per_block) + " width=" +
                                     std::to_string(expected->hidden_width) + " channels=" +
                                     std::to_string(expected->input_channels));
        }
        ck.step = parse_int(kv.get("step"), "step");
        ck.adam.step_count = parse_int(kv.get("adam_steps"), "adam_steps");
        ck.adam.lr = parse_double(kv.get("adam_lr"), "adam_lr");
        ck.adam.beta1 = parse_double(kv.get("adam_beta1"), "adam_beta1");
        ck.adam.beta2 = parse_double(kv.get("adam_beta2"), "adam_beta2");
        ck.adam.epsilon = parse_double(kv.get("adam_epsilon"), "adam_epsilon");
        const bool moments = parse_bool(kv.get("has_moments"), "has_moments");

        ck.model = FlowModel<Scalar>(cfg);
        const auto count = parse_int(kv.get("tensors"), "tensors");
        auto params = ck.model.parameters();
        if (count != static_cast<long long>(params.size())) {
            throw std::runtime_error("manifest lists " + std::to_string(count) + " tensors, architecture needs " +
                                     std::to_string(params.size()));
        }
        for (auto& p : params) {
            auto t = read_tensor<Scalar>(is);
            if (t.shape() != p.shape()) {
                throw std::runtime_error("tensor " + p.name() + " has shape " + to_string(t.shape()) + ", expected " +
                                         to_string(p.shape()));
            }
            p.mutable_value() = t.value();
        }
        if (moments) {
            for (auto* slot : {&ck.adam.first_moment, &ck.adam.second_moment}) {
                for (const auto& p : params) {
                    auto t = read_tensor<Scalar>(is);
                    if (t.size() != p.size()) {
                        throw std::runtime_error("optimizer moment for " + p.name() + " has the wrong size");
                    }
                    slot->push_back(t.value());
                }
            }
        }
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return ck;
}

// ---------------------------------------------------------------------------

/// Stateful training loop. Batch contents at step t depend only on
/// (cfg.seed, t), which makes interrupted and resumed runs reproduce a
/// continuous one exactly.
template <typename Scalar>
class Trainer {
public:
    Trainer(TrainConfig cfg, std::vector<Image> train_set, std::vector<Image> holdout = {})
        : cfg_(std::move(cfg)), train_(std::move(train_set)), holdout_(std::move(holdout)), model_(cfg_.flow) {
        cfg_.validate();
        if (train_.empty()) {
            throw std::invalid_argument("training set is empty");
        }
        for (const auto& img : train_) {
            if (img.channels != cfg_.flow.input_channels || img.height < cfg_.patch_size ||
                img.width < cfg_.patch_size) {
                throw std::invalid_argument("training image does not fit the config (channels " +
                                            std::to_string(img.channels) + ", size " + std::to_string(img.height) +
                                            "x" + std::to_string(img.width) + ")");
            }
        }
        model_.initialize(InitMode::identity, derive_seed(cfg_.seed, kInitStream));
        reset_optimizer();
        make_holdout_pairs();
    }

    const TrainConfig& config() const { return cfg_; }
    FlowModel<Scalar>& model() { return model_; }
    const FlowModel<Scalar>& model() const { return model_; }
    AdamState<Scalar>& optimizer() { return adam_; }
    Index step() const { return step_; }

    void set_diagnostics(std::ostream* os) { diag_ = os; }

    /// Real-noise mode: aligned noisy partners of the training images replace
    /// synthesized noise, and n = y - x.
    void set_noisy_partners(std::vector<Image> noisy) {
        if (noisy.size() != train_.size()) {
            throw std::invalid_argument("need one noisy partner per training image");
        }
        for (std::size_t i = 0; i < noisy.size(); ++i) {
            if (!noisy[i].same_shape(train_[i])) {
                throw std::invalid_argument("noisy partner " + std::to_string(i) + " differs in shape");
            }
        }
        noisy_ = std::move(noisy);
    }

    /// Aligned batch for step t: image choice, crop origin, sigma, noise.
    Batch<Scalar> make_batch(Index t) const {
        Rng rng(derive_seed(cfg_.seed, kBatchStream + static_cast<std::uint64_t>(t)));
        std::vector<Image> xs, ys, ns;
        Batch<Scalar> b;
        for (Index i = 0; i < cfg_.batch_size; ++i) {
            const auto index = static_cast<std::size_t>(rng.below(train_.size()));
            const Image& src = train_[index];
            const Index top = static_cast<Index>(rng.below(static_cast<std::uint64_t>(src.height - cfg_.patch_size + 1)));
            const Index left = static_cast<Index>(rng.below(static_cast<std::uint64_t>(src.width - cfg_.patch_size + 1)));
            const double sigma = cfg_.mode == NoiseMode::blind ? sample_sigma(rng, cfg_.sigma_low, cfg_.sigma_high)
                                                               : cfg_.sigma;
            Image x = crop(src, top, left, cfg_.patch_size, cfg_.patch_size);
            const std::uint64_t noise_seed = rng.below(UINT64_MAX);
            if (noisy_.empty()) {
                auto noisy = add_awgn(x, sigma, noise_seed);
                ys.push_back(std::move(noisy.noisy));
                ns.push_back(std::move(noisy.noise));
                b.sigma.push_back(sigma);
            } else {
                Image y = crop(noisy_[index], top, left, cfg_.patch_size, cfg_.patch_size);
                Image n = y;
                n.pixels -= x.pixels;
                ys.push_back(std::move(y));
                ns.push_back(std::move(n));
                b.sigma.push_back(std::sqrt(ns.back().pixels.square().mean()));
            }
            xs.push_back(std::move(x));
        }
        b.x = stack_images<Scalar>(xs);
        b.y = stack_images<Scalar>(ys);
        b.n = stack_images<Scalar>(ns);
        return b;
    }

    Tensor<Scalar> make_z_r(Index t) const {
        return normal_tensor<Scalar>(noise_code_shape(cfg_.flow, cfg_.batch_size, cfg_.patch_size, cfg_.patch_size),
                                     derive_seed(cfg_.seed, kLatentStream + static_cast<std::uint64_t>(t)));
    }

    /// Runs one step at the current position and advances it.
    std::optional<TrainLogRecord> step_once() {
        const auto start = std::chrono::steady_clock::now();
        const Index t = step_;
        if (cfg_.lr_decay_every > 0) {
            adam_.lr = cfg_.lr * std::pow(cfg_.lr_decay_factor, static_cast<double>(t / cfg_.lr_decay_every));
        }
        const auto batch = make_batch(t);
        const auto z_r = make_z_r(t);
        const auto r = train_step(model_, adam_, batch, z_r, cfg_.weights,
                                  PatchSettings{cfg_.patch_edge, cfg_.patch_stride, cfg_.joint_channel_patches});
        ++step_;
        if (!r.ok) {
            if (diag_) *diag_ << "step " << t << ": " << r.diagnostic << "\n";
            return std::nullopt;
        }
        TrainLogRecord rec;
        rec.step = t;
        rec.total_loss = r.total;
        rec.l_reg = r.reg;
        rec.l_rec = r.rec;
        rec.l_cnt = r.cnt;
        rec.l_noise = r.noise;
        if (cfg_.eval_every > 0 && step_ % cfg_.eval_every == 0) {
            rec.eval_psnr = evaluate();
            if (!cfg_.checkpoint_path.empty()) save(cfg_.checkpoint_path);
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return rec;
    }

    /// Steps until `cfg.steps` (or `until` when given); calls `sink` per record.
    std::vector<TrainLogRecord> run(std::optional<Index> until = std::nullopt,
                                    const std::function<void(const TrainLogRecord&)>& sink = {}) {
        const Index last = until.value_or(cfg_.steps);
        std::vector<TrainLogRecord> log;
        while (step_ < last) {
            if (auto rec = step_once()) {
                if (sink) sink(*rec);
                log.push_back(*rec);
            }
        }
        return log;
    }

    /// Mean held-out PSNR of zero-mode denoising; NaN without a held-out set.
    double evaluate() const {
        if (holdout_pairs_.empty()) return std::numeric_limits<double>::quiet_NaN();
        double total = 0.0;
        for (const auto& [clean, noisy] : holdout_pairs_) {
            total += psnr(denoise(model_, noisy, DenoiseOptions{}), clean);
        }
        return total / static_cast<double>(holdout_pairs_.size());
    }

    /// Mean PSNR of the noisy held-out inputs themselves.
    double noisy_baseline() const {
        double total = 0.0;
        for (const auto& [clean, noisy] : holdout_pairs_) total += psnr(noisy, clean);
        return holdout_pairs_.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : total / static_cast<double>(holdout_pairs_.size());
    }

    const std::vector<std::pair<Image, Image>>& holdout_pairs() const { return holdout_pairs_; }

    void save(const std::string& path) const { save_checkpoint(path, model_, adam_, step_, cfg_.to_key_values()); }

    /// Restores model, optimizer and step from a checkpoint of this architecture.
    void resume(const std::string& path) {
        auto ck = load_checkpoint<Scalar>(path, &cfg_.flow);
        model_ = std::move(ck.model);
        adam_ = std::move(ck.adam);
        step_ = ck.step;
    }

private:
    static constexpr std::uint64_t kInitStream = 1;
    static constexpr std::uint64_t kHoldoutStream = 2;
    static constexpr std::uint64_t kBatchStream = 1ULL << 32;
    static constexpr std::uint64_t kLatentStream = 1ULL << 48;

    void reset_optimizer() {
        adam_ = AdamState<Scalar>{};
        adam_.lr = cfg_.lr;
        adam_.beta1 = cfg_.beta1;
        adam_.beta2 = cfg_.beta2;
        adam_.epsilon = cfg_.epsilon;
        adam_.reset(model_.parameters());
    }

    void make_holdout_pairs() {
        for (std::size_t i = 0; i < holdout_.size(); ++i) {
            auto noisy = add_awgn(holdout_[i], cfg_.sigma,
                                  derive_seed(derive_seed(cfg_.seed, kHoldoutStream), static_cast<std::uint64_t>(i)));
            holdout_pairs_.emplace_back(holdout_[i], std::move(noisy.noisy));
        }
    }

    TrainConfig cfg_;
    std::vector<Image> train_;
    std::vector<Image> noisy_;
    std::vector<Image> holdout_;
    std::vector<std::pair<Image, Image>> holdout_pairs_;
    FlowModel<Scalar> model_;
    AdamState<Scalar> adam_;
    Index step_ = 0;
    std::ostream* diag_ = nullptr;
};

template <typename Scalar>
struct TrainResult {
    FlowModel<Scalar> model;
    std::vector<TrainLogRecord> log;
};

/// Full run from scratch.
template <typename Scalar>
TrainResult<Scalar> train(const std::vector<Image>& dataset, const TrainConfig& cfg,
                          const std::vector<Image>& holdout = {}) {
    Trainer<Scalar> trainer(cfg, dataset, holdout);
    auto log = trainer.run();
    return {trainer.model(), std::move(log)};
}

}  // namespace fino

#endif  // FINO_TRAINER_HPP
