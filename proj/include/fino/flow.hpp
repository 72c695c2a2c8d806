// The invertible network: per block a Haar squeeze followed by K affine
// coupling layers, and the clean/noise partition of the resulting latent.
#ifndef FINO_FLOW_HPP
#define FINO_FLOW_HPP

#include "fino/conv.hpp"
#include "fino/haar.hpp"
#include "fino/random.hpp"
#include "fino/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace fino {

struct FlowConfig {
    Index input_channels = 1;
    Index num_blocks = 2;
    Index layers_per_block = 4;
    Index hidden_width = 16;
    Index kernel_size = 3;
    /// Soft clamp c in s = exp(c * tanh(v / c)).
    double scale_clamp = 2.0;
    /// Fraction of latent channels assigned to the clean code.
    double clean_fraction = 0.75;

    Index latent_channels() const {
        Index c = input_channels;
        for (Index b = 0; b < num_blocks; ++b) c *= 4;
        return c;
    }
    Index clean_channels() const { return static_cast<Index>(std::lround(clean_fraction * latent_channels())); }
    Index spatial_multiple() const { return Index{1} << num_blocks; }
    Index block_channels(Index block) const {
        Index c = input_channels * 4;
        for (Index b = 0; b < block; ++b) c *= 4;
        return c;
    }

    void validate() const {
        if (input_channels < 1 || num_blocks < 1 || layers_per_block < 0 || hidden_width < 1) {
            throw std::invalid_argument("flow config needs channels >= 1, blocks >= 1, layers >= 0, width >= 1");
        }
        if (kernel_size < 1 || kernel_size % 2 == 0) {
            throw std::invalid_argument("flow config: kernel size must be odd");
        }
        if (!(scale_clamp > 0.0) || !std::isfinite(scale_clamp)) {
            throw std::invalid_argument("flow config: scale clamp must be positive");
        }
        const Index clean = clean_channels();
        if (clean <= 0 || clean >= latent_channels()) {
            throw std::invalid_argument("flow config: clean channel count " + std::to_string(clean) +
                                        " must lie strictly inside (0, " + std::to_string(latent_channels()) + ")");
        }
    }
};

template <typename Scalar>
struct ConvLayer {
    Tensor<Scalar> weight;
    Tensor<Scalar> bias;

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return conv2d(x, weight, bias, weight.dim(2) / 2); }
};

/// conv -> ReLU -> conv -> ReLU -> conv, spatial size preserved.
template <typename Scalar>
struct Subnet {
    std::array<ConvLayer<Scalar>, 3> layers;

    Tensor<Scalar> operator()(const Tensor<Scalar>& x) const {
        return layers[2](relu(layers[1](relu(layers[0](x)))));
    }
};

template <typename Scalar>
struct CouplingParams {
    Subnet<Scalar> phi1;  // h -> shift of l
    Subnet<Scalar> phi2;  // l' -> scale pre-activation for h
    Subnet<Scalar> phi3;  // l' -> shift of h
    Index split_point = 0;
    double scale_clamp = 2.0;
};

/// s = exp(c * tanh(v / c)), every element within [e^-c, e^c].
template <typename Scalar>
Tensor<Scalar> positive_scale(const Tensor<Scalar>& pre, double clamp) {
    const auto c = static_cast<Scalar>(clamp);
    return exp(scale(tanh(scale(pre, Scalar(1) / c)), c));
}

template <typename Scalar>
Tensor<Scalar> coupling_forward(const Tensor<Scalar>& u, const CouplingParams<Scalar>& p) {
    auto [l, h] = channel_split(u, p.split_point);
    auto l_next = l + p.phi1(h);
    auto s = positive_scale(p.phi2(l_next), p.scale_clamp);
    auto h_next = s * h + p.phi3(l_next);
    return channel_concat(l_next, h_next);
}

template <typename Scalar>
Tensor<Scalar> coupling_inverse(const Tensor<Scalar>& u_next, const CouplingParams<Scalar>& p) {
    auto [l_next, h_next] = channel_split(u_next, p.split_point);
    auto s = positive_scale(p.phi2(l_next), p.scale_clamp);
    auto h = (h_next - p.phi3(l_next)) / s;
    auto l = l_next - p.phi1(h);
    return channel_concat(l, h);
}

/// Latent z = [z_c | z_n]; the clean code is the leading `clean_channels`.
template <typename Scalar>
struct LatentCode {
    Tensor<Scalar> z;
    Index clean_channels = 0;

    Index channels() const { return z.dim(1); }
    Tensor<Scalar> clean() const { return channel_slice(z, 0, clean_channels); }
    Tensor<Scalar> noise() const { return channel_slice(z, clean_channels, channels() - clean_channels); }

    static LatentCode combine(const Tensor<Scalar>& clean, const Tensor<Scalar>& noise) {
        return {channel_concat(clean, noise), clean.dim(1)};
    }
};

/// (z_c^a | z_n^b, z_c^b | z_n^a).
template <typename Scalar>
std::pair<LatentCode<Scalar>, LatentCode<Scalar>> latent_swap(const LatentCode<Scalar>& a,
                                                              const LatentCode<Scalar>& b) {
    if (a.z.shape() != b.z.shape() || a.clean_channels != b.clean_channels) {
        throw std::invalid_argument("latent_swap: codes differ in shape " + to_string(a.z.shape()) + " vs " +
                                    to_string(b.z.shape()) + " or clean split " + std::to_string(a.clean_channels) +
                                    " vs " + std::to_string(b.clean_channels));
    }
    auto a_clean = a.clean(), a_noise = a.noise();
    auto b_clean = b.clean(), b_noise = b.noise();
    return {LatentCode<Scalar>::combine(a_clean, b_noise), LatentCode<Scalar>::combine(b_clean, a_noise)};
}

enum class InitMode {
    identity,  // final conv of every subnet zeroed: each coupling starts as the identity
    random,    // every layer random; used for invertibility and gradient audits
};

template <typename Scalar>
class FlowModel {
public:
    FlowModel() = default;

    explicit FlowModel(FlowConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        blocks_.resize(static_cast<std::size_t>(cfg_.num_blocks));
        for (Index b = 0; b < cfg_.num_blocks; ++b) {
            const Index c = cfg_.block_channels(b);
            const Index l = (c + 1) / 2;
            const Index h = c - l;
            for (Index k = 0; k < cfg_.layers_per_block; ++k) {
                CouplingParams<Scalar> p;
                p.split_point = l;
                p.scale_clamp = cfg_.scale_clamp;
                p.phi1 = make_subnet(h, l);
                p.phi2 = make_subnet(l, h);
                p.phi3 = make_subnet(l, h);
                blocks_[static_cast<std::size_t>(b)].push_back(std::move(p));
            }
        }
        name_parameters();
    }

    // Copies are deep: the copy owns fresh parameter leaves.
    FlowModel(const FlowModel& other) : cfg_(other.cfg_), blocks_(other.blocks_) {
        for_each_parameter([](const std::string&, Tensor<Scalar>& t) {
            const bool rg = t.requires_grad();
            const std::string name = t.name();
            t = t.detach();
            t.set_requires_grad(rg).set_name(name);
        });
    }
    FlowModel& operator=(const FlowModel& other) {
        if (this != &other) {
            FlowModel copy(other);
            *this = std::move(copy);
        }
        return *this;
    }
    FlowModel(FlowModel&&) noexcept = default;
    FlowModel& operator=(FlowModel&&) noexcept = default;

    const FlowConfig& config() const { return cfg_; }
    const std::vector<std::vector<CouplingParams<Scalar>>>& blocks() const { return blocks_; }
    std::vector<std::vector<CouplingParams<Scalar>>>& blocks() { return blocks_; }

    /// Visits every parameter leaf in canonical order with its stable name.
    template <typename Fn>
    void for_each_parameter(Fn&& fn) {
        static constexpr const char* phi_names[3] = {"phi1", "phi2", "phi3"};
        for (std::size_t b = 0; b < blocks_.size(); ++b) {
            for (std::size_t k = 0; k < blocks_[b].size(); ++k) {
                auto& p = blocks_[b][k];
                Subnet<Scalar>* subnets[3] = {&p.phi1, &p.phi2, &p.phi3};
                for (int s = 0; s < 3; ++s) {
                    for (std::size_t i = 0; i < 3; ++i) {
                        const std::string base = "block" + std::to_string(b) + ".layer" + std::to_string(k) + "." +
                                                 phi_names[s] + ".conv" + std::to_string(i);
                        fn(base + ".weight", subnets[s]->layers[i].weight);
                        fn(base + ".bias", subnets[s]->layers[i].bias);
                    }
                }
            }
        }
    }

    /// Handles onto the parameter leaves (shared, not copied).
    std::vector<Tensor<Scalar>> parameters() {
        std::vector<Tensor<Scalar>> out;
        for_each_parameter([&](const std::string&, Tensor<Scalar>& t) { out.push_back(t); });
        return out;
    }
    std::vector<Tensor<Scalar>> parameters() const { return const_cast<FlowModel*>(this)->parameters(); }

    Index parameter_count() const {
        Index n = 0;
        for (const auto& t : parameters()) n += t.size();
        return n;
    }

    void zero_grad() {
        for_each_parameter([](const std::string&, Tensor<Scalar>& t) { t.zero_grad(); });
    }

    void initialize(InitMode mode, std::uint64_t seed, double final_scale = 0.1) {
        Rng rng(seed);
        for (auto& block : blocks_) {
            for (auto& p : block) {
                for (Subnet<Scalar>* net : {&p.phi1, &p.phi2, &p.phi3}) {
                    for (std::size_t i = 0; i < 3; ++i) {
                        auto& layer = net->layers[i];
                        const Index fan_in = layer.weight.dim(1) * layer.weight.dim(2) * layer.weight.dim(3);
                        const bool last = i == 2;
                        double std_w = std::sqrt(2.0 / static_cast<double>(fan_in));
                        double std_b = 0.0;
                        if (last) {
                            std_w = mode == InitMode::identity ? 0.0 : final_scale / std::sqrt(double(fan_in));
                            std_b = mode == InitMode::identity ? 0.0 : final_scale;
                        } else if (mode == InitMode::random) {
                            std_b = 0.1;
                        }
                        fill_normal(layer.weight, rng, std_w);
                        fill_normal(layer.bias, rng, std_b);
                    }
                }
            }
        }
    }

    /// Throws with a padding hint unless H and W are multiples of 2^B and C matches.
    void check_input(const Tensor<Scalar>& x) const {
        if (x.rank() != 4) {
            throw std::invalid_argument("flow input must be N x C x H x W, got " + to_string(x.shape()));
        }
        if (x.dim(1) != cfg_.input_channels) {
            throw std::invalid_argument("flow input has " + std::to_string(x.dim(1)) + " channels, model expects " +
                                        std::to_string(cfg_.input_channels));
        }
        const Index m = cfg_.spatial_multiple();
        if (x.dim(2) % m != 0 || x.dim(3) % m != 0) {
            const Index ph = (m - x.dim(2) % m) % m, pw = (m - x.dim(3) % m) % m;
            throw std::invalid_argument("flow input " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                                        " is not divisible by " + std::to_string(m) + "; pad by " +
                                        std::to_string(ph) + " rows and " + std::to_string(pw) + " columns");
        }
    }

private:
    Subnet<Scalar> make_subnet(Index in, Index out) const {
        const Index w = cfg_.hidden_width, k = cfg_.kernel_size;
        Subnet<Scalar> net;
        net.layers[0] = {Tensor<Scalar>::zeros({w, in, k, k}), Tensor<Scalar>::zeros({w})};
        net.layers[1] = {Tensor<Scalar>::zeros({w, w, k, k}), Tensor<Scalar>::zeros({w})};
        net.layers[2] = {Tensor<Scalar>::zeros({out, w, k, k}), Tensor<Scalar>::zeros({out})};
        return net;
    }

    void name_parameters() {
        for_each_parameter([](const std::string& name, Tensor<Scalar>& t) { t.set_requires_grad(true).set_name(name); });
    }

    static void fill_normal(Tensor<Scalar>& t, Rng& rng, double stddev) {
        auto& v = t.mutable_value();
        for (Index i = 0; i < v.size(); ++i) {
            v[i] = static_cast<Scalar>(stddev * rng.normal());
        }
    }

    FlowConfig cfg_;
    std::vector<std::vector<CouplingParams<Scalar>>> blocks_;
};

/// z = Flow(x): per block a Haar squeeze, then the coupling stack.
template <typename Scalar>
LatentCode<Scalar> flow_forward(const Tensor<Scalar>& x, const FlowModel<Scalar>& model) {
    model.check_input(x);
    Tensor<Scalar> u = x;
    for (const auto& block : model.blocks()) {
        u = haar_forward(u);
        for (const auto& layer : block) {
            u = coupling_forward(u, layer);
        }
    }
    return {u, model.config().clean_channels()};
}

template <typename Scalar>
Tensor<Scalar> flow_inverse(const LatentCode<Scalar>& code, const FlowModel<Scalar>& model) {
    const auto& cfg = model.config();
    if (code.z.rank() != 4 || code.z.dim(1) != cfg.latent_channels()) {
        throw std::invalid_argument("flow_inverse: latent " + to_string(code.z.shape()) + " does not have the " +
                                    std::to_string(cfg.latent_channels()) + " channels this model produces");
    }
    if (code.clean_channels != cfg.clean_channels()) {
        throw std::invalid_argument("flow_inverse: latent clean split " + std::to_string(code.clean_channels) +
                                    " differs from the model's " + std::to_string(cfg.clean_channels()));
    }
    Tensor<Scalar> u = code.z;
    const auto& blocks = model.blocks();
    for (auto b = blocks.rbegin(); b != blocks.rend(); ++b) {
        for (auto layer = b->rbegin(); layer != b->rend(); ++layer) {
            u = coupling_inverse(u, *layer);
        }
        u = haar_inverse(u);
    }
    return u;
}

}  // namespace fino

#endif  // FINO_FLOW_HPP
