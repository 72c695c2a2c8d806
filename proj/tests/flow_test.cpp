#include "fino/flow.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fino;
using fino::testing::random_tensor;

namespace {

FlowModel<double> make_model(Index channels, Index blocks, Index layers, InitMode mode, std::uint64_t seed,
                             Index width = 8) {
    FlowConfig cfg;
    cfg.input_channels = channels;
    cfg.num_blocks = blocks;
    cfg.layers_per_block = layers;
    cfg.hidden_width = width;
    FlowModel<double> m(cfg);
    m.initialize(mode, seed);
    return m;
}

double max_abs_diff(const TensorD& a, const TensorD& b) { return (a.value() - b.value()).abs().maxCoeff(); }

// Subnet whose output is the constant `c` regardless of input.
Subnet<double> constant_subnet(Index in, Index out, double c) {
    Subnet<double> net;
    net.layers[0] = {TensorD::zeros({2, in, 3, 3}), TensorD::zeros({2})};
    net.layers[1] = {TensorD::zeros({2, 2, 3, 3}), TensorD::zeros({2})};
    net.layers[2] = {TensorD::zeros({out, 2, 3, 3}), TensorD::full({out}, c)};
    return net;
}

}  // namespace

TEST(CouplingTest, IdentityCoupling) {
    CouplingParams<double> p;
    p.split_point = 2;
    p.phi1 = constant_subnet(2, 2, 0.0);
    p.phi2 = constant_subnet(2, 2, 0.0);
    p.phi3 = constant_subnet(2, 2, 0.0);
    auto u = random_tensor({1, 4, 3, 3}, 1);
    EXPECT_EQ(max_abs_diff(coupling_forward(u, p), u), 0.0);
    EXPECT_EQ(max_abs_diff(coupling_inverse(u, p), u), 0.0);
}

TEST(CouplingTest, HandEvaluation) {
    // phi1 = 3, scale 2, phi3 = 1: (l, h) = (1, 2) -> (4, 5).
    const double clamp = 2.0;
    const double pre = clamp * std::atanh(std::log(2.0) / clamp);
    CouplingParams<double> p;
    p.split_point = 1;
    p.scale_clamp = clamp;
    p.phi1 = constant_subnet(1, 1, 3.0);
    p.phi2 = constant_subnet(1, 1, pre);
    p.phi3 = constant_subnet(1, 1, 1.0);
    auto out = coupling_forward(TensorD::from({1, 2, 1, 1}, {1, 2}), p);
    EXPECT_NEAR(out.value()[0], 4.0, 1e-14);
    EXPECT_NEAR(out.value()[1], 5.0, 1e-14);
    auto back = coupling_inverse(TensorD::from({1, 2, 1, 1}, {4, 5}), p);
    EXPECT_NEAR(back.value()[0], 1.0, 1e-14);
    EXPECT_NEAR(back.value()[1], 2.0, 1e-14);
}

TEST(CouplingTest, ScaleStaysInsideClamp) {
    auto s = positive_scale(TensorD::from({4}, {-100, -1, 1, 100}), 2.0);
    EXPECT_TRUE((s.value() >= std::exp(-2.0) - 1e-15).all());
    EXPECT_TRUE((s.value() <= std::exp(2.0) + 1e-15).all());
    EXPECT_NEAR(positive_scale(TensorD::from({1}, {0.0}), 2.0).item(), 1.0, 0.0);
}

TEST(CouplingTest, RandomRoundTrip) {
    auto m = make_model(1, 1, 1, InitMode::random, 3);
    const auto& p = m.blocks()[0][0];
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto u = random_tensor({2, 4, 4, 4}, seed);
        EXPECT_LT(max_abs_diff(coupling_inverse(coupling_forward(u, p), p), u), 1e-10);
    }
}

TEST(FlowTest, LatentShapeArithmetic) {
    auto m = make_model(3, 2, 2, InitMode::identity, 1);
    auto z = flow_forward(random_tensor({1, 3, 16, 16}, 2), m);
    EXPECT_EQ(z.z.shape(), (Shape{1, 48, 4, 4}));
    EXPECT_EQ(z.clean_channels, 36);
    auto x = flow_inverse(z, m);
    EXPECT_EQ(x.shape(), (Shape{1, 3, 16, 16}));
}

TEST(FlowTest, DegenerateModelIsHaar) {
    auto m = make_model(2, 1, 0, InitMode::random, 1);
    auto x = random_tensor({1, 2, 8, 8}, 3);
    EXPECT_EQ(max_abs_diff(flow_forward(x, m).z, haar_forward(x)), 0.0);
}

TEST(FlowTest, IdentityInitIsPureWaveletAnalysis) {
    auto m = make_model(1, 2, 3, InitMode::identity, 4);
    auto x = random_tensor({2, 1, 8, 8}, 5);
    EXPECT_EQ(max_abs_diff(flow_forward(x, m).z, haar_forward(haar_forward(x))), 0.0);
    LatentCode<double> zero{TensorD::zeros({1, 16, 2, 2}), 12};
    EXPECT_TRUE((flow_inverse(zero, m).value() == 0.0).all());
}

TEST(FlowTest, RoundTripRandomModel) {
    auto m = make_model(3, 2, 4, InitMode::random, 6);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto x = random_tensor({1, 3, 16, 16}, seed);
        EXPECT_LT(max_abs_diff(flow_inverse(flow_forward(x, m), m), x), 1e-9);
        LatentCode<double> z{random_tensor({1, 48, 4, 4}, seed + 10), 36};
        EXPECT_LT(max_abs_diff(flow_forward(flow_inverse(z, m), m).z, z.z), 1e-9);
    }
}

// Property: random architectures, parameters and inputs all invert.
TEST(FlowTest, BijectivityProperty) {
    Rng rng(77);
    for (int trial = 0; trial < 12; ++trial) {
        const Index channels = rng.uniform() < 0.5 ? 1 : 3;
        const Index blocks = 1 + static_cast<Index>(rng.below(2));
        const Index layers = static_cast<Index>(rng.below(4));
        auto m = make_model(channels, blocks, layers, InitMode::random, rng.below(1000), 4);
        const Index size = 4 * (1 + static_cast<Index>(rng.below(3)));
        auto x = random_tensor({2, channels, size, size}, rng.below(1000), 0.5);
        EXPECT_LT(max_abs_diff(flow_inverse(flow_forward(x, m), m), x), 1e-9) << "trial " << trial;
    }
}

TEST(FlowTest, RejectsIndivisibleInputWithHint) {
    auto m = make_model(1, 2, 1, InitMode::identity, 1);
    try {
        flow_forward(TensorD::zeros({1, 1, 10, 12}), m);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("pad by 2 rows"), std::string::npos) << e.what();
    }
    EXPECT_THROW(flow_forward(TensorD::zeros({1, 3, 8, 8}), m), std::invalid_argument);
    EXPECT_THROW(flow_inverse(LatentCode<double>{TensorD::zeros({1, 8, 2, 2}), 6}, m), std::invalid_argument);
}

TEST(FlowTest, CopiesAreDeep) {
    auto m = make_model(1, 1, 1, InitMode::random, 2);
    FlowModel<double> copy = m;
    copy.parameters()[0].mutable_value()[0] += 1.0;
    EXPECT_NE(copy.parameters()[0].value()[0], m.parameters()[0].value()[0]);
    EXPECT_EQ(copy.parameters()[1].name(), m.parameters()[1].name());
    EXPECT_TRUE(copy.parameters()[1].requires_grad());
}

TEST(FlowTest, ParameterNamesAreStable) {
    auto m = make_model(1, 2, 2, InitMode::identity, 1);
    auto params = m.parameters();
    EXPECT_EQ(params.size(), 2u * 2u * 3u * 6u);
    EXPECT_EQ(params.front().name(), "block0.layer0.phi1.conv0.weight");
    EXPECT_EQ(params.back().name(), "block1.layer1.phi3.conv2.bias");
}

TEST(LatentSwapTest, SelfSwapAndInvolution) {
    LatentCode<double> a{random_tensor({2, 16, 2, 2}, 1), 12};
    LatentCode<double> b{random_tensor({2, 16, 2, 2}, 2), 12};
    auto [s1, s2] = latent_swap(a, a);
    EXPECT_TRUE((s1.z.value() == a.z.value()).all());
    EXPECT_TRUE((s2.z.value() == a.z.value()).all());
    auto [ab, ba] = latent_swap(a, b);
    auto [a2, b2] = latent_swap(ab, ba);
    EXPECT_TRUE((a2.z.value() == a.z.value()).all());
    EXPECT_TRUE((b2.z.value() == b.z.value()).all());
    // clean of a, noise of b
    EXPECT_TRUE((ab.clean().value() == a.clean().value()).all());
    EXPECT_TRUE((ab.noise().value() == b.noise().value()).all());
}

TEST(LatentSwapTest, SelfSwapDecodeReproducesInput) {
    auto m = make_model(1, 2, 2, InitMode::random, 3);
    auto x = random_tensor({1, 1, 8, 8}, 4);
    auto zx = flow_forward(x, m);
    EXPECT_LT(max_abs_diff(flow_inverse(latent_swap(zx, zx).first, m), x), 1e-9);
}

TEST(LatentSwapTest, RejectsMismatch) {
    LatentCode<double> a{TensorD::zeros({1, 16, 2, 2}), 12};
    LatentCode<double> b{TensorD::zeros({1, 16, 2, 4}), 12};
    LatentCode<double> c{TensorD::zeros({1, 16, 2, 2}), 8};
    EXPECT_THROW(latent_swap(a, b), std::invalid_argument);
    EXPECT_THROW(latent_swap(a, c), std::invalid_argument);
}

TEST(FlowTest, FloatModelRoundTrip) {
    FlowConfig cfg;
    cfg.hidden_width = 4;
    FlowModel<float> m(cfg);
    m.initialize(InitMode::random, 9);
    auto x = cast<float>(random_tensor({1, 1, 8, 8}, 10));
    // Relaxed for 32-bit storage.
    EXPECT_LT((flow_inverse(flow_forward(x, m), m).value() - x.value()).abs().maxCoeff(), 1e-4f);
}
