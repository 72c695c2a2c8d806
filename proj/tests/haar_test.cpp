#include "fino/haar.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fino;
using fino::testing::random_tensor;

TEST(HaarTest, ConstantBlockHasNoDetail) {
    auto u = haar_forward(TensorD::ones({1, 1, 2, 2}));
    ASSERT_EQ(u.shape(), (Shape{1, 4, 1, 1}));
    EXPECT_DOUBLE_EQ(u.value()[0], 2.0);
    EXPECT_DOUBLE_EQ(u.value()[1], 0.0);
    EXPECT_DOUBLE_EQ(u.value()[2], 0.0);
    EXPECT_DOUBLE_EQ(u.value()[3], 0.0);
}

TEST(HaarTest, ImpulseSpreadsEvenly) {
    auto u = haar_forward(TensorD::from({1, 1, 2, 2}, {1, 0, 0, 0}));
    for (Index k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(u.value()[k], 0.5);
}

TEST(HaarTest, CoefficientOrderingAndChannelLayout) {
    // Two channels; the second block is [[a, b], [c, d]] = [[1, 2], [3, 4]].
    auto u = haar_forward(TensorD::from({1, 2, 2, 2}, {0, 0, 0, 0, 1, 2, 3, 4}));
    ASSERT_EQ(u.shape(), (Shape{1, 8, 1, 1}));
    // low-pass of channels 0,1 then detail groups, each with C channels
    const std::vector<double> expected{0, 5, 0, -1, 0, -2, 0, 0};
    for (Index k = 0; k < 8; ++k) EXPECT_DOUBLE_EQ(u.value()[k], expected[static_cast<std::size_t>(k)]) << k;
}

TEST(HaarTest, InverseOfConstantCoefficient) {
    auto x = haar_inverse(TensorD::from({1, 4, 1, 1}, {2, 0, 0, 0}));
    ASSERT_EQ(x.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_TRUE((x.value() == 1.0).all());
}

TEST(HaarTest, EnergyIsPreserved) {
    auto x = random_tensor({1, 3, 8, 8}, 1);
    const double before = x.value().square().sum();
    const double after = haar_forward(x).value().square().sum();
    EXPECT_LT(std::abs(before - after) / before, 1e-12);
}

TEST(HaarTest, RoundTripsInBothDirections) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = random_tensor({2, 3, 8, 6}, seed);
        EXPECT_LT((haar_inverse(haar_forward(x)).value() - x.value()).abs().maxCoeff(), 1e-12);
        auto u = random_tensor({2, 12, 3, 5}, seed + 100);
        EXPECT_LT((haar_forward(haar_inverse(u)).value() - u.value()).abs().maxCoeff(), 1e-12);
    }
}

TEST(HaarTest, RejectsBadShapes) {
    EXPECT_THROW(haar_forward(TensorD::zeros({1, 1, 3, 4})), std::invalid_argument);
    EXPECT_THROW(haar_forward(TensorD::zeros({1, 1, 4, 5})), std::invalid_argument);
    EXPECT_THROW(haar_inverse(TensorD::zeros({1, 6, 2, 2})), std::invalid_argument);
}

TEST(HaarTest, GradientsAreTheAdjoint) {
    auto x = random_tensor({1, 2, 4, 4}, 3);
    auto probe = random_tensor({1, 8, 2, 2}, 4);
    x.set_requires_grad(true);
    backward(sum(haar_forward(x) * probe));
    auto value = [&] { return sum(haar_forward(x) * probe).item(); };
    EXPECT_LT(fino::testing::max_relative_error(x.grad(), fino::testing::numeric_grad(x, value)), 1e-5);

    auto u = random_tensor({1, 8, 2, 2}, 5);
    auto probe2 = random_tensor({1, 2, 4, 4}, 6);
    u.set_requires_grad(true);
    backward(sum(haar_inverse(u) * probe2));
    auto value2 = [&] { return sum(haar_inverse(u) * probe2).item(); };
    EXPECT_LT(fino::testing::max_relative_error(u.grad(), fino::testing::numeric_grad(u, value2)), 1e-5);
}
