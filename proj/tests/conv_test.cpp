#include "fino/conv.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fino;
using fino::testing::max_relative_error;
using fino::testing::numeric_grad;
using fino::testing::random_tensor;

namespace {

// Direct cross-correlation with zero padding.
TensorD naive_conv(const TensorD& in, const TensorD& w, const TensorD& b, Index pad) {
    const Index n = in.dim(0), ci = in.dim(1), h = in.dim(2), wd = in.dim(3);
    const Index co = w.dim(0), k = w.dim(2);
    const Index oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
    Array<double> out = Array<double>::Zero(n * co * oh * ow);
    for (Index bn = 0; bn < n; ++bn)
        for (Index o = 0; o < co; ++o)
            for (Index y = 0; y < oh; ++y)
                for (Index x = 0; x < ow; ++x) {
                    double acc = b.at({o});
                    for (Index c = 0; c < ci; ++c)
                        for (Index ky = 0; ky < k; ++ky)
                            for (Index kx = 0; kx < k; ++kx) {
                                const Index iy = y + ky - pad, ix = x + kx - pad;
                                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) {
                                    acc += in.at({bn, c, iy, ix}) * w.at({o, c, ky, kx});
                                }
                            }
                    out[((bn * co + o) * oh + y) * ow + x] = acc;
                }
    return TensorD({n, co, oh, ow}, out);
}

}  // namespace

TEST(Conv2dTest, OneByOneScales) {
    auto out = conv2d(TensorD::ones({1, 1, 3, 3}), TensorD::from({1, 1, 1, 1}, {2}), TensorD::from({1}, {0}), 0);
    EXPECT_EQ(out.shape(), (Shape{1, 1, 3, 3}));
    EXPECT_TRUE((out.value() == 2.0).all());
}

TEST(Conv2dTest, SingleContributingTap) {
    auto out = conv2d(TensorD::from({1, 1, 1, 1}, {5}), TensorD::ones({1, 1, 3, 3}), TensorD::from({1}, {1}), 1);
    EXPECT_EQ(out.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_DOUBLE_EQ(out.item(), 6.0);
}

TEST(Conv2dTest, MatchesNaiveLoops) {
    auto in = random_tensor({1, 2, 4, 4}, 1);
    auto w = random_tensor({3, 2, 3, 3}, 2);
    auto b = random_tensor({3}, 3);
    auto fast = conv2d(in, w, b, 1);
    auto slow = naive_conv(in, w, b, 1);
    ASSERT_EQ(fast.shape(), slow.shape());
    EXPECT_LT((fast.value() - slow.value()).abs().maxCoeff(), 1e-13);
}

TEST(Conv2dTest, MatchesNaiveLoopsBatched) {
    auto in = random_tensor({3, 2, 5, 6}, 4);
    auto w = random_tensor({4, 2, 3, 3}, 5);
    auto b = random_tensor({4}, 6);
    EXPECT_LT((conv2d(in, w, b, 1).value() - naive_conv(in, w, b, 1).value()).abs().maxCoeff(), 1e-13);
}

TEST(Conv2dTest, GradientsMatchFiniteDifferences) {
    auto in = random_tensor({2, 2, 4, 4}, 7);
    auto w = random_tensor({3, 2, 3, 3}, 8);
    auto b = random_tensor({3}, 9);
    auto probe = random_tensor({2, 3, 4, 4}, 10);
    for (auto* t : {&in, &w, &b}) t->set_requires_grad(true);
    auto f = [&] { return sum(conv2d(in, w, b, 1) * probe); };
    backward(f());
    auto value = [&] { return f().item(); };
    EXPECT_LT(max_relative_error(in.grad(), numeric_grad(in, value)), 1e-5);
    EXPECT_LT(max_relative_error(w.grad(), numeric_grad(w, value)), 1e-5);
    EXPECT_LT(max_relative_error(b.grad(), numeric_grad(b, value)), 1e-5);
}

TEST(Conv2dTest, ShapeErrorsNameTheDimension) {
    try {
        conv2d(TensorD::zeros({1, 2, 4, 4}), TensorD::zeros({1, 3, 3, 3}), TensorD::zeros({1}), 1);
        FAIL() << "expected a channel mismatch";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
    }
    EXPECT_THROW(conv2d(TensorD::zeros({1, 1, 4, 4}), TensorD::zeros({1, 1, 2, 2}), TensorD::zeros({1}), 0),
                 std::invalid_argument);
    EXPECT_THROW(conv2d(TensorD::zeros({1, 1, 4, 4}), TensorD::zeros({2, 1, 3, 3}), TensorD::zeros({1}), 1),
                 std::invalid_argument);
    EXPECT_THROW(conv2d(TensorD::zeros({1, 4, 4}), TensorD::zeros({1, 1, 3, 3}), TensorD::zeros({1}), 1),
                 std::invalid_argument);
}

TEST(Conv2dTest, FloatPathAgreesWithDouble) {
    auto in = random_tensor({1, 2, 4, 4}, 11);
    auto w = random_tensor({2, 2, 3, 3}, 12);
    auto b = random_tensor({2}, 13);
    auto d = conv2d(in, w, b, 1);
    auto f = conv2d(cast<float>(in), cast<float>(w), cast<float>(b), 1);
    EXPECT_LT((d.value() - f.value().cast<double>()).abs().maxCoeff(), 1e-5);
}
