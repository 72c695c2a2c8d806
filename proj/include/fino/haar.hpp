// Orthonormal 2x2 Haar analysis/synthesis used as the squeeze step of each
// flow block. For the block [[a, b], [c, d]] the four coefficients are
//   (a+b+c+d)/2, (a-b+c-d)/2, (a+b-c-d)/2, (a-b-c+d)/2
// and the output stacks all C low-pass channels first, then the three detail
// groups of C channels each.
#ifndef FINO_HAAR_HPP
#define FINO_HAAR_HPP

#include "fino/tensor.hpp"

namespace fino {

namespace detail {

template <typename Scalar>
void haar_analysis(const Scalar* x, Scalar* u, Index n, Index c, Index h, Index w) {
    const Index oh = h / 2, ow = w / 2, oplane = oh * ow;
    const Scalar half(0.5);
    for (Index b = 0; b < n; ++b) {
        for (Index ch = 0; ch < c; ++ch) {
            const Scalar* src = x + (b * c + ch) * h * w;
            Scalar* band[4];
            for (Index k = 0; k < 4; ++k) band[k] = u + (b * 4 * c + k * c + ch) * oplane;
            for (Index i = 0; i < oh; ++i) {
                const Scalar* top = src + 2 * i * w;
                const Scalar* bot = top + w;
                for (Index j = 0; j < ow; ++j) {
                    const Scalar a = top[2 * j], bb = top[2 * j + 1], cc = bot[2 * j], d = bot[2 * j + 1];
                    const Index o = i * ow + j;
                    band[0][o] = half * (a + bb + cc + d);
                    band[1][o] = half * (a - bb + cc - d);
                    band[2][o] = half * (a + bb - cc - d);
                    band[3][o] = half * (a - bb - cc + d);
                }
            }
        }
    }
}

// Synthesis with u holding 4c channels of size h x w; x receives c x 2h x 2w.
template <typename Scalar>
void haar_synthesis(const Scalar* u, Scalar* x, Index n, Index c, Index h, Index w) {
    const Index plane = h * w, ow = 2 * w;
    const Scalar half(0.5);
    for (Index b = 0; b < n; ++b) {
        for (Index ch = 0; ch < c; ++ch) {
            const Scalar* band[4];
            for (Index k = 0; k < 4; ++k) band[k] = u + (b * 4 * c + k * c + ch) * plane;
            Scalar* dst = x + (b * c + ch) * 4 * plane;
            for (Index i = 0; i < h; ++i) {
                Scalar* top = dst + 2 * i * ow;
                Scalar* bot = top + ow;
                for (Index j = 0; j < w; ++j) {
                    const Index o = i * w + j;
                    const Scalar s = band[0][o], p = band[1][o], q = band[2][o], r = band[3][o];
                    top[2 * j] = half * (s + p + q + r);
                    top[2 * j + 1] = half * (s - p + q - r);
                    bot[2 * j] = half * (s + p - q - r);
                    bot[2 * j + 1] = half * (s - p - q + r);
                }
            }
        }
    }
}

}  // namespace detail

/// N x C x H x W -> N x 4C x H/2 x W/2. The transform is orthogonal, so its
/// adjoint (used for the gradient) is the synthesis step.
template <typename Scalar>
Tensor<Scalar> haar_forward(const Tensor<Scalar>& x) {
    if (x.rank() != 4) {
        throw std::invalid_argument("haar_forward: expected N x C x H x W, got " + to_string(x.shape()));
    }
    const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::invalid_argument("haar_forward: spatial extent " + std::to_string(h) + "x" + std::to_string(w) +
                                    " must be even in both dimensions");
    }
    Array<Scalar> u(x.size());
    detail::haar_analysis(x.data(), u.data(), n, c, h, w);
    return Tensor<Scalar>::make_op(
        {n, 4 * c, h / 2, w / 2}, std::move(u), {x},
        [=](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            Array<Scalar> back(g.size());
            detail::haar_synthesis(g.data(), back.data(), n, c, h / 2, w / 2);
            *pg[0] += back;
        },
        "haar_forward");
}

/// N x 4C x H x W -> N x C x 2H x 2W; exact inverse of haar_forward.
template <typename Scalar>
Tensor<Scalar> haar_inverse(const Tensor<Scalar>& u) {
    if (u.rank() != 4) {
        throw std::invalid_argument("haar_inverse: expected N x 4C x H x W, got " + to_string(u.shape()));
    }
    const Index n = u.dim(0), c4 = u.dim(1), h = u.dim(2), w = u.dim(3);
    if (c4 % 4 != 0) {
        throw std::invalid_argument("haar_inverse: channel count " + std::to_string(c4) + " is not divisible by 4");
    }
    const Index c = c4 / 4;
    Array<Scalar> x(u.size());
    detail::haar_synthesis(u.data(), x.data(), n, c, h, w);
    return Tensor<Scalar>::make_op(
        {n, c, 2 * h, 2 * w}, std::move(x), {u},
        [=](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            Array<Scalar> back(g.size());
            detail::haar_analysis(g.data(), back.data(), n, c, 2 * h, 2 * w);
            *pg[0] += back;
        },
        "haar_inverse");
}

}  // namespace fino

#endif  // FINO_HAAR_HPP
