// 2-D cross-correlation over N x C x H x W batches, lowered to a single GEMM
// per call through an im2col buffer that spans the whole batch.
#ifndef FINO_CONV_HPP
#define FINO_CONV_HPP

#include "fino/tensor.hpp"

#include <Eigen/Dense>

namespace fino {

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
    Index n, c_in, h, w, c_out, k, pad, out_h, out_w;

    Index patch_rows() const { return c_in * k * k; }
    Index out_plane() const { return out_h * out_w; }
    Index columns() const { return n * out_plane(); }
};

// cols(row = (c, ky, kx), col = (b, oy, ox)).
template <typename Scalar>
void im2col(const ConvGeometry& g, const Scalar* input, RowMatrix<Scalar>& cols) {
    cols.resize(g.patch_rows(), g.columns());
    for (Index c = 0; c < g.c_in; ++c) {
        for (Index ky = 0; ky < g.k; ++ky) {
            for (Index kx = 0; kx < g.k; ++kx) {
                Scalar* row = cols.row((c * g.k + ky) * g.k + kx).data();
                for (Index b = 0; b < g.n; ++b) {
                    const Scalar* plane = input + (b * g.c_in + c) * g.h * g.w;
                    Scalar* dst = row + b * g.out_plane();
                    for (Index oy = 0; oy < g.out_h; ++oy) {
                        const Index iy = oy + ky - g.pad;
                        Scalar* dst_row = dst + oy * g.out_w;
                        if (iy < 0 || iy >= g.h) {
                            std::fill(dst_row, dst_row + g.out_w, Scalar(0));
                            continue;
                        }
                        for (Index ox = 0; ox < g.out_w; ++ox) {
                            const Index ix = ox + kx - g.pad;
                            dst_row[ox] = (ix < 0 || ix >= g.w) ? Scalar(0) : plane[iy * g.w + ix];
                        }
                    }
                }
            }
        }
    }
}

template <typename Scalar>
void col2im_add(const ConvGeometry& g, const RowMatrix<Scalar>& cols, Scalar* input_grad) {
    for (Index c = 0; c < g.c_in; ++c) {
        for (Index ky = 0; ky < g.k; ++ky) {
            for (Index kx = 0; kx < g.k; ++kx) {
                const Scalar* row = cols.row((c * g.k + ky) * g.k + kx).data();
                for (Index b = 0; b < g.n; ++b) {
                    Scalar* plane = input_grad + (b * g.c_in + c) * g.h * g.w;
                    const Scalar* src = row + b * g.out_plane();
                    for (Index oy = 0; oy < g.out_h; ++oy) {
                        const Index iy = oy + ky - g.pad;
                        if (iy < 0 || iy >= g.h) continue;
                        for (Index ox = 0; ox < g.out_w; ++ox) {
                            const Index ix = ox + kx - g.pad;
                            if (ix >= 0 && ix < g.w) plane[iy * g.w + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// Cross-correlation of `input` (N x C_in x H x W) with `weight`
/// (C_out x C_in x k x k, k odd) plus a per-channel `bias`. Zero padding of
/// (k - 1) / 2 preserves the spatial size.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      Index padding) {
    using detail::RowMatrix;
    if (input.rank() != 4) {
        throw std::invalid_argument("conv2d: input must be N x C x H x W, got " + to_string(input.shape()));
    }
    if (weight.rank() != 4) {
        throw std::invalid_argument("conv2d: weight must be C_out x C_in x k x k, got " + to_string(weight.shape()));
    }
    if (weight.dim(1) != input.dim(1)) {
        throw std::invalid_argument("conv2d: input channel dimension (dim 1) is " + std::to_string(input.dim(1)) +
                                    " but weight expects " + std::to_string(weight.dim(1)));
    }
    if (weight.dim(2) != weight.dim(3)) {
        throw std::invalid_argument("conv2d: kernel must be square, got " + to_string(weight.shape()));
    }
    if (weight.dim(2) % 2 == 0) {
        throw std::invalid_argument("conv2d: kernel size (dim 2) must be odd, got " + std::to_string(weight.dim(2)));
    }
    if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
        throw std::invalid_argument("conv2d: bias must have C_out = " + std::to_string(weight.dim(0)) +
                                    " entries, got " + to_string(bias.shape()));
    }
    if (padding < 0) {
        throw std::invalid_argument("conv2d: negative padding");
    }

    detail::ConvGeometry g{};
    g.n = input.dim(0);
    g.c_in = input.dim(1);
    g.h = input.dim(2);
    g.w = input.dim(3);
    g.c_out = weight.dim(0);
    g.k = weight.dim(2);
    g.pad = padding;
    g.out_h = g.h + 2 * padding - g.k + 1;
    g.out_w = g.w + 2 * padding - g.k + 1;
    if (g.out_h <= 0 || g.out_w <= 0) {
        throw std::invalid_argument("conv2d: kernel larger than padded input " + to_string(input.shape()));
    }

    RowMatrix<Scalar> cols;
    detail::im2col(g, input.data(), cols);
    Eigen::Map<const RowMatrix<Scalar>> w_mat(weight.data(), g.c_out, g.patch_rows());
    RowMatrix<Scalar> out_mat(g.c_out, g.columns());
    out_mat.noalias() = w_mat * cols;
    out_mat.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), g.c_out);

    // (c_out, b, plane) -> (b, c_out, plane)
    Array<Scalar> out(g.n * g.c_out * g.out_plane());
    for (Index b = 0; b < g.n; ++b) {
        for (Index co = 0; co < g.c_out; ++co) {
            const Scalar* src = out_mat.row(co).data() + b * g.out_plane();
            std::copy(src, src + g.out_plane(), out.data() + (b * g.c_out + co) * g.out_plane());
        }
    }

    return Tensor<Scalar>::make_op(
        {g.n, g.c_out, g.out_h, g.out_w}, std::move(out), {input, weight, bias},
        [g, input, weight](const Array<Scalar>& grad, std::span<Array<Scalar>* const> pg) {
            RowMatrix<Scalar> g_mat(g.c_out, g.columns());
            for (Index b = 0; b < g.n; ++b) {
                for (Index co = 0; co < g.c_out; ++co) {
                    const Scalar* src = grad.data() + (b * g.c_out + co) * g.out_plane();
                    std::copy(src, src + g.out_plane(), g_mat.row(co).data() + b * g.out_plane());
                }
            }
            if (pg[2]) {
                pg[2]->matrix() += g_mat.rowwise().sum();
            }
            if (pg[1]) {
                RowMatrix<Scalar> cols;
                detail::im2col(g, input.data(), cols);
                Eigen::Map<RowMatrix<Scalar>> dw(pg[1]->data(), g.c_out, g.patch_rows());
                dw.noalias() += g_mat * cols.transpose();
            }
            if (pg[0]) {
                Eigen::Map<const RowMatrix<Scalar>> w_mat(weight.data(), g.c_out, g.patch_rows());
                RowMatrix<Scalar> dcols(g.patch_rows(), g.columns());
                dcols.noalias() = w_mat.transpose() * g_mat;
                detail::col2im_add(g, dcols, pg[0]->data());
            }
        },
        "conv2d");
}

}  // namespace fino

#endif  // FINO_CONV_HPP
