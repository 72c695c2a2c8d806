// Training objective: the L1 reconstruction, content-alignment and regression
// terms, the patch-wise noise correlation penalty, and their weighted sum.
// Every L1 norm here is a per-element mean.
#ifndef FINO_OBJECTIVE_HPP
#define FINO_OBJECTIVE_HPP

#include "fino/tensor.hpp"

#include <Eigen/Dense>

namespace fino {

template <typename Scalar>
Tensor<Scalar> loss_rec(const Tensor<Scalar>& n_hat, const Tensor<Scalar>& n, const Tensor<Scalar>& x_hat,
                        const Tensor<Scalar>& x) {
    return l1_mean(n_hat - n) + l1_mean(x_hat - x);
}

template <typename Scalar>
Tensor<Scalar> loss_cnt(const Tensor<Scalar>& zc_x, const Tensor<Scalar>& zc_y) {
    return l1_mean(zc_x - zc_y);
}

template <typename Scalar>
Tensor<Scalar> loss_reg(const Tensor<Scalar>& y_tilde, const Tensor<Scalar>& x) {
    return l1_mean(y_tilde - x);
}

/// Columns are vectorized patches: `values` is m x M with m = patch_edge^2
/// (or C * patch_edge^2 when channels are taken jointly).
template <typename Scalar>
struct PatchMatrix {
    Tensor<Scalar> values;
    Index patch_edge = 0;
    Index stride = 0;

    Index rows() const { return values.dim(0); }
    Index cols() const { return values.dim(1); }
};

/// Overlapping patch extraction from a 1 x C x H x W tensor. By default each
/// channel is an independent noise realization contributing its own columns,
/// ordered (channel, row, column); `joint_channels` stacks the channels of a
/// location into one taller column instead.
template <typename Scalar>
PatchMatrix<Scalar> extract_patches(const Tensor<Scalar>& image, Index patch_edge, Index stride,
                                    bool joint_channels = false) {
    if (image.rank() != 4 || image.dim(0) != 1) {
        throw std::invalid_argument("extract_patches: expected 1 x C x H x W, got " + to_string(image.shape()));
    }
    const Index c = image.dim(1), h = image.dim(2), w = image.dim(3);
    if (stride < 1) {
        throw std::invalid_argument("extract_patches: stride must be >= 1");
    }
    if (patch_edge < 1 || patch_edge > std::min(h, w)) {
        throw std::invalid_argument("extract_patches: patch edge " + std::to_string(patch_edge) +
                                    " does not fit in a " + std::to_string(h) + "x" + std::to_string(w) + " image");
    }
    const Index py = (h - patch_edge) / stride + 1, px = (w - patch_edge) / stride + 1;
    const Index pixels = patch_edge * patch_edge;
    const Index m = joint_channels ? c * pixels : pixels;
    const Index cols = joint_channels ? py * px : c * py * px;

    // index[row * cols + col] = flat source offset
    std::vector<Index> source(static_cast<std::size_t>(m * cols));
    for (Index ch = 0; ch < c; ++ch) {
        for (Index i = 0; i < py; ++i) {
            for (Index j = 0; j < px; ++j) {
                const Index col = joint_channels ? i * px + j : (ch * py + i) * px + j;
                const Index row0 = joint_channels ? ch * pixels : 0;
                for (Index dy = 0; dy < patch_edge; ++dy) {
                    for (Index dx = 0; dx < patch_edge; ++dx) {
                        const Index row = row0 + dy * patch_edge + dx;
                        source[static_cast<std::size_t>(row * cols + col)] =
                            (ch * h + i * stride + dy) * w + j * stride + dx;
                    }
                }
            }
        }
    }
    Array<Scalar> values(m * cols);
    for (Index k = 0; k < values.size(); ++k) {
        values[k] = image.value()[source[static_cast<std::size_t>(k)]];
    }
    auto t = Tensor<Scalar>::make_op(
        {m, cols}, std::move(values), {image},
        [source = std::move(source)](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            for (Index k = 0; k < g.size(); ++k) {
                (*pg[0])[source[static_cast<std::size_t>(k)]] += g[k];
            }
        },
        "extract_patches");
    return {t, patch_edge, stride};
}

/// Sigma = (1/M) * sum_j N_j N_j^T.
template <typename Scalar>
Tensor<Scalar> noise_correlation(const PatchMatrix<Scalar>& patches) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Index m = patches.rows(), cols = patches.cols();
    if (cols < 1) {
        throw std::invalid_argument("noise_correlation: no patches");
    }
    const Scalar inv = Scalar(1) / static_cast<Scalar>(cols);
    Eigen::Map<const Matrix> p(patches.values.data(), m, cols);
    Matrix sigma = Matrix::Zero(m, m);
    sigma.template selfadjointView<Eigen::Lower>().rankUpdate(p, inv);
    sigma.template triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
    Array<Scalar> out = Eigen::Map<const Array<Scalar>>(sigma.data(), m * m);
    const Tensor<Scalar> source = patches.values;
    return Tensor<Scalar>::make_op(
        {m, m}, std::move(out), {source},
        [source, m, cols, inv](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            Eigen::Map<const Matrix> gm(g.data(), m, m);
            Eigen::Map<const Matrix> pm(source.data(), m, cols);
            Eigen::Map<Matrix> dp(pg[0]->data(), m, cols);
            dp.noalias() += inv * (gm + gm.transpose()) * pm;
        },
        "noise_correlation");
}

/// ||Sigma - sigma^2 I||_F^2.
template <typename Scalar>
Tensor<Scalar> loss_noise(const Tensor<Scalar>& sigma_matrix, double sigma) {
    if (sigma_matrix.rank() != 2 || sigma_matrix.dim(0) != sigma_matrix.dim(1)) {
        throw std::invalid_argument("loss_noise: correlation matrix must be square, got " +
                                    to_string(sigma_matrix.shape()));
    }
    if (!(sigma >= 0.0)) {
        throw std::invalid_argument("loss_noise: sigma must be non-negative");
    }
    const Index m = sigma_matrix.dim(0);
    Array<Scalar> target = Array<Scalar>::Zero(m * m);
    for (Index i = 0; i < m; ++i) {
        target[i * m + i] = static_cast<Scalar>(sigma * sigma);
    }
    return frobenius_sq(sigma_matrix - Tensor<Scalar>({m, m}, std::move(target)));
}

struct LossWeights {
    double alpha = 1.0;  // reconstruction
    double beta = 1.0;   // content alignment
    double gamma = 0.1;  // noise correlation
    bool use_rec = true;
    bool use_cnt = true;
    bool use_noise = true;

    void validate() const {
        for (double w : {alpha, beta, gamma}) {
            if (!std::isfinite(w) || w < 0.0) {
                throw std::invalid_argument("loss weights must be finite and non-negative");
            }
        }
    }
};

/// Individual terms of one batch; disabled terms are left undefined.
template <typename Scalar>
struct LossParts {
    Tensor<Scalar> reg;
    Tensor<Scalar> rec;
    Tensor<Scalar> cnt;
    Tensor<Scalar> noise;
};

/// L = L_reg + alpha L_rec + beta L_cnt + gamma L_noise over the enabled terms.
/// Disabled terms are not part of the graph at all.
template <typename Scalar>
Tensor<Scalar> total_loss(const LossParts<Scalar>& parts, const LossWeights& w) {
    w.validate();
    if (!parts.reg.defined()) {
        throw std::invalid_argument("total_loss: the regression term is always required");
    }
    Tensor<Scalar> total = parts.reg;
    auto add_term = [&](const Tensor<Scalar>& term, double weight, bool enabled, const char* label) {
        if (!enabled) {
            return;
        }
        if (!term.defined()) {
            throw std::invalid_argument(std::string("total_loss: enabled term ") + label + " was not computed");
        }
        total = total + scale(term, static_cast<Scalar>(weight));
    };
    add_term(parts.rec, w.alpha, w.use_rec, "rec");
    add_term(parts.cnt, w.beta, w.use_cnt, "cnt");
    add_term(parts.noise, w.gamma, w.use_noise, "noise");
    return total;
}

}  // namespace fino

#endif  // FINO_OBJECTIVE_HPP
