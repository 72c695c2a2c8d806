// ADAM with bias correction over a flat list of parameter leaves.
#ifndef FINO_ADAM_HPP
#define FINO_ADAM_HPP

#include "fino/tensor.hpp"

#include <cstdint>
#include <vector>

namespace fino {

template <typename Scalar>
struct AdamState {
    std::vector<Array<Scalar>> first_moment;
    std::vector<Array<Scalar>> second_moment;
    std::int64_t step_count = 0;
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Allocates zeroed moments matching `params`.
    void reset(const std::vector<Tensor<Scalar>>& params) {
        first_moment.clear();
        second_moment.clear();
        for (const auto& p : params) {
            first_moment.push_back(Array<Scalar>::Zero(p.size()));
            second_moment.push_back(Array<Scalar>::Zero(p.size()));
        }
        step_count = 0;
    }
};

/// One update using explicit gradients. Every gradient is validated before any
/// parameter is touched, so a rejected step leaves the parameters unchanged.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>>& params, const std::vector<Array<Scalar>>& grads,
               AdamState<Scalar>& state) {
    if (grads.size() != params.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " parameters but " +
                                    std::to_string(grads.size()) + " gradients");
    }
    if (state.first_moment.empty() && !params.empty()) {
        state.reset(params);
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw std::invalid_argument("adam_step: optimizer state tracks a different parameter count");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto label = params[i].name().empty() ? "#" + std::to_string(i) : params[i].name();
        if (grads[i].size() != params[i].size() || state.first_moment[i].size() != params[i].size() ||
            state.second_moment[i].size() != params[i].size()) {
            throw std::invalid_argument("adam_step: size mismatch for parameter " + label);
        }
        if (!grads[i].allFinite()) {
            throw std::domain_error("adam_step: non-finite gradient for parameter " + label);
        }
    }

    ++state.step_count;
    const auto t = static_cast<double>(state.step_count);
    const auto b1 = static_cast<Scalar>(state.beta1);
    const auto b2 = static_cast<Scalar>(state.beta2);
    const auto correction1 = static_cast<Scalar>(1.0 - std::pow(state.beta1, t));
    const auto correction2 = static_cast<Scalar>(1.0 - std::pow(state.beta2, t));
    const auto lr = static_cast<Scalar>(state.lr);
    const auto eps = static_cast<Scalar>(state.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = b1 * m + (Scalar(1) - b1) * grads[i];
        v = b2 * v + (Scalar(1) - b2) * grads[i].square();
        params[i].mutable_value() -= lr * (m / correction1) / ((v / correction2).sqrt() + eps);
    }
}

/// Update from the gradients accumulated on the parameters themselves; a
/// parameter that never received a gradient is treated as having grad 0.
template <typename Scalar>
void adam_step(std::vector<Tensor<Scalar>>& params, AdamState<Scalar>& state) {
    std::vector<Array<Scalar>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        grads.push_back(p.has_grad() ? p.grad() : Array<Scalar>::Zero(p.size()));
    }
    adam_step(params, grads, state);
}

}  // namespace fino

#endif  // FINO_ADAM_HPP
