// Dense tensors with taped reverse-mode differentiation.
//
// A Tensor is a cheap handle onto an immutable node. Ops record their parents
// and a backward closure when any input requires a gradient, so each forward
// pass builds its own graph; backward() walks it once in reverse topological
// order and accumulates into the leaves.
#ifndef FINO_TENSOR_HPP
#define FINO_TENSOR_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fino {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline Index numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ')';
    return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename Scalar>
struct Node {
    using BackwardFn = std::function<void(const Array<Scalar>& out_grad, std::span<Array<Scalar>* const> parent_grads)>;

    Shape shape;
    Array<Scalar> value;
    Array<Scalar> grad;  // empty until a backward pass reaches this leaf
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
};

}  // namespace detail

/// Whether ops currently record graph edges (per thread).
inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <typename Scalar>
class Tensor {
public:
    using scalar_type = Scalar;
    using array_type = Array<Scalar>;
    using node_type = detail::Node<Scalar>;

    Tensor() = default;

    Tensor(Shape shape, array_type values) : node_(std::make_shared<node_type>()) {
        for (Index extent : shape) {
            if (extent < 0) {
                throw std::invalid_argument("negative extent in shape " + to_string(shape));
            }
        }
        if (numel(shape) != values.size()) {
            throw std::invalid_argument("shape " + to_string(shape) + " holds " + std::to_string(numel(shape)) +
                                        " elements but " + std::to_string(values.size()) + " were given");
        }
        node_->shape = std::move(shape);
        node_->value = std::move(values);
    }

    static Tensor zeros(Shape shape) {
        const Index n = numel(shape);
        return Tensor(std::move(shape), array_type::Zero(n));
    }
    static Tensor ones(Shape shape) { return full(std::move(shape), Scalar(1)); }
    static Tensor full(Shape shape, Scalar v) {
        const Index n = numel(shape);
        return Tensor(std::move(shape), array_type::Constant(n, v));
    }
    static Tensor scalar(Scalar v) { return full({}, v); }
    static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
        array_type a(static_cast<Index>(values.size()));
        std::copy(values.begin(), values.end(), a.data());
        return Tensor(std::move(shape), std::move(a));
    }

    /// Wraps an op result. Parents and the backward closure are kept only when
    /// recording is enabled and some parent needs a gradient.
    static Tensor make_op(Shape shape, array_type values, std::vector<Tensor> parents,
                          typename node_type::BackwardFn backward, const char* op_name) {
        if (!values.allFinite()) {
            throw std::domain_error(std::string(op_name) + " produced a non-finite value");
        }
        Tensor out(std::move(shape), std::move(values));
        bool needs = false;
        if (grad_enabled()) {
            for (const Tensor& p : parents) {
                needs = needs || p.requires_grad();
            }
        }
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->name = op_name;
            out.node_->parents.reserve(parents.size());
            for (const Tensor& p : parents) {
                out.node_->parents.push_back(p.node_);
            }
            out.node_->backward = std::move(backward);
        }
        return out;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    Index dim(std::size_t axis) const { return node_->shape.at(axis); }
    Index rank() const { return static_cast<Index>(node_->shape.size()); }
    Index size() const { return node_->value.size(); }

    const array_type& value() const { return node_->value; }
    const Scalar* data() const { return node_->value.data(); }
    Scalar item() const {
        if (size() != 1) {
            throw std::invalid_argument("item() on tensor of shape " + to_string(shape()));
        }
        return node_->value[0];
    }

    /// Writable storage; only leaves may be mutated (optimizer updates, loaders).
    array_type& mutable_value() {
        if (!is_leaf()) {
            throw std::logic_error("cannot mutate the output of an op");
        }
        return node_->value;
    }

    bool is_leaf() const { return !node_->backward; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        if (!is_leaf()) {
            throw std::logic_error("requires_grad can only be set on leaf tensors");
        }
        node_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return node_->grad.size() == size(); }
    const array_type& grad() const { return node_->grad; }
    array_type& mutable_grad() { return node_->grad; }
    void zero_grad() { node_->grad = array_type::Zero(size()); }
    void clear_grad() { node_->grad.resize(0); }

    const std::string& name() const { return node_->name; }
    Tensor& set_name(std::string n) {
        node_->name = std::move(n);
        return *this;
    }

    /// A new leaf sharing no graph history; the values are copied.
    Tensor detach() const { return Tensor(shape(), value()); }

    /// Row-major flat offset of a multi-index.
    Index offset(std::initializer_list<Index> idx) const {
        if (static_cast<Index>(idx.size()) != rank()) {
            throw std::invalid_argument("index rank mismatch for shape " + to_string(shape()));
        }
        Index off = 0;
        std::size_t axis = 0;
        for (Index i : idx) {
            off = off * node_->shape[axis] + i;
            ++axis;
        }
        return off;
    }
    Scalar at(std::initializer_list<Index> idx) const { return node_->value[offset(idx)]; }

    const std::shared_ptr<node_type>& node() const { return node_; }

private:
    std::shared_ptr<node_type> node_;
};

using TensorD = Tensor<double>;
using TensorF = Tensor<float>;

/// Reverse pass from a scalar loss. Gradients of intermediate nodes live only
/// for the duration of the call; leaves that require a gradient accumulate.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
    using Node = detail::Node<Scalar>;
    if (loss.size() != 1) {
        throw std::invalid_argument("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
    }
    if (!loss.requires_grad()) {
        return;
    }

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_map<Node*, std::size_t> position;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    std::unordered_map<Node*, bool> visited{{loss.node().get(), true}};
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && !visited[parent]) {
                visited[parent] = true;
                stack.emplace_back(parent, 0);
            }
            continue;
        }
        position[node] = order.size();
        order.push_back(node);
        stack.pop_back();
    }

    std::vector<Array<Scalar>> grads(order.size());
    grads.back() = Array<Scalar>::Ones(1);
    std::vector<Array<Scalar>*> parent_grads;
    for (std::size_t i = order.size(); i-- > 0;) {
        Node* node = order[i];
        if (grads[i].size() == 0) {
            continue;
        }
        if (node->backward) {
            parent_grads.assign(node->parents.size(), nullptr);
            for (std::size_t p = 0; p < node->parents.size(); ++p) {
                Node* parent = node->parents[p].get();
                if (!parent->requires_grad) {
                    continue;
                }
                auto& g = grads[position.at(parent)];
                if (g.size() == 0) {
                    g = Array<Scalar>::Zero(parent->value.size());
                }
                parent_grads[p] = &g;
            }
            node->backward(grads[i], parent_grads);
        } else {
            if (node->grad.size() != node->value.size()) {
                node->grad = Array<Scalar>::Zero(node->value.size());
            }
            node->grad += grads[i];
        }
        if (i + 1 != order.size()) {
            grads[i] = Array<Scalar>();
        }
    }
}

// ---------------------------------------------------------------------------
// Element-wise ops. Binary ops require identical shapes.

namespace detail {

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
    }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "add");
    return Tensor<Scalar>::make_op(
        a.shape(), a.value() + b.value(), {a, b},
        [](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            if (pg[0]) *pg[0] += g;
            if (pg[1]) *pg[1] += g;
        },
        "add");
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "sub");
    return Tensor<Scalar>::make_op(
        a.shape(), a.value() - b.value(), {a, b},
        [](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            if (pg[0]) *pg[0] += g;
            if (pg[1]) *pg[1] -= g;
        },
        "sub");
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "mul");
    return Tensor<Scalar>::make_op(
        a.shape(), a.value() * b.value(), {a, b},
        [a, b](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            if (pg[0]) *pg[0] += g * b.value();
            if (pg[1]) *pg[1] += g * a.value();
        },
        "mul");
}

/// Rejects any divisor with magnitude below 1e-12.
template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require_same_shape(a, b, "div");
    if ((b.value().abs() < Scalar(1e-12)).any()) {
        throw std::domain_error("div: divisor element with |b| < 1e-12 (non-invertible scale)");
    }
    Array<Scalar> q = a.value() / b.value();
    return Tensor<Scalar>::make_op(
        a.shape(), q, {a, b},
        [b, q](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            if (pg[0]) *pg[0] += g / b.value();
            if (pg[1]) *pg[1] -= g * q / b.value();
        },
        "div");
}

template <typename Scalar>
Tensor<Scalar> neg(const Tensor<Scalar>& a) {
    return Tensor<Scalar>::make_op(
        a.shape(), -a.value(), {a},
        [](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] -= g; }, "neg");
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
    return Tensor<Scalar>::make_op(
        a.shape(), a.value().max(Scalar(0)), {a},
        [a](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            *pg[0] += (a.value() > Scalar(0)).select(g, Scalar(0));
        },
        "relu");
}

template <typename Scalar>
Tensor<Scalar> exp(const Tensor<Scalar>& a) {
    Array<Scalar> e = a.value().exp();
    return Tensor<Scalar>::make_op(
        a.shape(), e, {a},
        [e](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += g * e; }, "exp");
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
    Array<Scalar> t = a.value().tanh();
    return Tensor<Scalar>::make_op(
        a.shape(), t, {a},
        [t](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += g * (Scalar(1) - t.square()); },
        "tanh");
}

/// Subgradient 0 at a = 0.
template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& a) {
    return Tensor<Scalar>::make_op(
        a.shape(), a.value().abs(), {a},
        [a](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += g * a.value().sign(); }, "abs");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
    return Tensor<Scalar>::make_op(
        a.shape(), a.value() * factor, {a},
        [factor](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += g * factor; }, "scale");
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator/(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return div(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a) { return neg(a); }

enum class Elementwise { add, sub, mul, div, relu, exp, neg, abs };

/// Dispatch form of the element-wise family; `b` is required for binary kinds.
template <typename Scalar>
Tensor<Scalar> elementwise(Elementwise kind, const Tensor<Scalar>& a, const Tensor<Scalar>* b = nullptr) {
    const bool binary = kind == Elementwise::add || kind == Elementwise::sub || kind == Elementwise::mul ||
                        kind == Elementwise::div;
    if (binary && (b == nullptr || !b->defined())) {
        throw std::invalid_argument("binary element-wise op needs a second operand");
    }
    switch (kind) {
        case Elementwise::add: return add(a, *b);
        case Elementwise::sub: return sub(a, *b);
        case Elementwise::mul: return mul(a, *b);
        case Elementwise::div: return div(a, *b);
        case Elementwise::relu: return relu(a);
        case Elementwise::exp: return exp(a);
        case Elementwise::neg: return neg(a);
        case Elementwise::abs: return abs(a);
    }
    throw std::invalid_argument("unknown element-wise kind");
}

// ---------------------------------------------------------------------------
// Reductions to a rank-0 tensor.

namespace detail {

template <typename Scalar>
void require_nonempty(const Tensor<Scalar>& a, const char* op) {
    if (a.size() == 0) {
        throw std::invalid_argument(std::string(op) + ": empty input");
    }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
    detail::require_nonempty(a, "sum");
    return Tensor<Scalar>::make_op(
        {}, Array<Scalar>::Constant(1, a.value().sum()), {a},
        [](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += g[0]; }, "sum");
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
    detail::require_nonempty(a, "mean");
    const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
    return Tensor<Scalar>::make_op(
        {}, Array<Scalar>::Constant(1, a.value().sum() * inv), {a},
        [inv](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += g[0] * inv; }, "mean");
}

/// Mean of absolute values; the L1 convention used by every loss term.
template <typename Scalar>
Tensor<Scalar> l1_mean(const Tensor<Scalar>& a) {
    detail::require_nonempty(a, "l1_mean");
    const Scalar inv = Scalar(1) / static_cast<Scalar>(a.size());
    return Tensor<Scalar>::make_op(
        {}, Array<Scalar>::Constant(1, a.value().abs().sum() * inv), {a},
        [a, inv](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            *pg[0] += (g[0] * inv) * a.value().sign();
        },
        "l1_mean");
}

template <typename Scalar>
Tensor<Scalar> frobenius_sq(const Tensor<Scalar>& a) {
    detail::require_nonempty(a, "frobenius_sq");
    return Tensor<Scalar>::make_op(
        {}, Array<Scalar>::Constant(1, a.value().square().sum()), {a},
        [a](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { *pg[0] += (Scalar(2) * g[0]) * a.value(); },
        "frobenius_sq");
}

enum class Reduction { sum, mean, l1_mean, frobenius_sq };

template <typename Scalar>
Tensor<Scalar> reduce(Reduction kind, const Tensor<Scalar>& a) {
    switch (kind) {
        case Reduction::sum: return sum(a);
        case Reduction::mean: return mean(a);
        case Reduction::l1_mean: return l1_mean(a);
        case Reduction::frobenius_sq: return frobenius_sq(a);
    }
    throw std::invalid_argument("unknown reduction kind");
}

// ---------------------------------------------------------------------------
// Layout ops on N x C x H x W batches.

namespace detail {

template <typename Scalar>
void require_nchw(const Tensor<Scalar>& a, const char* op) {
    if (a.rank() != 4) {
        throw std::invalid_argument(std::string(op) + ": expected N x C x H x W, got " + to_string(a.shape()));
    }
}

// Copies channel range [c0, c0 + count) of every batch item between two NCHW
// buffers whose channel counts are src_c and dst_c.
template <typename Scalar>
void copy_channels(const Scalar* src, Index src_c, Index src_c0, Scalar* dst, Index dst_c, Index dst_c0, Index n,
                   Index count, Index plane, bool accumulate) {
    for (Index b = 0; b < n; ++b) {
        const Scalar* s = src + (b * src_c + src_c0) * plane;
        Scalar* d = dst + (b * dst_c + dst_c0) * plane;
        const Index len = count * plane;
        if (accumulate) {
            for (Index i = 0; i < len; ++i) d[i] += s[i];
        } else {
            std::copy(s, s + len, d);
        }
    }
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> channel_slice(const Tensor<Scalar>& a, Index c0, Index count) {
    detail::require_nchw(a, "channel_slice");
    const Index n = a.dim(0), c = a.dim(1), plane = a.dim(2) * a.dim(3);
    if (c0 < 0 || count <= 0 || c0 + count > c) {
        throw std::invalid_argument("channel_slice: range [" + std::to_string(c0) + ", " + std::to_string(c0 + count) +
                                    ") outside channel extent " + std::to_string(c));
    }
    Array<Scalar> out(n * count * plane);
    detail::copy_channels(a.data(), c, c0, out.data(), count, 0, n, count, plane, false);
    return Tensor<Scalar>::make_op(
        {n, count, a.dim(2), a.dim(3)}, std::move(out), {a},
        [=](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            detail::copy_channels(g.data(), count, 0, pg[0]->data(), c, c0, n, count, plane, true);
        },
        "channel_slice");
}

/// Splits into channels [0, c_head) and [c_head, C).
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> channel_split(const Tensor<Scalar>& a, Index c_head) {
    detail::require_nchw(a, "channel_split");
    if (c_head <= 0 || c_head >= a.dim(1)) {
        throw std::invalid_argument("channel_split: head size " + std::to_string(c_head) + " must lie in (0, " +
                                    std::to_string(a.dim(1)) + ")");
    }
    return {channel_slice(a, 0, c_head), channel_slice(a, c_head, a.dim(1) - c_head)};
}

template <typename Scalar>
Tensor<Scalar> channel_concat(const Tensor<Scalar>& head, const Tensor<Scalar>& tail) {
    detail::require_nchw(head, "channel_concat");
    detail::require_nchw(tail, "channel_concat");
    if (head.dim(0) != tail.dim(0) || head.dim(2) != tail.dim(2) || head.dim(3) != tail.dim(3)) {
        throw std::invalid_argument("channel_concat: incompatible shapes " + to_string(head.shape()) + " and " +
                                    to_string(tail.shape()));
    }
    const Index n = head.dim(0), ch = head.dim(1), ct = tail.dim(1), plane = head.dim(2) * head.dim(3);
    const Index c = ch + ct;
    Array<Scalar> out(n * c * plane);
    detail::copy_channels(head.data(), ch, 0, out.data(), c, 0, n, ch, plane, false);
    detail::copy_channels(tail.data(), ct, 0, out.data(), c, ch, n, ct, plane, false);
    return Tensor<Scalar>::make_op(
        {n, c, head.dim(2), head.dim(3)}, std::move(out), {head, tail},
        [=](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) {
            if (pg[0]) detail::copy_channels(g.data(), c, 0, pg[0]->data(), ch, 0, n, ch, plane, true);
            if (pg[1]) detail::copy_channels(g.data(), c, ch, pg[1]->data(), ct, 0, n, ct, plane, true);
        },
        "channel_concat");
}

/// Item `index` of a batch as a 1 x C x H x W tensor.
template <typename Scalar>
Tensor<Scalar> batch_select(const Tensor<Scalar>& a, Index index) {
    detail::require_nchw(a, "batch_select");
    if (index < 0 || index >= a.dim(0)) {
        throw std::invalid_argument("batch_select: index " + std::to_string(index) + " outside batch of " +
                                    std::to_string(a.dim(0)));
    }
    const Index item = a.size() / a.dim(0);
    Array<Scalar> out = a.value().segment(index * item, item);
    return Tensor<Scalar>::make_op(
        {1, a.dim(1), a.dim(2), a.dim(3)}, std::move(out), {a},
        [=](const Array<Scalar>& g, std::span<Array<Scalar>* const> pg) { pg[0]->segment(index * item, item) += g; },
        "batch_select");
}

/// Converts element type; the result is a fresh leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& a) {
    return Tensor<To>(a.shape(), a.value().template cast<To>());
}

}  // namespace fino

#endif  // FINO_TENSOR_HPP
