#pragma once

// Plain (non-differentiable) forward passes, templated on the scalar type.
// Node features are rows: H is N x d and weights multiply on the right.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <type_traits>

#include <Eigen/Dense>

#include "pgl/errors.hpp"

namespace pgl::nn {

template <typename Scalar>
using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = Dense<double>;

enum class Activation { identity, relu, leaky_relu, sigmoid, tanh };

inline constexpr double kLeakySlope = 0.2;

std::string_view to_string(Activation a);
std::optional<Activation> parse_activation(std::string_view text);

template <typename Scalar>
    requires std::is_arithmetic_v<Scalar>
Scalar activate(Scalar x, Activation act) {
    using std::exp;
    using std::tanh;
    switch (act) {
        case Activation::identity: return x;
        case Activation::relu: return x > Scalar(0) ? x : Scalar(0);
        case Activation::leaky_relu: return x > Scalar(0) ? x : Scalar(kLeakySlope) * x;
        case Activation::sigmoid:
            // Split by sign so exp never overflows.
            if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
            return exp(x) / (Scalar(1) + exp(x));
        case Activation::tanh: return tanh(x);
    }
    return x;
}

template <typename Derived>
Dense<typename Derived::Scalar> activate(const Eigen::MatrixBase<Derived>& x, Activation act) {
    using Scalar = typename Derived::Scalar;
    return x.unaryExpr([act](Scalar v) { return activate(v, act); });
}

namespace detail {
inline void require(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}
}  // namespace detail

/// D^{-1/2} (A + I) D^{-1/2}, D the degree matrix of A + I.
template <typename Derived>
Dense<typename Derived::Scalar> normalize_adjacency(const Eigen::MatrixBase<Derived>& a) {
    using Scalar = typename Derived::Scalar;
    detail::require(a.rows() == a.cols(), "normalize_adjacency: matrix is not square");
    Dense<Scalar> tilde = a;
    tilde.diagonal().array() += Scalar(1);
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sqrt = tilde.rowwise().sum().array().rsqrt();
    return inv_sqrt.asDiagonal() * tilde * inv_sqrt.asDiagonal();
}

/// D^{-1/2} A D^{-1/2} without self-loops; zero-degree rows stay zero.
template <typename Derived>
Dense<typename Derived::Scalar> normalize_propagation(const Eigen::MatrixBase<Derived>& a) {
    using Scalar = typename Derived::Scalar;
    detail::require(a.rows() == a.cols(), "normalize_propagation: matrix is not square");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_sqrt = a.rowwise().sum();
    for (Eigen::Index i = 0; i < inv_sqrt.size(); ++i)
        inv_sqrt(i) = inv_sqrt(i) > Scalar(0) ? Scalar(1) / std::sqrt(inv_sqrt(i)) : Scalar(0);
    return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

/// sigma(A_hat H Theta).
template <typename DH, typename DA, typename DT>
Dense<typename DH::Scalar> gcn_forward(const Eigen::MatrixBase<DH>& h, const Eigen::MatrixBase<DA>& a_hat,
                                       const Eigen::MatrixBase<DT>& theta, Activation act) {
    detail::require(a_hat.rows() == a_hat.cols() && a_hat.cols() == h.rows(), "gcn_forward: adjacency/feature mismatch");
    detail::require(h.cols() == theta.rows(), "gcn_forward: feature/weight mismatch");
    return activate(a_hat * (h * theta), act);
}

/// Attention coefficients over the closed neighborhoods of `adjacency`
/// (self-loops implied): alpha_ij = softmax_j LeakyReLU(a_src . hW_i + a_dst . hW_j).
template <typename DH, typename DA>
Dense<typename DH::Scalar> gat_attention(const Eigen::MatrixBase<DH>& hw, const Eigen::MatrixBase<DA>& adjacency,
                                         const RowVec<typename DH::Scalar>& attn) {
    using Scalar = typename DH::Scalar;
    const auto n = hw.rows();
    const auto d = hw.cols();
    detail::require(attn.size() == 2 * d, "gat_attention: attention vector must have 2*out entries");
    detail::require(adjacency.rows() == n && adjacency.cols() == n, "gat_attention: adjacency shape");
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s = hw * attn.head(d).transpose();
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> t = hw * attn.tail(d).transpose();
    Dense<Scalar> alpha = Dense<Scalar>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        Scalar best = -std::numeric_limits<Scalar>::infinity();
        for (Eigen::Index j = 0; j < n; ++j)
            if (i == j || adjacency(i, j) != Scalar(0)) best = std::max(best, activate(s(i) + t(j), Activation::leaky_relu));
        Scalar total(0);
        for (Eigen::Index j = 0; j < n; ++j)
            if (i == j || adjacency(i, j) != Scalar(0)) {
                alpha(i, j) = std::exp(activate(s(i) + t(j), Activation::leaky_relu) - best);
                total += alpha(i, j);
            }
        alpha.row(i) /= total;
    }
    return alpha;
}

/// h_i' = sigma(sum_j alpha_ij h_j Theta).
template <typename DH, typename DA, typename DT>
Dense<typename DH::Scalar> gat_forward(const Eigen::MatrixBase<DH>& h, const Eigen::MatrixBase<DA>& adjacency,
                                       const Eigen::MatrixBase<DT>& theta, const RowVec<typename DH::Scalar>& attn,
                                       Activation act) {
    detail::require(h.cols() == theta.rows(), "gat_forward: feature/weight mismatch");
    const Dense<typename DH::Scalar> hw = h * theta;
    return activate(gat_attention(hw, adjacency, attn) * hw, act);
}

template <typename Scalar>
struct GgnnWeights {
    Dense<Scalar> w, u, wz, uz, wr, ur;  // d x d
    RowVec<Scalar> b;                    // 1 x d
};

/// One GRU step per iteration:
///   a  = A H + b
///   z  = sigmoid(a Wz + H Uz)
///   r  = sigmoid(a Wr + H Ur)
///   h~ = tanh(a W + (r . H) U)
///   H' = (1 - z) . H + z . h~
template <typename DH, typename DA>
Dense<typename DH::Scalar> ggnn_forward(const Eigen::MatrixBase<DH>& h0, const Eigen::MatrixBase<DA>& a,
                                        const GgnnWeights<typename DH::Scalar>& p, std::size_t steps) {
    using Scalar = typename DH::Scalar;
    detail::require(steps >= 1, "ggnn_forward: need at least one step");
    detail::require(a.rows() == a.cols() && a.cols() == h0.rows(), "ggnn_forward: adjacency/state mismatch");
    detail::require(p.w.rows() == h0.cols() && p.b.size() == h0.cols(), "ggnn_forward: weight/state mismatch");
    Dense<Scalar> h = h0;
    for (std::size_t t = 0; t < steps; ++t) {
        const Dense<Scalar> agg = (a * h).rowwise() + p.b;
        const Dense<Scalar> z = activate(agg * p.wz + h * p.uz, Activation::sigmoid);
        const Dense<Scalar> r = activate(agg * p.wr + h * p.ur, Activation::sigmoid);
        const Dense<Scalar> cand = activate(agg * p.w + r.cwiseProduct(h) * p.u, Activation::tanh);
        h = h + z.cwiseProduct(cand - h);
    }
    return h;
}

/// sigma(x W + b), x is rows-of-samples.
template <typename DX, typename DW>
Dense<typename DX::Scalar> fc_forward(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& weight,
                                      const RowVec<typename DX::Scalar>& bias, Activation act) {
    detail::require(x.cols() == weight.rows(), "fc_forward: input/weight mismatch");
    detail::require(bias.size() == weight.cols(), "fc_forward: bias/weight mismatch");
    return activate((x * weight).rowwise() + bias, act);
}

/// Row-wise softmax with max subtraction.
template <typename Derived>
Dense<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    Dense<Scalar> out = logits;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        out.row(i).array() -= out.row(i).maxCoeff();
        out.row(i) = out.row(i).array().exp();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

}  // namespace pgl::nn
