#include "pgl/nn/layers.hpp"

#include <cmath>

namespace pgl::nn {

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix m(fan_in, fan_out);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform(rng, -limit, limit);
    return m;
}

namespace {

Parameter make_param(const std::string& name, Matrix value) {
    Parameter p{name, std::move(value), {}};
    p.zero_grad();
    return p;
}

}  // namespace

GcnLayer GcnLayer::init(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
    return {make_param(name + ".theta", glorot_uniform(in, out, rng)), act};
}

Var GcnLayer::forward(Tape& tape, Var h, Var a_hat) {
    detail::require(h.cols() == theta.value.rows(), "GcnLayer: input width mismatch");
    return activate(matmul(a_hat, matmul(h, tape.parameter(theta))), activation);
}

GatLayer GatLayer::init(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
    GatLayer layer;
    layer.theta = make_param(name + ".theta", glorot_uniform(in, out, rng));
    layer.attention = make_param(name + ".attention", glorot_uniform(1, 2 * out, rng));
    layer.activation = act;
    return layer;
}

Var GatLayer::forward(Tape& tape, Var h, const Matrix& mask) {
    detail::require(h.cols() == theta.value.rows(), "GatLayer: input width mismatch");
    Var hw = matmul(h, tape.parameter(theta));
    Var alpha = gat_attention(hw, tape.parameter(attention), mask);
    return activate(matmul(alpha, hw), activation);
}

GgnnLayer GgnnLayer::init(const std::string& name, Eigen::Index width, std::size_t steps, Rng& rng) {
    GgnnLayer layer;
    layer.w = make_param(name + ".w", glorot_uniform(width, width, rng));
    layer.u = make_param(name + ".u", glorot_uniform(width, width, rng));
    layer.wz = make_param(name + ".wz", glorot_uniform(width, width, rng));
    layer.uz = make_param(name + ".uz", glorot_uniform(width, width, rng));
    layer.wr = make_param(name + ".wr", glorot_uniform(width, width, rng));
    layer.ur = make_param(name + ".ur", glorot_uniform(width, width, rng));
    layer.b = make_param(name + ".b", Matrix::Zero(1, width));
    layer.steps = steps;
    return layer;
}

Var GgnnLayer::forward(Tape& tape, Var h, Var propagation) {
    detail::require(h.cols() == w.value.rows(), "GgnnLayer: state width mismatch");
    if (steps < 1) throw ShapeError("GgnnLayer: need at least one step");
    Var vw = tape.parameter(w), vu = tape.parameter(u);
    Var vwz = tape.parameter(wz), vuz = tape.parameter(uz);
    Var vwr = tape.parameter(wr), vur = tape.parameter(ur);
    Var vb = tape.parameter(b);
    for (std::size_t t = 0; t < steps; ++t) {
        Var agg = add_row(matmul(propagation, h), vb);
        Var z = activate(add(matmul(agg, vwz), matmul(h, vuz)), Activation::sigmoid);
        Var r = activate(add(matmul(agg, vwr), matmul(h, vur)), Activation::sigmoid);
        Var cand = activate(add(matmul(agg, vw), matmul(hadamard(r, h), vu)), Activation::tanh);
        h = add(h, hadamard(z, sub(cand, h)));
    }
    return h;
}

FcLayer FcLayer::init(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
    FcLayer layer;
    layer.weight = make_param(name + ".weight", glorot_uniform(in, out, rng));
    layer.bias = make_param(name + ".bias", Matrix::Zero(1, out));
    layer.activation = act;
    return layer;
}

Var FcLayer::forward(Tape& tape, Var x) {
    detail::require(x.cols() == weight.value.rows(), "FcLayer: input width mismatch");
    return activate(add_row(matmul(x, tape.parameter(weight)), tape.parameter(bias)), activation);
}

void zero_grads(std::span<Parameter* const> params) {
    for (auto* p : params) p->zero_grad();
}

void Adam::step(std::span<Parameter* const> params) {
    if (m_.empty()) {
        for (auto* p : params) {
            m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        }
    }
    if (m_.size() != params.size()) throw ShapeError("Adam: parameter list changed between steps");
    for (std::size_t k = 0; k < params.size(); ++k) {
        const auto& p = *params[k];
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols() || m_[k].rows() != p.value.rows() ||
            m_[k].cols() != p.value.cols())
            throw ShapeError("Adam: gradient shape does not match parameter '" + p.name + "'");
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = *params[k];
        Matrix g = p.grad;
        if (config_.weight_decay != 0.0) g += config_.weight_decay * p.value;
        m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * g;
        v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * g.cwiseAbs2();
        p.value.array() -= config_.learning_rate * (m_[k].array() / c1) /
                           ((v_[k].array() / c2).sqrt() + config_.epsilon);
    }
}

}  // namespace pgl::nn
