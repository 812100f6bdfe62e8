#include "pgl/nn/autograd.hpp"

#include <cmath>

namespace pgl::nn {

namespace {

Tape& same_tape(Var a, Var b) {
    if (!a.tape() || a.tape() != b.tape()) throw StateError("operands belong to different tapes");
    return *a.tape();
}

Tape& tape_of(Var a) {
    if (!a.tape()) throw StateError("operand is not recorded on a tape");
    return *a.tape();
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

std::optional<Activation> parse_activation(std::string_view text) {
    for (auto a : {Activation::identity, Activation::relu, Activation::leaky_relu, Activation::sigmoid,
                   Activation::tanh})
        if (to_string(a) == text) return a;
    return std::nullopt;
}

const Matrix& Var::value() const {
    if (!tape_) throw StateError("empty Var");
    return tape_->value(index_);
}

const Matrix& Var::grad() const {
    if (!tape_) throw StateError("empty Var");
    return tape_->grad(index_);
}

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, Backprop backprop) {
    if (!value.allFinite()) throw Error("non-finite value produced during forward pass");
    bool needs = false;
    for (auto i : inputs) needs = needs || nodes_.at(i).needs_grad;
    nodes_.push_back(Node{std::move(value), {}, std::move(inputs), needs ? std::move(backprop) : Backprop{}, nullptr,
                          needs});
    return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t i) const {
    const auto& node = nodes_.at(i);
    if (node.grad.size() == 0 && node.value.size() != 0)
        throw StateError("no gradient recorded for this value; call backward() first");
    return node.grad;
}

void Tape::accumulate(std::size_t i, const Matrix& g) { accumulate_expr(i, g); }

void Tape::backward(Var loss) {
    if (loss.tape() != this || loss.index() >= nodes_.size())
        throw StateError("backward() called without a recorded forward pass");
    if (consumed_) throw StateError("backward() already ran on this tape");
    const auto& root = nodes_[loss.index()];
    if (root.value.rows() != 1 || root.value.cols() != 1) throw StateError("backward() needs a 1x1 loss");
    consumed_ = true;
    if (!root.needs_grad) return;
    nodes_[loss.index()].grad = Matrix::Constant(1, 1, 1.0);
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
        auto& node = nodes_[i];
        if (node.grad.size() == 0) continue;
        if (node.backprop) node.backprop(*this, i);
        if (node.param) {
            if (node.param->grad.rows() != node.value.rows() || node.param->grad.cols() != node.value.cols())
                node.param->zero_grad();
            node.param->grad += node.grad;
        }
    }
}

Var matmul(Var a, Var b) {
    auto& t = same_tape(a, b);
    detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
    const auto ia = a.index(), ib = b.index();
    return t.record(a.value() * b.value(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ia)) t.accumulate_expr(ia, g * t.value(ib).transpose());
        if (t.needs_grad(ib)) t.accumulate_expr(ib, t.value(ia).transpose() * g);
    });
}

Var matmul_transposed(Var a, Var b) {
    auto& t = same_tape(a, b);
    detail::require(a.cols() == b.cols(), "matmul_transposed: column counts differ");
    const auto ia = a.index(), ib = b.index();
    return t.record(a.value() * b.value().transpose(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ia)) t.accumulate_expr(ia, g * t.value(ib));
        if (t.needs_grad(ib)) t.accumulate_expr(ib, g.transpose() * t.value(ia));
    });
}

Var add(Var a, Var b) {
    auto& t = same_tape(a, b);
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
    const auto ia = a.index(), ib = b.index();
    return t.record(a.value() + b.value(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate(ib, t.grad(self));
    });
}

Var sub(Var a, Var b) {
    auto& t = same_tape(a, b);
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
    const auto ia = a.index(), ib = b.index();
    return t.record(a.value() - b.value(), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad(self));
        t.accumulate_expr(ib, -t.grad(self));
    });
}

Var add_row(Var a, Var row) {
    auto& t = same_tape(a, row);
    detail::require(row.rows() == 1 && row.cols() == a.cols(), "add_row: bias must be 1 x cols");
    const auto ia = a.index(), ir = row.index();
    Matrix v = a.value().rowwise() + row.value().row(0);
    return t.record(std::move(v), {ia, ir}, [ia, ir](Tape& t, std::size_t self) {
        t.accumulate(ia, t.grad(self));
        if (t.needs_grad(ir)) t.accumulate_expr(ir, t.grad(self).colwise().sum());
    });
}

Var hadamard(Var a, Var b) {
    auto& t = same_tape(a, b);
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shape mismatch");
    const auto ia = a.index(), ib = b.index();
    return t.record(a.value().cwiseProduct(b.value()), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.needs_grad(ia)) t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
        if (t.needs_grad(ib)) t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
    });
}

Var scale(Var a, double s) {
    auto& t = tape_of(a);
    const auto ia = a.index();
    return t.record(a.value() * s, {ia}, [ia, s](Tape& t, std::size_t self) { t.accumulate_expr(ia, t.grad(self) * s); });
}

Var one_minus(Var a) {
    auto& t = tape_of(a);
    const auto ia = a.index();
    Matrix v = (1.0 - a.value().array()).matrix();
    return t.record(std::move(v), {ia}, [ia](Tape& t, std::size_t self) { t.accumulate_expr(ia, -t.grad(self)); });
}

Var activate(Var a, Activation act) {
    auto& t = tape_of(a);
    const auto ia = a.index();
    return t.record(nn::activate(a.value(), act), {ia}, [ia, act](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& x = t.value(ia);
        const auto& y = t.value(self);
        switch (act) {
            case Activation::identity: t.accumulate(ia, g); break;
            case Activation::relu:
                t.accumulate_expr(ia, (x.array() > 0.0).select(g, 0.0).matrix());
                break;
            case Activation::leaky_relu:
                t.accumulate_expr(ia, (x.array() > 0.0).select(g, kLeakySlope * g).matrix());
                break;
            case Activation::sigmoid:
                t.accumulate_expr(ia, (g.array() * y.array() * (1.0 - y.array())).matrix());
                break;
            case Activation::tanh:
                t.accumulate_expr(ia, (g.array() * (1.0 - y.array().square())).matrix());
                break;
        }
    });
}

Var sum(Var a) {
    auto& t = tape_of(a);
    const auto ia = a.index();
    return t.record(Matrix::Constant(1, 1, a.value().sum()), {ia}, [ia](Tape& t, std::size_t self) {
        const auto& x = t.value(ia);
        t.accumulate_expr(ia, Matrix::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
    });
}

Var mean_rows(Var a) {
    auto& t = tape_of(a);
    detail::require(a.rows() > 0, "mean_rows: no rows");
    const auto ia = a.index();
    const double n = static_cast<double>(a.rows());
    Matrix v = a.value().colwise().sum() / n;
    return t.record(std::move(v), {ia}, [ia, n](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        t.accumulate_expr(ia, Matrix(g.replicate(t.value(ia).rows(), 1) / n));
    });
}

Var square(Var a) {
    auto& t = tape_of(a);
    const auto ia = a.index();
    return t.record(a.value().cwiseAbs2(), {ia}, [ia](Tape& t, std::size_t self) {
        t.accumulate_expr(ia, (2.0 * t.grad(self).array() * t.value(ia).array()).matrix());
    });
}

Var gat_attention(Var hw, Var attn, const Matrix& mask) {
    auto& t = same_tape(hw, attn);
    const auto n = hw.rows();
    const auto d = hw.cols();
    detail::require(attn.rows() == 1 && attn.cols() == 2 * d, "gat_attention: attention vector must be 1 x 2*out");
    detail::require(mask.rows() == n && mask.cols() == n, "gat_attention: mask shape");
    const auto ih = hw.index(), ia = attn.index();

    const RowVec<double> a = attn.value().row(0);
    Matrix alpha = nn::gat_attention(hw.value(), mask, a);
    return t.record(std::move(alpha), {ih, ia}, [ih, ia, mask, n, d](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& alpha = t.value(self);
        const auto& h = t.value(ih);
        const RowVec<double> a = t.value(ia).row(0);
        const Eigen::VectorXd s = h * a.head(d).transpose();
        const Eigen::VectorXd u = h * a.tail(d).transpose();
        Eigen::VectorXd ds = Eigen::VectorXd::Zero(n), du = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double inner = alpha.row(i).dot(g.row(i));
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i != j && mask(i, j) == 0.0) continue;
                const double de = alpha(i, j) * (g(i, j) - inner);
                const double slope = s(i) + u(j) > 0.0 ? 1.0 : kLeakySlope;
                ds(i) += de * slope;
                du(j) += de * slope;
            }
        }
        if (t.needs_grad(ih)) t.accumulate_expr(ih, Matrix(ds * a.head(d) + du * a.tail(d)));
        if (t.needs_grad(ia)) {
            Matrix ga(1, 2 * d);
            ga.leftCols(d) = ds.transpose() * h;
            ga.rightCols(d) = du.transpose() * h;
            t.accumulate(ia, ga);
        }
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
    auto& t = tape_of(logits);
    const auto n = logits.rows();
    detail::require(static_cast<Eigen::Index>(targets.size()) == n, "softmax_cross_entropy: one target per row");
    detail::require(weights.empty() || weights.size() == targets.size(), "softmax_cross_entropy: weight count");
    Matrix probs = nn::softmax(logits.value());
    std::vector<double> w(targets.size(), 1.0);
    if (!weights.empty()) w.assign(weights.begin(), weights.end());
    double total_w = 0.0, loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = targets[static_cast<std::size_t>(i)];
        detail::require(c >= 0 && c < logits.cols(), "softmax_cross_entropy: target out of range");
        // log p via log-sum-exp on the raw logits keeps tiny probabilities exact.
        const auto row = logits.value().row(i);
        const double m = row.maxCoeff();
        const double lse = m + std::log((row.array() - m).exp().sum());
        loss += w[i] * (lse - row(c));
        total_w += w[i];
    }
    loss /= total_w;
    const auto il = logits.index();
    std::vector<int> tgt(targets.begin(), targets.end());
    return t.record(Matrix::Constant(1, 1, loss), {il},
                    [il, probs = std::move(probs), tgt = std::move(tgt), w = std::move(w), total_w](Tape& t,
                                                                                                   std::size_t self) {
                        Matrix g = probs;
                        for (Eigen::Index i = 0; i < g.rows(); ++i) {
                            g(i, tgt[i]) -= 1.0;
                            g.row(i) *= w[i] / total_w;
                        }
                        t.accumulate_expr(il, g * t.grad(self)(0, 0));
                    });
}

Var bce_with_logits(Var logits, const Matrix& targets, double pos_weight) {
    auto& t = tape_of(logits);
    detail::require(targets.rows() == logits.rows() && targets.cols() == logits.cols(),
                    "bce_with_logits: target shape mismatch");
    const auto& x = logits.value();
    const double count = static_cast<double>(x.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const double y = targets(i, j);
            loss += pos_weight * y * softplus(-x(i, j)) + (1.0 - y) * softplus(x(i, j));
        }
    loss /= count;
    const auto il = logits.index();
    return t.record(Matrix::Constant(1, 1, loss), {il}, [il, targets, pos_weight, count](Tape& t, std::size_t self) {
        const auto& x = t.value(il);
        const Matrix sig = nn::activate(x, Activation::sigmoid);
        Matrix g = (pos_weight * targets.array() * (sig.array() - 1.0) + (1.0 - targets.array()) * sig.array()) / count;
        t.accumulate_expr(il, g * t.grad(self)(0, 0));
    });
}

}  // namespace pgl::nn
