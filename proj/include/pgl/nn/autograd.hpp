#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every op
// of one forward pass; backward() walks it in reverse and accumulates the
// gradient of a 1x1 loss into each Parameter reached.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pgl/nn/dense.hpp"

namespace pgl::nn {

/// Trainable matrix and its accumulated gradient.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    void zero_grad() { grad = Matrix::Zero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a recorded value. Cheap to copy; valid while its tape lives.
class Var {
public:
    Var() = default;
    const Matrix& value() const;
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    Tape* tape() const { return tape_; }
    std::size_t index() const { return index_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

class Tape {
public:
    using Backprop = std::function<void(Tape&, std::size_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Value that receives no gradient.
    Var constant(Matrix value);
    /// Leaf bound to `p`; backward() adds into p.grad.
    Var parameter(Parameter& p);

    /// Records an op result. `backprop(tape, self)` reads grad(self) and
    /// calls accumulate() on the inputs.
    Var record(Matrix value, std::vector<std::size_t> inputs, Backprop backprop);

    /// Seeds d loss = 1 and propagates. Throws StateError if `loss` was not
    /// produced by this tape, is not 1x1, or backward already ran.
    void backward(Var loss);

    const Matrix& value(std::size_t i) const { return nodes_[i].value; }
    const Matrix& grad(std::size_t i) const;
    bool needs_grad(std::size_t i) const { return nodes_[i].needs_grad; }
    void accumulate(std::size_t i, const Matrix& g);
    template <typename Expr>
    void accumulate_expr(std::size_t i, const Expr& g) {
        auto& node = nodes_[i];
        if (!node.needs_grad) return;
        if (node.grad.size() == 0)
            node.grad = g;
        else
            node.grad += g;
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        std::vector<std::size_t> inputs;
        Backprop backprop;
        Parameter* param = nullptr;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Ops. All operands must come from the same tape.
Var matmul(Var a, Var b);
Var matmul_transposed(Var a, Var b);  // a * b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcast a 1 x d row over every row of a
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var one_minus(Var a);
Var activate(Var a, Activation act);
Var sum(Var a);        // 1 x 1
Var mean_rows(Var a);  // 1 x d
Var square(Var a);

/// Row-softmaxed GAT coefficients over the closed neighborhoods of `mask`.
Var gat_attention(Var hw, Var attn, const Matrix& mask);

/// Mean (weighted) softmax cross-entropy; logits are rows of class scores.
Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights = {});

/// Mean elementwise binary cross-entropy of sigmoid(logits) against 0/1
/// `targets`, with positive entries weighted by `pos_weight`.
Var bce_with_logits(Var logits, const Matrix& targets, double pos_weight);

}  // namespace pgl::nn
