#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgl/nn/autograd.hpp"
#include "pgl/rng.hpp"

namespace pgl::nn {

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);

struct GcnLayer {
    Parameter theta;
    Activation activation = Activation::relu;

    static GcnLayer init(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act, Rng& rng);
    Var forward(Tape& tape, Var h, Var a_hat);
    std::vector<Parameter*> parameters() { return {&theta}; }
};

struct GatLayer {
    Parameter theta;
    Parameter attention;  // 1 x 2*out: source half then neighbor half
    Activation activation = Activation::relu;

    static GatLayer init(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act, Rng& rng);
    /// `mask` holds the neighborhoods; self-loops are implied.
    Var forward(Tape& tape, Var h, const Matrix& mask);
    std::vector<Parameter*> parameters() { return {&theta, &attention}; }
};

struct GgnnLayer {
    Parameter w, u, wz, uz, wr, ur, b;
    std::size_t steps = 4;

    static GgnnLayer init(const std::string& name, Eigen::Index width, std::size_t steps, Rng& rng);
    Var forward(Tape& tape, Var h, Var propagation);
    std::vector<Parameter*> parameters() { return {&w, &u, &wz, &uz, &wr, &ur, &b}; }
    GgnnWeights<double> weights() const { return {w.value, u.value, wz.value, uz.value, wr.value, ur.value, b.value}; }
};

struct FcLayer {
    Parameter weight;  // in x out
    Parameter bias;    // 1 x out
    Activation activation = Activation::identity;

    static FcLayer init(const std::string& name, Eigen::Index in, Eigen::Index out, Activation act, Rng& rng);
    Var forward(Tape& tape, Var x);
    std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
};

/// Adam with bias correction. Moments are keyed by position in the
/// parameter list, so the same list must be passed on every step.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Applies one update from each parameter's grad. Throws ShapeError when a
    /// gradient does not match its parameter.
    void step(std::span<Parameter* const> params);
    std::size_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    std::vector<Matrix> m_, v_;
    std::size_t t_ = 0;
};

void zero_grads(std::span<Parameter* const> params);

}  // namespace pgl::nn
