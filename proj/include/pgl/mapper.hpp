#pragma once

// Graph-level CPU/GPU classifier: a GNN backbone, mean-pool readout and two
// fully connected layers, plus training, cross-validation and ablation.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pgl/dfg.hpp"
#include "pgl/fractal.hpp"
#include "pgl/nn/checkpoint.hpp"
#include "pgl/nn/layers.hpp"
#include "pgl/sched.hpp"

namespace pgl {

enum class Backbone { gcn, gat, ggnn };

std::string_view to_string(Backbone b);
std::optional<Backbone> parse_backbone(std::string_view text);

struct KernelSample {
    std::string name;
    DynamicDataflowGraph graph;
    RowMatrix features;  // one row per node
    Device label = Device::cpu;
};

struct MapperConfig {
    Backbone backbone = Backbone::ggnn;
    std::size_t neurons = 64;
    std::size_t hidden_layers = 1;  // stacked backbone layers
    std::size_t ggnn_steps = 4;
    std::size_t epochs = 20;
    double learning_rate = 2e-3;
    double weight_decay = 0.0;
    std::size_t batch_size = 8;  // 0 = full batch
    bool class_weights = true;   // inverse class frequency

    void validate() const;
};

struct MapperModel {
    MapperConfig config;
    Standardizer standardizer;
    std::optional<nn::FcLayer> input;  // GGNN only: lifts features to `neurons`
    std::vector<nn::GcnLayer> gcn;
    std::vector<nn::GatLayer> gat;
    std::vector<nn::GgnnLayer> ggnn;
    nn::FcLayer fc1;
    nn::FcLayer fc2;  // zero-initialized, so an untrained model outputs (0.5, 0.5)

    /// Identity standardizer; call fit_standardizer before training.
    static MapperModel init(std::size_t input_width, const MapperConfig& config, std::uint64_t seed);

    std::size_t input_width() const { return standardizer.width(); }
    std::vector<nn::Parameter*> parameters();

    nn::Checkpoint to_checkpoint() const;
    /// Throws ShapeError or LookupError when the checkpoint does not describe a model.
    static MapperModel from_checkpoint(const nn::Checkpoint& ckpt);
};

struct Prediction {
    Device label = Device::cpu;
    std::array<double, 2> probabilities{0.5, 0.5};  // {CPU, GPU}
};

/// Plain forward pass; the GPU wins only on a strictly larger probability.
/// Throws ShapeError when the feature width differs from the model's.
Prediction classify(const DynamicDataflowGraph& graph, const RowMatrix& features, const MapperModel& model);
inline Prediction classify(const KernelSample& s, const MapperModel& m) { return classify(s.graph, s.features, m); }

/// Class logits recorded on `tape` for one (already standardized) sample.
nn::Var mapper_logits(nn::Tape& tape, MapperModel& model, const DynamicDataflowGraph& graph, const RowMatrix& x);

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    MapperModel model;
    std::vector<EpochStats> curve;
};

/// Fits the standardizer on the training features, then Adam on weighted
/// cross-entropy. Throws TrainingDataError for fewer than two samples or a
/// single class.
TrainResult train(const std::vector<const KernelSample*>& samples, const MapperConfig& config, std::uint64_t seed);
TrainResult train(const std::vector<KernelSample>& samples, const MapperConfig& config, std::uint64_t seed);

struct Metrics {
    std::size_t total = 0;
    std::array<std::array<std::size_t, 2>, 2> confusion{};  // [truth][predicted]
    double accuracy = 0.0;
    double precision = 0.0;  // macro over CPU and GPU
    double recall = 0.0;
    double f1 = 0.0;
};

Metrics compute_metrics(const std::vector<Device>& truth, const std::vector<Device>& predicted);

/// Stratified fold assignment: each class is shuffled and dealt round-robin,
/// so class counts per fold differ by at most one. Returns test indices.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<Device>& labels, std::size_t folds,
                                                       std::uint64_t seed);

using Predictor = std::function<Device(const KernelSample&)>;
/// Builds a predictor from the training part of fold `fold`.
using Trainer = std::function<Predictor(const std::vector<const KernelSample*>& train, std::size_t fold)>;

struct FoldResult {
    std::vector<std::size_t> test;
    std::vector<Device> predicted;
    Metrics metrics;
};

struct CvReport {
    std::vector<FoldResult> folds;
    Metrics pooled;  // over the concatenated held-out predictions
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
};

/// Throws InvalidArgument when folds < 2 or there are fewer samples than folds.
CvReport cross_validate(const std::vector<KernelSample>& samples, std::size_t folds, const Trainer& trainer,
                        std::uint64_t seed);
CvReport cross_validate(const std::vector<KernelSample>& samples, std::size_t folds, const MapperConfig& config,
                        std::uint64_t seed);

/// A labeled graph without features, for sweeps that recompute them.
struct LabeledGraph {
    std::string name;
    DynamicDataflowGraph graph;
    Device label = Device::cpu;
};

struct AblationGrid {
    std::vector<std::size_t> walkers;
    std::vector<double> cutoff;
    std::vector<Backbone> model;
    std::vector<std::size_t> neurons;
    std::vector<std::size_t> hidden_layers;
    std::vector<FeatureKind> features;
    std::size_t repetitions = 5;
    std::size_t folds = 5;

    bool empty() const;
};

struct AblationBase {
    WalkParams walk;
    MapperConfig mapper;
    FeatureKind features = FeatureKind::multifractal;
};

struct AblationRow {
    std::string factor;
    std::string value;
    std::vector<double> accuracies;  // one per repetition
    double mean = 0.0;
    double std = 0.0;
    Metrics pooled;  // held-out predictions of every repetition
};

/// One factor at a time around `base`. Repetition r trains on all folds but
/// r mod F of a stratified F-fold split and tests on that fold; with
/// repetitions == folds a row is exactly an F-fold cross-validation.
/// Throws InvalidArgument for an empty grid.
std::vector<AblationRow> ablation_sweep(const std::vector<LabeledGraph>& corpus, const AblationGrid& grid,
                                        const AblationBase& base, std::uint64_t seed);

}  // namespace pgl
