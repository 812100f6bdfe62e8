#include "pgl/mapper.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "pgl/errors.hpp"

namespace pgl {
namespace {

// Chains are CPU work and wide loops GPU work; degree features tell them apart.
std::vector<KernelSample> toy_corpus(std::size_t per_class) {
    std::vector<KernelSample> out;
    for (std::size_t k = 0; k < 2 * per_class; ++k) {
        const bool gpu = k % 2 == 1;
        auto g = build_dfg(generate_synthetic_trace(gpu ? Pattern::parallel_loop : Pattern::sequential_chain,
                                                    gpu ? 8 + k % 5 : 12 + k % 7, k));
        auto x = degree_features(g);
        out.push_back({"s" + std::to_string(k), std::move(g), std::move(x), gpu ? Device::gpu : Device::cpu});
    }
    return out;
}

MapperConfig quick_config(Backbone b) {
    MapperConfig c;
    c.backbone = b;
    c.neurons = 16;
    c.epochs = 40;
    c.learning_rate = 0.01;
    return c;
}

TEST(Mapper, UntrainedModelIsIndifferentAndPicksCpu) {
    const auto corpus = toy_corpus(1);
    const auto model = MapperModel::init(2, quick_config(Backbone::gcn), 1);
    const auto p = classify(corpus[1], model);
    EXPECT_DOUBLE_EQ(p.probabilities[0], 0.5);
    EXPECT_EQ(p.label, Device::cpu);
}

TEST(Mapper, SeparableToyReachesFullTrainingAccuracy) {
    const auto corpus = toy_corpus(10);
    for (auto b : {Backbone::gcn, Backbone::gat, Backbone::ggnn}) {
        const auto result = train(corpus, quick_config(b), 3);
        ASSERT_EQ(result.curve.size(), 40u);
        EXPECT_LT(result.curve.back().loss, result.curve.front().loss) << to_string(b);
        std::size_t right = 0;
        for (const auto& s : corpus) right += classify(s, result.model).label == s.label;
        EXPECT_EQ(right, corpus.size()) << to_string(b);
    }
}

TEST(Mapper, TrainingIsDeterministic) {
    const auto corpus = toy_corpus(4);
    const auto a = train(corpus, quick_config(Backbone::ggnn), 9);
    const auto b = train(corpus, quick_config(Backbone::ggnn), 9);
    EXPECT_EQ(a.curve.back().loss, b.curve.back().loss);
}

TEST(Mapper, RejectsDegenerateTrainingData) {
    auto corpus = toy_corpus(2);
    std::vector<KernelSample> one_class;
    for (auto& s : corpus)
        if (s.label == Device::cpu) one_class.push_back(s);
    EXPECT_THROW(train(one_class, quick_config(Backbone::gcn), 1), TrainingDataError);
    EXPECT_THROW(train(std::vector<KernelSample>{corpus[0]}, quick_config(Backbone::gcn), 1), TrainingDataError);
}

TEST(Mapper, FeatureWidthMismatchIsShapeError) {
    const auto corpus = toy_corpus(1);
    const auto model = MapperModel::init(3, quick_config(Backbone::gcn), 1);
    EXPECT_THROW(classify(corpus[0], model), ShapeError);
}

TEST(Mapper, CheckpointRoundTripPreservesPredictions) {
    const auto corpus = toy_corpus(4);
    for (auto b : {Backbone::gcn, Backbone::gat, Backbone::ggnn}) {
        auto cfg = quick_config(b);
        cfg.epochs = 5;
        cfg.hidden_layers = 2;
        const auto model = train(corpus, cfg, 2).model;
        std::stringstream s;
        nn::write_checkpoint(model.to_checkpoint(), s);
        const auto back = MapperModel::from_checkpoint(nn::read_checkpoint(s));
        EXPECT_EQ(back.config.backbone, b);
        EXPECT_EQ(back.config.hidden_layers, 2u);
        for (const auto& smp : corpus)
            EXPECT_EQ(classify(smp, back).probabilities, classify(smp, model).probabilities);
    }
}

TEST(Mapper, ConfigValidation) {
    MapperConfig c;
    c.neurons = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = MapperConfig{};
    c.learning_rate = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    EXPECT_EQ(parse_backbone("gat"), Backbone::gat);
    EXPECT_FALSE(parse_backbone("mlp"));
}

TEST(Metrics, ConfusionAndMacroScores) {
    using D = Device;
    const std::vector<D> truth{D::cpu, D::cpu, D::cpu, D::gpu, D::gpu};
    const std::vector<D> pred{D::cpu, D::cpu, D::gpu, D::gpu, D::cpu};
    const auto m = compute_metrics(truth, pred);
    EXPECT_EQ(m.confusion[0][0], 2u);
    EXPECT_EQ(m.confusion[0][1], 1u);
    EXPECT_EQ(m.confusion[1][0], 1u);
    EXPECT_EQ(m.confusion[1][1], 1u);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
    // CPU: p = 2/3, r = 2/3. GPU: p = 1/2, r = 1/2.
    EXPECT_NEAR(m.precision, (2.0 / 3 + 0.5) / 2, 1e-12);
    EXPECT_NEAR(m.recall, (2.0 / 3 + 0.5) / 2, 1e-12);
    EXPECT_NEAR(m.f1, (2.0 / 3 + 0.5) / 2, 1e-12);
}

TEST(Metrics, PerfectPrediction) {
    const std::vector<Device> t{Device::cpu, Device::gpu};
    const auto m = compute_metrics(t, t);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.f1, 1.0);
}

TEST(StratifiedFolds, BalancedPartitionOfIndices) {
    std::vector<Device> labels;
    for (int k = 0; k < 23; ++k) labels.push_back(k < 13 ? Device::cpu : Device::gpu);
    const auto folds = stratified_folds(labels, 5, 7);
    ASSERT_EQ(folds.size(), 5u);
    std::set<std::size_t> seen;
    std::size_t lo_cpu = 99, hi_cpu = 0;
    for (const auto& f : folds) {
        std::size_t cpu = 0;
        for (auto i : f) {
            EXPECT_TRUE(seen.insert(i).second);
            cpu += labels[i] == Device::cpu;
        }
        lo_cpu = std::min(lo_cpu, cpu);
        hi_cpu = std::max(hi_cpu, cpu);
    }
    EXPECT_EQ(seen.size(), labels.size());
    EXPECT_LE(hi_cpu - lo_cpu, 1u);
    EXPECT_EQ(stratified_folds(labels, 5, 7), folds);
}

TEST(CrossValidate, OracleTrainerScoresPerfectly) {
    const auto corpus = toy_corpus(5);
    const Trainer oracle = [](const std::vector<const KernelSample*>& train, std::size_t) -> Predictor {
        EXPECT_EQ(train.size(), 8u);
        return [](const KernelSample& s) { return s.label; };
    };
    const auto r = cross_validate(corpus, 5, oracle, 1);
    EXPECT_EQ(r.folds.size(), 5u);
    EXPECT_EQ(r.pooled.total, 10u);
    EXPECT_DOUBLE_EQ(r.accuracy_mean, 1.0);
    EXPECT_DOUBLE_EQ(r.accuracy_std, 0.0);
}

TEST(CrossValidate, RejectsTooFewSamples) {
    const auto corpus = toy_corpus(1);
    EXPECT_THROW(cross_validate(corpus, 5, quick_config(Backbone::gcn), 1), InvalidArgument);
    EXPECT_THROW(cross_validate(corpus, 1, quick_config(Backbone::gcn), 1), InvalidArgument);
}

TEST(Ablation, EmptyGridRejectedAndRowsPerValue) {
    std::vector<LabeledGraph> corpus;
    for (auto& s : toy_corpus(5)) corpus.push_back({s.name, s.graph, s.label});
    AblationBase base;
    base.features = FeatureKind::degree;
    base.mapper = quick_config(Backbone::gcn);
    base.mapper.epochs = 3;
    EXPECT_THROW(ablation_sweep(corpus, AblationGrid{}, base, 1), InvalidArgument);
    AblationGrid grid;
    grid.features = {FeatureKind::degree, FeatureKind::weight};
    grid.repetitions = 2;
    const auto rows = ablation_sweep(corpus, grid, base, 1);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].value, "weight");
    EXPECT_EQ(rows[0].accuracies.size(), 2u);
}

}  // namespace
}  // namespace pgl
