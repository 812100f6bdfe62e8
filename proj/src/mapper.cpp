#include "pgl/mapper.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>

#include "pgl/errors.hpp"
#include "pgl/rng.hpp"

namespace pgl {

std::string_view to_string(Backbone b) {
    switch (b) {
        case Backbone::gcn: return "gcn";
        case Backbone::gat: return "gat";
        case Backbone::ggnn: return "ggnn";
    }
    return "?";
}

std::optional<Backbone> parse_backbone(std::string_view text) {
    if (text == "gcn") return Backbone::gcn;
    if (text == "gat") return Backbone::gat;
    if (text == "ggnn") return Backbone::ggnn;
    return std::nullopt;
}

void MapperConfig::validate() const {
    if (neurons == 0) throw InvalidArgument("mapper: neurons must be positive");
    if (hidden_layers == 0) throw InvalidArgument("mapper: hidden_layers must be positive");
    if (backbone == Backbone::ggnn && ggnn_steps == 0) throw InvalidArgument("mapper: ggnn_steps must be positive");
    if (!(learning_rate > 0.0)) throw InvalidArgument("mapper: learning_rate must be positive");
    if (weight_decay < 0.0) throw InvalidArgument("mapper: weight_decay must be non-negative");
}

namespace {

RowMatrix adjacency_of(const DynamicDataflowGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.size());
    const auto flat = undirected_adjacency(g);
    return Eigen::Map<const RowMatrix>(flat.data(), n, n);
}

// The graph operator each backbone propagates with.
nn::Matrix propagation_of(Backbone b, const DynamicDataflowGraph& g) {
    const RowMatrix a = adjacency_of(g);
    switch (b) {
        case Backbone::gcn: return nn::normalize_adjacency(a);
        case Backbone::gat: return a;
        case Backbone::ggnn: return nn::normalize_propagation(a);
    }
    return a;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nn::Parameter fixed(const std::string& name, nn::Matrix value) {
    nn::Parameter p{name, std::move(value), {}};
    p.zero_grad();
    return p;
}

nn::Var logits_from(nn::Tape& tape, MapperModel& model, const nn::Matrix& prop, const RowMatrix& x) {
    nn::Var h = tape.constant(x);
    switch (model.config.backbone) {
        case Backbone::gcn: {
            nn::Var a = tape.constant(prop);
            for (auto& layer : model.gcn) h = layer.forward(tape, h, a);
            break;
        }
        case Backbone::gat:
            for (auto& layer : model.gat) h = layer.forward(tape, h, prop);
            break;
        case Backbone::ggnn: {
            nn::Var p = tape.constant(prop);
            h = model.input->forward(tape, h);
            for (auto& layer : model.ggnn) h = layer.forward(tape, h, p);
            break;
        }
    }
    return model.fc2.forward(tape, model.fc1.forward(tape, nn::mean_rows(h)));
}

}  // namespace

MapperModel MapperModel::init(std::size_t input_width, const MapperConfig& config, std::uint64_t seed) {
    config.validate();
    if (input_width == 0) throw InvalidArgument("mapper: input width must be positive");
    auto rng = make_rng(seed, "mapper.init");
    MapperModel m;
    m.config = config;
    m.standardizer.mean = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(input_width));
    m.standardizer.scale = Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(input_width));
    const auto in = static_cast<Eigen::Index>(input_width);
    const auto width = static_cast<Eigen::Index>(config.neurons);
    for (std::size_t l = 0; l < config.hidden_layers; ++l) {
        const std::string name = "backbone" + std::to_string(l);
        const auto layer_in = l == 0 ? in : width;
        switch (config.backbone) {
            case Backbone::gcn:
                m.gcn.push_back(nn::GcnLayer::init(name, layer_in, width, nn::Activation::relu, rng));
                break;
            case Backbone::gat:
                m.gat.push_back(nn::GatLayer::init(name, layer_in, width, nn::Activation::relu, rng));
                break;
            case Backbone::ggnn:
                if (l == 0) m.input = nn::FcLayer::init("input", in, width, nn::Activation::tanh, rng);
                m.ggnn.push_back(nn::GgnnLayer::init(name, width, config.ggnn_steps, rng));
                break;
        }
    }
    m.fc1 = nn::FcLayer::init("fc1", width, width, nn::Activation::relu, rng);
    m.fc2 = nn::FcLayer::init("fc2", width, 2, nn::Activation::identity, rng);
    m.fc2.weight.value.setZero();
    return m;
}

std::vector<nn::Parameter*> MapperModel::parameters() {
    std::vector<nn::Parameter*> out;
    auto take = [&](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
    if (input) take(input->parameters());
    for (auto& l : gcn) take(l.parameters());
    for (auto& l : gat) take(l.parameters());
    for (auto& l : ggnn) take(l.parameters());
    take(fc1.parameters());
    take(fc2.parameters());
    return out;
}

nn::Checkpoint MapperModel::to_checkpoint() const {
    nn::Checkpoint ckpt;
    ckpt.meta["backbone"] = std::string(to_string(config.backbone));
    ckpt.meta["neurons"] = std::to_string(config.neurons);
    ckpt.meta["hidden_layers"] = std::to_string(config.hidden_layers);
    ckpt.meta["ggnn_steps"] = std::to_string(config.ggnn_steps);
    ckpt.meta["input_width"] = std::to_string(input_width());
    ckpt.meta["epochs"] = std::to_string(config.epochs);
    ckpt.meta["learning_rate"] = format_double(config.learning_rate);
    MapperModel self = *this;  // parameters() needs mutable access
    ckpt.capture(self.parameters());
    ckpt.params.emplace_back("standardizer.mean", standardizer.mean);
    ckpt.params.emplace_back("standardizer.scale", standardizer.scale);
    return ckpt;
}

MapperModel MapperModel::from_checkpoint(const nn::Checkpoint& ckpt) {
    MapperConfig config;
    const auto backbone = parse_backbone(ckpt.get("backbone"));
    if (!backbone) throw ParseError(0, "checkpoint names an unknown backbone '" + ckpt.get("backbone") + "'");
    config.backbone = *backbone;
    config.neurons = std::stoul(ckpt.get("neurons"));
    config.hidden_layers = std::stoul(ckpt.get("hidden_layers"));
    config.ggnn_steps = std::stoul(ckpt.get("ggnn_steps"));
    if (auto it = ckpt.meta.find("epochs"); it != ckpt.meta.end()) config.epochs = std::stoul(it->second);
    if (auto it = ckpt.meta.find("learning_rate"); it != ckpt.meta.end()) config.learning_rate = std::stod(it->second);
    const auto width = std::stoul(ckpt.get("input_width"));
    auto m = init(width, config, 0);
    ckpt.restore(m.parameters());
    nn::Parameter mean = fixed("standardizer.mean", m.standardizer.mean);
    nn::Parameter scale = fixed("standardizer.scale", m.standardizer.scale);
    std::vector<nn::Parameter*> extra{&mean, &scale};
    ckpt.restore(extra);
    m.standardizer.mean = mean.value;
    m.standardizer.scale = scale.value;
    return m;
}

Prediction classify(const DynamicDataflowGraph& graph, const RowMatrix& features, const MapperModel& model) {
    if (static_cast<std::size_t>(features.cols()) != model.input_width())
        throw ShapeError("classify: features have width " + std::to_string(features.cols()) + ", model expects " +
                         std::to_string(model.input_width()));
    if (static_cast<std::size_t>(features.rows()) != graph.size())
        throw ShapeError("classify: one feature row per node required");
    if (graph.empty()) throw InvalidArgument("classify: empty graph");
    const nn::Matrix prop = propagation_of(model.config.backbone, graph);
    nn::Matrix h = model.standardizer.apply(features);
    switch (model.config.backbone) {
        case Backbone::gcn:
            for (const auto& l : model.gcn) h = nn::gcn_forward(h, prop, l.theta.value, l.activation);
            break;
        case Backbone::gat:
            for (const auto& l : model.gat) {
                const nn::RowVec<double> attn = l.attention.value.row(0);
                h = nn::gat_forward(h, prop, l.theta.value, attn, l.activation);
            }
            break;
        case Backbone::ggnn: {
            const nn::RowVec<double> bias = model.input->bias.value.row(0);
            h = nn::fc_forward(h, model.input->weight.value, bias, model.input->activation);
            for (const auto& l : model.ggnn) h = nn::ggnn_forward(h, prop, l.weights(), l.steps);
            break;
        }
    }
    const nn::Matrix pooled = h.colwise().mean();
    const nn::RowVec<double> b1 = model.fc1.bias.value.row(0);
    const nn::RowVec<double> b2 = model.fc2.bias.value.row(0);
    const nn::Matrix hidden = nn::fc_forward(pooled, model.fc1.weight.value, b1, model.fc1.activation);
    const nn::Matrix probs = nn::softmax(nn::fc_forward(hidden, model.fc2.weight.value, b2, model.fc2.activation));
    Prediction p;
    p.probabilities = {probs(0, 0), probs(0, 1)};
    p.label = probs(0, 1) > probs(0, 0) ? Device::gpu : Device::cpu;
    return p;
}

nn::Var mapper_logits(nn::Tape& tape, MapperModel& model, const DynamicDataflowGraph& graph, const RowMatrix& x) {
    if (static_cast<std::size_t>(x.cols()) != model.input_width())
        throw ShapeError("mapper_logits: feature width mismatch");
    return logits_from(tape, model, propagation_of(model.config.backbone, graph), x);
}

TrainResult train(const std::vector<const KernelSample*>& samples, const MapperConfig& config, std::uint64_t seed) {
    config.validate();
    if (samples.size() < 2) throw TrainingDataError("train: need at least two samples");
    std::array<std::size_t, 2> counts{};
    for (const auto* s : samples) ++counts[static_cast<int>(s->label)];
    if (counts[0] == 0 || counts[1] == 0) throw TrainingDataError("train: both CPU and GPU samples are required");
    const auto width = static_cast<std::size_t>(samples.front()->features.cols());

    TrainResult result{MapperModel::init(width, config, seed), {}};
    auto& model = result.model;
    {
        std::vector<const RowMatrix*> blocks;
        for (const auto* s : samples) {
            if (static_cast<std::size_t>(s->features.cols()) != width)
                throw ShapeError("train: samples disagree on feature width");
            blocks.push_back(&s->features);
        }
        model.standardizer = Standardizer::fit(blocks);
    }

    const auto n = samples.size();
    std::vector<nn::Matrix> props, inputs;
    props.reserve(n);
    inputs.reserve(n);
    for (const auto* s : samples) {
        props.push_back(propagation_of(config.backbone, s->graph));
        inputs.push_back(model.standardizer.apply(s->features));
    }
    std::array<double, 2> class_weight{1.0, 1.0};
    if (config.class_weights)
        for (int c = 0; c < 2; ++c) class_weight[c] = static_cast<double>(n) / (2.0 * static_cast<double>(counts[c]));

    auto params = model.parameters();
    nn::Adam optimizer({.learning_rate = config.learning_rate, .weight_decay = config.weight_decay});
    const std::size_t batch = config.batch_size == 0 ? n : std::min(config.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    double total_weight = 0.0;
    for (const auto* s : samples) total_weight += class_weight[static_cast<int>(s->label)];

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        if (batch < n) {
            auto rng = make_rng(seed, "mapper.shuffle", epoch);
            for (std::size_t i = n - 1; i > 0; --i)
                std::swap(order[i], order[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i)))]);
        }
        EpochStats stats;
        std::size_t correct = 0;
        for (std::size_t lo = 0; lo < n; lo += batch) {
            const auto hi = std::min(n, lo + batch);
            double batch_weight = 0.0;
            for (auto k = lo; k < hi; ++k) batch_weight += class_weight[static_cast<int>(samples[order[k]]->label)];
            nn::zero_grads(params);
            for (auto k = lo; k < hi; ++k) {
                const auto i = order[k];
                const int target = static_cast<int>(samples[i]->label);
                const double w = class_weight[target];
                nn::Tape tape;
                nn::Var logits = logits_from(tape, model, props[i], inputs[i]);
                const int targets[1] = {target};
                nn::Var ce = nn::softmax_cross_entropy(logits, targets);
                stats.loss += w * ce.value()(0, 0) / total_weight;
                const auto& l = logits.value();
                correct += (l(0, 1) > l(0, 0) ? 1 : 0) == target;
                tape.backward(nn::scale(ce, w / batch_weight));
            }
            optimizer.step(params);
        }
        stats.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        result.curve.push_back(stats);
    }
    return result;
}

TrainResult train(const std::vector<KernelSample>& samples, const MapperConfig& config, std::uint64_t seed) {
    std::vector<const KernelSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    return train(ptrs, config, seed);
}

Metrics compute_metrics(const std::vector<Device>& truth, const std::vector<Device>& predicted) {
    if (truth.size() != predicted.size()) throw InvalidArgument("compute_metrics: length mismatch");
    Metrics m;
    m.total = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) ++m.confusion[static_cast<int>(truth[i])][static_cast<int>(predicted[i])];
    if (m.total == 0) return m;
    m.accuracy = static_cast<double>(m.confusion[0][0] + m.confusion[1][1]) / static_cast<double>(m.total);
    // Macro average; a class that is never predicted (or never present) scores 0 on that side.
    for (int c = 0; c < 2; ++c) {
        const double tp = static_cast<double>(m.confusion[c][c]);
        const double predicted_c = static_cast<double>(m.confusion[0][c] + m.confusion[1][c]);
        const double actual_c = static_cast<double>(m.confusion[c][0] + m.confusion[c][1]);
        const double p = predicted_c > 0 ? tp / predicted_c : 0.0;
        const double r = actual_c > 0 ? tp / actual_c : 0.0;
        m.precision += p / 2.0;
        m.recall += r / 2.0;
        m.f1 += (p + r > 0 ? 2.0 * p * r / (p + r) : 0.0) / 2.0;
    }
    return m;
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<Device>& labels, std::size_t folds,
                                                       std::uint64_t seed) {
    if (folds < 2) throw InvalidArgument("stratified_folds: need at least two folds");
    if (labels.size() < folds)
        throw InvalidArgument("stratified_folds: " + std::to_string(labels.size()) + " samples for " +
                              std::to_string(folds) + " folds");
    std::vector<std::vector<std::size_t>> out(folds);
    std::size_t next = 0;  // continue dealing where the previous class stopped
    for (Device d : {Device::cpu, Device::gpu}) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == d) members.push_back(i);
        auto rng = make_rng(seed, "folds.shuffle", static_cast<std::uint64_t>(d));
        for (std::size_t i = members.size(); i > 1; --i)
            std::swap(members[i - 1], members[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)))]);
        for (auto idx : members) out[next++ % folds].push_back(idx);
    }
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

namespace {

double stddev(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

Trainer model_trainer(const MapperConfig& config, std::uint64_t seed) {
    return [config, seed](const std::vector<const KernelSample*>& train_set, std::size_t fold) -> Predictor {
        auto model = std::make_shared<MapperModel>(train(train_set, config, stream_seed(seed, "cv.train", fold)).model);
        return [model](const KernelSample& s) { return classify(s, *model).label; };
    };
}

}  // namespace

CvReport cross_validate(const std::vector<KernelSample>& samples, std::size_t folds, const Trainer& trainer,
                        std::uint64_t seed) {
    std::vector<Device> labels;
    for (const auto& s : samples) labels.push_back(s.label);
    const auto split = stratified_folds(labels, folds, stream_seed(seed, "cv.split"));

    CvReport report;
    std::vector<Device> truth, predicted;
    std::vector<double> accuracies;
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<bool> held(samples.size(), false);
        for (auto i : split[f]) held[i] = true;
        std::vector<const KernelSample*> train_set;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (!held[i]) train_set.push_back(&samples[i]);
        const auto predict = trainer(train_set, f);
        FoldResult fr;
        fr.test = split[f];
        std::vector<Device> fold_truth;
        for (auto i : split[f]) {
            fr.predicted.push_back(predict(samples[i]));
            fold_truth.push_back(samples[i].label);
        }
        fr.metrics = compute_metrics(fold_truth, fr.predicted);
        accuracies.push_back(fr.metrics.accuracy);
        truth.insert(truth.end(), fold_truth.begin(), fold_truth.end());
        predicted.insert(predicted.end(), fr.predicted.begin(), fr.predicted.end());
        report.folds.push_back(std::move(fr));
    }
    report.pooled = compute_metrics(truth, predicted);
    report.accuracy_mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / static_cast<double>(folds);
    report.accuracy_std = stddev(accuracies, report.accuracy_mean);
    return report;
}

CvReport cross_validate(const std::vector<KernelSample>& samples, std::size_t folds, const MapperConfig& config,
                        std::uint64_t seed) {
    return cross_validate(samples, folds, model_trainer(config, seed), seed);
}

bool AblationGrid::empty() const {
    return walkers.empty() && cutoff.empty() && model.empty() && neurons.empty() && hidden_layers.empty() &&
           features.empty();
}

std::vector<AblationRow> ablation_sweep(const std::vector<LabeledGraph>& corpus, const AblationGrid& grid,
                                        const AblationBase& base, std::uint64_t seed) {
    if (grid.empty()) throw InvalidArgument("ablation_sweep: empty grid");
    if (grid.repetitions == 0) throw InvalidArgument("ablation_sweep: repetitions must be positive");
    if (grid.folds < 2) throw InvalidArgument("ablation_sweep: need at least two folds");

    std::vector<Device> labels;
    for (const auto& g : corpus) labels.push_back(g.label);

    // Features depend only on (kind, walkers, cutoff); settings that share them reuse one extraction.
    std::map<std::tuple<int, std::size_t, double>, std::vector<KernelSample>> cache;
    auto samples_for = [&](FeatureKind kind, const WalkParams& walk) -> const std::vector<KernelSample>& {
        const bool walk_free = kind != FeatureKind::multifractal;
        const auto key = std::make_tuple(static_cast<int>(kind), walk_free ? 0 : walk.walkers, walk_free ? 0.0 : walk.cutoff);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        std::vector<KernelSample> samples;
        samples.reserve(corpus.size());
        for (const auto& g : corpus) samples.push_back({g.name, g.graph, extract_features(g.graph, kind, walk), g.label});
        return cache.emplace(key, std::move(samples)).first->second;
    };

    auto run = [&](const std::string& factor, const std::string& value, FeatureKind kind, const WalkParams& walk,
                   const MapperConfig& mapper) {
        const auto& samples = samples_for(kind, walk);
        AblationRow row{factor, value, {}, 0.0, 0.0, {}};
        std::vector<Device> truth, predicted;
        for (std::size_t r = 0; r < grid.repetitions; ++r) {
            const auto split = stratified_folds(labels, grid.folds, stream_seed(seed, "ablation.split", r / grid.folds));
            const auto& test = split[r % grid.folds];
            std::vector<bool> held(samples.size(), false);
            for (auto i : test) held[i] = true;
            std::vector<const KernelSample*> train_set;
            for (std::size_t i = 0; i < samples.size(); ++i)
                if (!held[i]) train_set.push_back(&samples[i]);
            const auto model = train(train_set, mapper, stream_seed(seed, "ablation.train", r)).model;
            std::vector<Device> rep_truth, rep_pred;
            for (auto i : test) {
                rep_truth.push_back(samples[i].label);
                rep_pred.push_back(classify(samples[i], model).label);
            }
            row.accuracies.push_back(compute_metrics(rep_truth, rep_pred).accuracy);
            truth.insert(truth.end(), rep_truth.begin(), rep_truth.end());
            predicted.insert(predicted.end(), rep_pred.begin(), rep_pred.end());
        }
        row.mean = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) /
                   static_cast<double>(row.accuracies.size());
        row.std = stddev(row.accuracies, row.mean);
        row.pooled = compute_metrics(truth, predicted);
        return row;
    };

    std::vector<AblationRow> rows;
    for (auto v : grid.walkers) {
        auto walk = base.walk;
        walk.walkers = v;
        rows.push_back(run("walkers", std::to_string(v), base.features, walk, base.mapper));
    }
    for (auto v : grid.cutoff) {
        auto walk = base.walk;
        walk.cutoff = v;
        rows.push_back(run("cutoff", format_double(v), base.features, walk, base.mapper));
    }
    for (auto v : grid.model) {
        auto mapper = base.mapper;
        mapper.backbone = v;
        rows.push_back(run("model", std::string(to_string(v)), base.features, base.walk, mapper));
    }
    for (auto v : grid.neurons) {
        auto mapper = base.mapper;
        mapper.neurons = v;
        rows.push_back(run("neurons", std::to_string(v), base.features, base.walk, mapper));
    }
    for (auto v : grid.hidden_layers) {
        auto mapper = base.mapper;
        mapper.hidden_layers = v;
        rows.push_back(run("hidden_layers", std::to_string(v), base.features, base.walk, mapper));
    }
    for (auto v : grid.features) rows.push_back(run("features", std::string(to_string(v)), v, base.walk, base.mapper));
    return rows;
}

}  // namespace pgl
