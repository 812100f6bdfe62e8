// pgl: command-line front end for corpus generation, feature extraction,
// partitioning, training, evaluation and the end-to-end mapping pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pgl/errors.hpp"
#include "pgl/nn/checkpoint.hpp"
#include "pgl/pipeline.hpp"
#include "pgl/rng.hpp"

namespace fs = std::filesystem;
using namespace pgl;

namespace {

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    std::string config;
    std::string out = "pgl-out";
    std::string platform;

    std::optional<std::size_t> walkers;
    std::optional<std::size_t> walk_len;
    std::optional<double> cutoff;
    std::optional<std::string> features;

    std::optional<std::string> clusters;
    std::optional<std::size_t> max_iters;
    std::optional<std::size_t> gae_epochs;

    std::optional<std::string> model;
    std::optional<std::size_t> neurons;
    std::optional<std::size_t> hidden_layers;
    std::optional<std::size_t> epochs;
    std::size_t folds = 5;
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

template <typename T, typename Parse>
T parse_or_throw(const std::string& text, Parse parse, const char* what) {
    const auto v = parse(text);
    if (!v) throw InvalidArgument(std::string("unknown ") + what + " '" + text + "'");
    return *v;
}

PipelineConfig resolve(const GlobalOptions& o) {
    PipelineConfig c;
    if (!o.config.empty()) {
        std::istringstream in(slurp(o.config));
        c = read_config(in);
    }
    if (!o.platform.empty()) {
        std::istringstream in(slurp(o.platform));
        c.platform = read_platform(in);
    }
    if (o.seed) c.seed = *o.seed;
    if (o.walkers) c.walk.walkers = *o.walkers;
    if (o.walk_len) c.walk.walk_len = *o.walk_len;
    if (o.cutoff) c.walk.cutoff = *o.cutoff;
    if (o.features) c.features = parse_or_throw<FeatureKind>(*o.features, parse_feature_kind, "feature kind");
    if (o.clusters) {
        if (*o.clusters == "auto") c.partition.clusters.reset();
        else c.partition.clusters = std::stoul(*o.clusters);
    }
    if (o.max_iters) c.partition.max_iterations = *o.max_iters;
    if (o.gae_epochs) c.partition.gae_epochs = *o.gae_epochs;
    if (o.model) c.mapper.backbone = parse_or_throw<Backbone>(*o.model, parse_backbone, "model");
    if (o.neurons) c.mapper.neurons = *o.neurons;
    if (o.hidden_layers) c.mapper.hidden_layers = *o.hidden_layers;
    if (o.epochs) c.mapper.epochs = *o.epochs;
    c.validate();
    return c.resolved();
}

// Echoes the resolved config to stderr and keeps a copy next to the outputs.
void log_config(const std::string& command, const PipelineConfig& c, const fs::path& out) {
    std::ostringstream text;
    write_config(c, text);
    const auto hashes = config_hashes(c);
    std::cerr << "# pgl " << command << " seed=" << c.seed << " config=" << hex(hashes.full) << '\n';
    std::istringstream lines(text.str());
    for (std::string line; std::getline(lines, line);) std::cerr << "#   " << line << '\n';
    std::ofstream keep(out / (command + ".config"));
    keep << text.str();
}

std::size_t feature_width(const PipelineConfig& c) {
    return c.features == FeatureKind::multifractal ? c.walk.walkers * c.walk.q_grid.size() : 2;
}

DynamicDataflowGraph load_graph(const fs::path& path) {
    std::istringstream in(read_stamped(path));
    return read_graph(in);
}

InstructionTrace load_trace(const fs::path& path) {
    // Traces may come from outside the tool and carry no stamp.
    std::istringstream in(slurp(path));
    return parse_trace(in);
}

// Reads a checkpoint and verifies it fits the configured features before any
// compute happens.
MapperModel load_model(const fs::path& path, const PipelineConfig& c) {
    std::istringstream in(read_stamped(path));
    const auto ckpt = nn::read_checkpoint(in);
    auto model = MapperModel::from_checkpoint(ckpt);
    if (model.input_width() != feature_width(c))
        throw ShapeError("checkpoint '" + path.string() + "' expects feature width " +
                         std::to_string(model.input_width()) + ", the configured features have width " +
                         std::to_string(feature_width(c)));
    const auto want = hex(config_hashes(c).features);
    if (ckpt.get("features_hash") != want)
        throw SemanticError("checkpoint '" + path.string() + "' was trained on features " +
                            ckpt.get("features_hash") + ", current feature config is " + want);
    return model;
}

void write_text(const fs::path& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << body;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

InstructionTrace synthetic_app(const std::string& kind, std::uint64_t seed) {
    const auto loop = generate_synthetic_trace(Pattern::parallel_loop, 64, stream_seed(seed, "app.loop"));
    const auto chain = generate_synthetic_trace(Pattern::sequential_chain, 48, stream_seed(seed, "app.chain"));
    if (kind == "parallel") return loop;
    if (kind == "sequential")
        return join_traces(chain, generate_synthetic_trace(Pattern::sequential_chain, 48, stream_seed(seed, "app.chain2")));
    if (kind == "mixed") return join_traces(loop, chain);
    throw InvalidArgument("unknown synthetic app '" + kind + "' (parallel, sequential, mixed)");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, T (*convert)(const std::string&)) {
    std::vector<T> out;
    std::istringstream in(text);
    for (std::string item; std::getline(in, item, ',');)
        if (!item.empty()) out.push_back(convert(item));
    return out;
}

std::size_t to_size(const std::string& s) { return std::stoul(s); }
double to_double(const std::string& s) { return std::stod(s); }
Backbone to_backbone(const std::string& s) { return parse_or_throw<Backbone>(s, parse_backbone, "model"); }
FeatureKind to_feature(const std::string& s) { return parse_or_throw<FeatureKind>(s, parse_feature_kind, "feature kind"); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Programmable graph learning: CPU/GPU kernel mapping from instruction traces"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--seed", g.seed, "Global seed (default 42)");
    app.add_option("--config", g.config, "Config file (key = value)")->check(CLI::ExistingFile);
    app.add_option("--out", g.out, "Output directory")->capture_default_str();
    app.add_option("--platform", g.platform, "Platform file (key = value)")->check(CLI::ExistingFile);
    app.add_option("--walkers", g.walkers, "Random walks per node");
    app.add_option("--walk-len", g.walk_len, "Steps per walk");
    app.add_option("--cutoff", g.cutoff, "Box-counting radius");
    app.add_option("--features", g.features, "degree, weight or multifractal");
    app.add_option("--clusters", g.clusters, "Cluster count or 'auto'");
    app.add_option("--max-iters", g.max_iters, "Outer partition iterations");
    app.add_option("--gae-epochs", g.gae_epochs, "Autoencoder epochs per iteration");
    app.add_option("--model", g.model, "gcn, gat or ggnn");
    app.add_option("--neurons", g.neurons, "Hidden width");
    app.add_option("--hidden-layers", g.hidden_layers, "Stacked backbone layers");
    app.add_option("--epochs", g.epochs, "Classifier training epochs");
    app.add_option("--folds", g.folds, "Cross-validation folds")->capture_default_str();

    std::size_t corpus_n = 200;
    std::string corpus_mix = "balanced";
    auto* corpus = app.add_subcommand("corpus", "Generate an oracle-labeled synthetic kernel corpus");
    corpus->add_option("-n,--kernels", corpus_n, "Number of kernels")->capture_default_str();
    corpus->add_option("--mix", corpus_mix, "balanced, uniform, parallel, sequential or mixed")->capture_default_str();

    std::string trace_path;
    auto* graph = app.add_subcommand("graph", "Build a dynamic dataflow graph from a trace");
    graph->add_option("--trace", trace_path, "Instruction trace")->required()->check(CLI::ExistingFile);

    std::string graph_path;
    auto* features = app.add_subcommand("features", "Multifractal node features of a graph");
    features->add_option("--graph", graph_path, "Graph file")->required()->check(CLI::ExistingFile);

    std::string features_path;
    auto* part = app.add_subcommand("partition", "Autoencoder-guided spectral partition of a graph");
    part->add_option("--graph", graph_path, "Graph file")->required()->check(CLI::ExistingFile);
    part->add_option("--node-features", features_path, "Precomputed features (default: compute)")
        ->check(CLI::ExistingFile);

    std::string corpus_dir;
    auto* train = app.add_subcommand("train", "Train the kernel classifier on a corpus");
    train->add_option("--corpus", corpus_dir, "Corpus directory")->required();

    auto* eval = app.add_subcommand("eval", "Stratified cross-validation on a corpus");
    eval->add_option("--corpus", corpus_dir, "Corpus directory")->required();

    std::string ckpt_path;
    auto* predict = app.add_subcommand("predict", "Classify one kernel as CPU or GPU");
    predict->add_option("--checkpoint", ckpt_path, "Trained model")->required();
    auto* predict_src = predict->add_option_group("input");
    predict_src->add_option("--graph", graph_path, "Graph file");
    predict_src->add_option("--trace", trace_path, "Instruction trace");
    predict_src->require_option(1);

    std::string partition_path;
    auto* sim = app.add_subcommand("simulate", "Place and simulate a partitioned graph");
    sim->add_option("--graph", graph_path, "Graph file")->required()->check(CLI::ExistingFile);
    sim->add_option("--partition", partition_path, "Partition file")->required()->check(CLI::ExistingFile);
    sim->add_option("--checkpoint", ckpt_path, "Trained model (default: cost-model labels)");

    std::string app_kind;
    auto* pipe = app.add_subcommand("pipeline", "Trace to simulated speedup, end to end");
    pipe->add_option("--checkpoint", ckpt_path, "Trained model")->required();
    auto* pipe_src = pipe->add_option_group("input");
    pipe_src->add_option("--trace", trace_path, "Application trace");
    pipe_src->add_option("--app", app_kind, "Synthetic application: parallel, sequential or mixed");
    pipe_src->require_option(1);

    std::string vary_walkers, vary_cutoff, vary_model, vary_neurons, vary_layers, vary_features;
    std::size_t reps = 5;
    auto* ablate = app.add_subcommand("ablate", "Vary one factor at a time around the configured defaults");
    ablate->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    ablate->add_option("--vary-walkers", vary_walkers, "Comma list, e.g. 4,8,16");
    ablate->add_option("--vary-cutoff", vary_cutoff, "Comma list");
    ablate->add_option("--vary-model", vary_model, "Comma list of gcn,gat,ggnn");
    ablate->add_option("--vary-neurons", vary_neurons, "Comma list");
    ablate->add_option("--vary-hidden-layers", vary_layers, "Comma list");
    ablate->add_option("--vary-features", vary_features, "Comma list of degree,weight,multifractal");
    ablate->add_option("--repetitions", reps, "Repetitions per value")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        const auto config = resolve(g);
        const auto hashes = config_hashes(config);
        const std::string full = hex(hashes.full);
        const fs::path out = g.out;
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) throw IoError("cannot create '" + out.string() + "': " + ec.message());
        DirectoryLock lock(out);
        const auto* cmd = app.get_subcommands().front();
        log_config(cmd->get_name(), config, out);

        if (cmd == corpus) {
            const auto mix = parse_or_throw<CorpusMix>(corpus_mix, parse_corpus_mix, "corpus mix");
            const auto c = generate_corpus(corpus_n, mix, config.seed, config.platform);
            write_corpus(c, out, hashes);
            std::size_t gpu = 0;
            for (const auto& e : c.entries) gpu += e.label == Device::gpu;
            std::printf("corpus: %zu kernels (%zu CPU, %zu GPU) manifest %s\n", c.entries.size(),
                        c.entries.size() - gpu, gpu, hex(manifest_hash(c)).c_str());
        } else if (cmd == graph) {
            const auto dfg = build_dfg(load_trace(trace_path));
            std::ostringstream body;
            write_graph(dfg, body);
            write_stamped(out / "graph.dfg", full, body.str());
            const auto s = graph_stats(dfg);
            std::printf("graph: %zu nodes, %zu edges, diameter %zu, average path length %.4f\n", s.nodes, s.edges,
                        s.diameter, s.average_path_length);
        } else if (cmd == features) {
            const auto dfg = load_graph(graph_path);
            auto walk = config.walk;
            walk.seed = stream_seed(config.seed, "pipeline.features");
            std::ostringstream body;
            write_features(node_features(dfg, walk), body);
            write_stamped(out / "features.txt", hex(hashes.features), body.str());
            std::printf("features: %zu x %zu\n", dfg.size(), walk.walkers * walk.q_grid.size());
        } else if (cmd == part) {
            const auto dfg = load_graph(graph_path);
            RowMatrix x;
            if (!features_path.empty()) {
                if (config.features != FeatureKind::multifractal)
                    throw InvalidArgument("precomputed node features are multifractal; the config asks for " +
                                          std::string(to_string(config.features)));
                std::istringstream in(read_stamped(features_path, hex(hashes.features)));
                x = read_features(in).values;
                if (static_cast<std::size_t>(x.rows()) != dfg.size())
                    throw ShapeError("features have " + std::to_string(x.rows()) + " rows, the graph has " +
                                     std::to_string(dfg.size()) + " nodes");
            } else {
                auto walk = config.walk;
                walk.seed = stream_seed(config.seed, "pipeline.features");
                x = graph_features(dfg, config.features, walk);
            }
            const auto p = partition(dfg, x, config.partition);
            std::ostringstream body;
            write_partition(p, body);
            write_stamped(out / "partition.txt", full, body.str());
            std::printf("partition: k=%zu after %zu iterations, stability %.4f%s\n", p.k, p.history.size(),
                        p.history.empty() ? 1.0 : p.history.back(), p.converged ? "" : " (not converged)");
        } else if (cmd == train) {
            const auto c = read_corpus(corpus_dir, hashes);
            const auto samples = corpus_samples(c, config.features, config.walk);
            const auto result = pgl::train(samples, config.mapper, stream_seed(config.seed, "train"));
            auto ckpt = result.model.to_checkpoint();
            ckpt.meta["features"] = std::string(to_string(config.features));
            ckpt.meta["features_hash"] = hex(hashes.features);
            ckpt.meta["config_hash"] = full;
            ckpt.meta["corpus_manifest"] = hex(manifest_hash(c));
            std::ostringstream body;
            nn::write_checkpoint(ckpt, body);
            write_stamped(out / "model.ckpt", hex(hashes.features), body.str());
            std::ostringstream curve;
            curve << "epoch\tloss\ttrain_accuracy\n";
            char row[96];
            for (std::size_t e = 0; e < result.curve.size(); ++e) {
                std::snprintf(row, sizeof row, "%zu\t%.17g\t%.17g\n", e + 1, result.curve[e].loss,
                              result.curve[e].accuracy);
                curve << row;
            }
            write_stamped(out / "train_curve.tsv", full, curve.str());
            const auto& last = result.curve.back();
            std::printf("train: %zu samples, %zu epochs, final loss %.4f, training accuracy %.4f\n", samples.size(),
                        result.curve.size(), last.loss, last.accuracy);
        } else if (cmd == eval) {
            const auto c = read_corpus(corpus_dir, hashes);
            const auto samples = corpus_samples(c, config.features, config.walk);
            const auto report = cross_validate(samples, g.folds, config.mapper, config.seed);
            write_text(out / "eval.json", cv_report_json(report, samples, full));
            std::string table = metrics_table(std::string(to_string(config.mapper.backbone)), report.pooled,
                                              report.accuracy_std);
            write_stamped(out / "eval.txt", full, table);
            std::fputs(table.c_str(), stdout);
        } else if (cmd == predict) {
            const auto model = load_model(ckpt_path, config);
            const auto dfg = graph_path.empty() ? build_dfg(load_trace(trace_path)) : load_graph(graph_path);
            auto walk = config.walk;
            walk.seed = stream_seed(config.seed, "pipeline.kernel", 0);
            const auto pred = classify(dfg, graph_features(dfg, config.features, walk), model);
            nlohmann::ordered_json j;
            j["config_hash"] = full;
            j["nodes"] = dfg.size();
            j["label"] = std::string(to_string(pred.label));
            j["probabilities"] = {{"CPU", pred.probabilities[0]}, {"GPU", pred.probabilities[1]}};
            j["oracle"] = std::string(to_string(oracle_label(dfg, config.platform)));
            write_text(out / "prediction.json", j.dump(2) + "\n");
            std::printf("%s\n", j.dump(2).c_str());
        } else if (cmd == sim) {
            std::optional<MapperModel> model;
            if (!ckpt_path.empty()) model = load_model(ckpt_path, config);
            const auto dfg = load_graph(graph_path);
            std::istringstream in(read_stamped(partition_path, full));
            PipelineReport report;
            report.application = fs::path(graph_path).stem().string();
            report.config_hash = full;
            report.seed = config.seed;
            report.nodes = dfg.size();
            report.edges = dfg.edges().size();
            report.partition = read_partition(in);
            if (report.partition.assignment.size() != dfg.size())
                throw ShapeError("partition covers " + std::to_string(report.partition.assignment.size()) +
                                 " nodes, the graph has " + std::to_string(dfg.size()));
            place_partition(report, dfg, model ? &*model : nullptr, config);
            write_text(out / "simulation.json", report_json(report));
            std::printf("simulate: %zu kernels, makespan %.6g s, baseline %.6g s, speedup %.4f\n",
                        report.kernels.size(), report.makespan, report.baseline_makespan, report.speedup);
        } else if (cmd == pipe) {
            const auto model = load_model(ckpt_path, config);
            const auto trace = app_kind.empty() ? load_trace(trace_path) : synthetic_app(app_kind, config.seed);
            const auto report = run_pipeline(trace, model, config);
            write_text(out / "report.json", report_json(report));
            std::printf("pipeline: %zu nodes, %zu kernels, makespan %.6g s, speedup %.4f\n", report.nodes,
                        report.kernels.size(), report.makespan, report.speedup);
            for (const auto& k : report.kernels)
                std::printf("  kernel %zu: %zu nodes -> %s (core %d,%d)\n", k.id, k.nodes.size(),
                            std::string(to_string(k.label)).c_str(), k.core.x, k.core.y);
        } else if (cmd == ablate) {
            AblationGrid grid;
            grid.walkers = parse_list(vary_walkers, to_size);
            grid.cutoff = parse_list(vary_cutoff, to_double);
            grid.model = parse_list(vary_model, to_backbone);
            grid.neurons = parse_list(vary_neurons, to_size);
            grid.hidden_layers = parse_list(vary_layers, to_size);
            grid.features = parse_list(vary_features, to_feature);
            grid.repetitions = reps;
            grid.folds = g.folds;
            if (grid.empty()) throw InvalidArgument("nothing to vary; pass at least one --vary-* list");
            const auto c = read_corpus(corpus_dir, hashes);
            const AblationBase base{config.walk, config.mapper, config.features};
            const auto rows = ablation_sweep(labeled_graphs(c), grid, base, config.seed);
            write_text(out / "ablation.json", ablation_json(rows, full));
            const auto table = ablation_table(rows);
            write_stamped(out / "ablation.txt", full, table);
            std::fputs(table.c_str(), stdout);
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "pgl: error: %s\n", e.what());
        return 1;
    }
}
