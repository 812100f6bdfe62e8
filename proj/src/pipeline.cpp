#include "pgl/pipeline.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "pgl/errors.hpp"
#include "pgl/rng.hpp"

namespace pgl {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double to_number(const std::string& text, std::size_t line, const std::string& key) {
    char* end = nullptr;
    const double v = std::strtod(text.c_str(), &end);
    if (text.empty() || *end != '\0') throw ParseError(line, "value of '" + key + "' is not a number");
    return v;
}

std::size_t to_count(const std::string& text, std::size_t line, const std::string& key) {
    const double v = to_number(text, line, key);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
        throw ParseError(line, "'" + key + "' must be a whole number");
    return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& text, std::size_t line, const std::string& key) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ParseError(line, "'" + key + "' must be true or false");
}

std::string render_walk(const PipelineConfig& c) {
    std::ostringstream out;
    out << "walk.walkers = " << c.walk.walkers << '\n'
        << "walk.walk_len = " << c.walk.walk_len << '\n'
        << "walk.cutoff = " << fmt(c.walk.cutoff) << '\n'
        << "walk.q_grid = ";
    for (std::size_t i = 0; i < c.walk.q_grid.size(); ++i) out << (i ? "," : "") << fmt(c.walk.q_grid[i]);
    out << '\n' << "features = " << to_string(c.features) << '\n';
    return out.str();
}

std::string render_platform(const PlatformConfig& p) {
    std::ostringstream raw, out;
    write_platform(p, raw);
    std::istringstream lines(raw.str());
    for (std::string line; std::getline(lines, line);) out << "platform." << line << '\n';
    return out.str();
}

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const std::exception& e) {
        throw Error(std::string("stage '") + name + "': " + e.what());
    }
}

}  // namespace

void PipelineConfig::validate() const {
    walk.validate();
    mapper.validate();
    platform.validate();
    if (partition.clusters && *partition.clusters == 0) throw InvalidArgument("partition.clusters must be positive");
    if (partition.k_max < 2) throw InvalidArgument("partition.k_max must be at least 2");
    if (partition.max_iterations == 0) throw InvalidArgument("partition.max_iterations must be positive");
    if (partition.gae_epochs == 0) throw InvalidArgument("partition.gae_epochs must be positive");
    if (!(partition.stability_target > 0.0 && partition.stability_target <= 1.0))
        throw InvalidArgument("partition.stability_target must lie in (0, 1]");
    if (!(partition.regularization >= 0.0)) throw InvalidArgument("partition.regularization must be non-negative");
}

PipelineConfig PipelineConfig::resolved() const {
    PipelineConfig c = *this;
    c.walk.seed = seed;
    c.partition.seed = stream_seed(seed, "partition");
    return c;
}

PipelineConfig read_config(std::istream& in) {
    PipelineConfig c;
    std::ostringstream platform_lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        if (key.rfind("platform.", 0) == 0) {
            platform_lines << key.substr(9) << " = " << v << '\n';
            continue;
        }
        if (key == "seed") c.seed = static_cast<std::uint64_t>(std::stoull(v));
        else if (key == "features") {
            auto k = parse_feature_kind(v);
            if (!k) throw ParseError(line_no, "unknown feature kind '" + v + "'");
            c.features = *k;
        } else if (key == "walk.walkers") c.walk.walkers = to_count(v, line_no, key);
        else if (key == "walk.walk_len") c.walk.walk_len = to_count(v, line_no, key);
        else if (key == "walk.cutoff") c.walk.cutoff = to_number(v, line_no, key);
        else if (key == "walk.q_grid") {
            c.walk.q_grid.clear();
            std::istringstream items(v);
            for (std::string item; std::getline(items, item, ',');) c.walk.q_grid.push_back(to_number(trim(item), line_no, key));
        } else if (key == "partition.clusters") {
            if (v == "auto") c.partition.clusters.reset();
            else c.partition.clusters = to_count(v, line_no, key);
        } else if (key == "partition.k_max") c.partition.k_max = to_count(v, line_no, key);
        else if (key == "partition.max_iterations") c.partition.max_iterations = to_count(v, line_no, key);
        else if (key == "partition.gae_epochs") c.partition.gae_epochs = to_count(v, line_no, key);
        else if (key == "partition.stability_target") c.partition.stability_target = to_number(v, line_no, key);
        else if (key == "partition.warm_start") c.partition.warm_start = to_bool(v, line_no, key);
        else if (key == "partition.kmeans_restarts") c.partition.kmeans_restarts = to_count(v, line_no, key);
        else if (key == "partition.gae_hidden") c.partition.gae.hidden = to_count(v, line_no, key);
        else if (key == "partition.gae_embedding") c.partition.gae.embedding = to_count(v, line_no, key);
        else if (key == "partition.gae_learning_rate") c.partition.gae.learning_rate = to_number(v, line_no, key);
        else if (key == "partition.gae_identity") c.partition.gae.identity_channel = to_bool(v, line_no, key);
        else if (key == "partition.affinity") {
            auto a = parse_affinity(v);
            if (!a) throw ParseError(line_no, "unknown affinity '" + v + "'");
            c.partition.affinity = *a;
        } else if (key == "partition.neighbors") c.partition.neighbors = to_count(v, line_no, key);
        else if (key == "partition.regularization") c.partition.regularization = to_number(v, line_no, key);
        else if (key == "mapper.backbone") {
            auto b = parse_backbone(v);
            if (!b) throw ParseError(line_no, "unknown backbone '" + v + "'");
            c.mapper.backbone = *b;
        } else if (key == "mapper.neurons") c.mapper.neurons = to_count(v, line_no, key);
        else if (key == "mapper.hidden_layers") c.mapper.hidden_layers = to_count(v, line_no, key);
        else if (key == "mapper.ggnn_steps") c.mapper.ggnn_steps = to_count(v, line_no, key);
        else if (key == "mapper.epochs") c.mapper.epochs = to_count(v, line_no, key);
        else if (key == "mapper.learning_rate") c.mapper.learning_rate = to_number(v, line_no, key);
        else if (key == "mapper.weight_decay") c.mapper.weight_decay = to_number(v, line_no, key);
        else if (key == "mapper.batch_size") c.mapper.batch_size = to_count(v, line_no, key);
        else if (key == "mapper.class_weights") c.mapper.class_weights = to_bool(v, line_no, key);
        else throw ParseError(line_no, "unknown config key '" + key + "'");
    }
    std::istringstream platform_in(platform_lines.str());
    c.platform = read_platform(platform_in);
    c.validate();
    return c;
}

void write_config(const PipelineConfig& c, std::ostream& out) {
    out << "seed = " << c.seed << '\n' << render_walk(c);
    out << "partition.clusters = " << (c.partition.clusters ? std::to_string(*c.partition.clusters) : "auto") << '\n'
        << "partition.k_max = " << c.partition.k_max << '\n'
        << "partition.max_iterations = " << c.partition.max_iterations << '\n'
        << "partition.gae_epochs = " << c.partition.gae_epochs << '\n'
        << "partition.stability_target = " << fmt(c.partition.stability_target) << '\n'
        << "partition.warm_start = " << (c.partition.warm_start ? "true" : "false") << '\n'
        << "partition.kmeans_restarts = " << c.partition.kmeans_restarts << '\n'
        << "partition.gae_hidden = " << c.partition.gae.hidden << '\n'
        << "partition.gae_embedding = " << c.partition.gae.embedding << '\n'
        << "partition.gae_learning_rate = " << fmt(c.partition.gae.learning_rate) << '\n'
        << "partition.gae_identity = " << (c.partition.gae.identity_channel ? "true" : "false") << '\n'
        << "partition.affinity = " << to_string(c.partition.affinity) << '\n'
        << "partition.neighbors = " << c.partition.neighbors << '\n'
        << "partition.regularization = " << fmt(c.partition.regularization) << '\n'
        << "mapper.backbone = " << to_string(c.mapper.backbone) << '\n'
        << "mapper.neurons = " << c.mapper.neurons << '\n'
        << "mapper.hidden_layers = " << c.mapper.hidden_layers << '\n'
        << "mapper.ggnn_steps = " << c.mapper.ggnn_steps << '\n'
        << "mapper.epochs = " << c.mapper.epochs << '\n'
        << "mapper.learning_rate = " << fmt(c.mapper.learning_rate) << '\n'
        << "mapper.weight_decay = " << fmt(c.mapper.weight_decay) << '\n'
        << "mapper.batch_size = " << c.mapper.batch_size << '\n'
        << "mapper.class_weights = " << (c.mapper.class_weights ? "true" : "false") << '\n'
        << render_platform(c.platform);
}

ConfigHashes config_hashes(const PipelineConfig& config) {
    std::ostringstream full;
    write_config(config, full);
    return {fnv1a(full.str()), fnv1a("seed=" + std::to_string(config.seed) + "\n" + render_walk(config)),
            fnv1a(render_platform(config.platform))};
}

std::string hex(std::uint64_t value) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string_view to_string(CorpusMix m) {
    switch (m) {
        case CorpusMix::balanced: return "balanced";
        case CorpusMix::uniform: return "uniform";
        case CorpusMix::parallel: return "parallel";
        case CorpusMix::sequential: return "sequential";
        case CorpusMix::mixed: return "mixed";
    }
    return "?";
}

std::optional<CorpusMix> parse_corpus_mix(std::string_view text) {
    for (auto m : {CorpusMix::balanced, CorpusMix::uniform, CorpusMix::parallel, CorpusMix::sequential, CorpusMix::mixed})
        if (to_string(m) == text) return m;
    return std::nullopt;
}

std::pair<std::size_t, std::size_t> corpus_size_range(Pattern p) {
    switch (p) {
        case Pattern::parallel_loop: return {6, 20};
        case Pattern::sequential_chain: return {12, 48};
        case Pattern::mixed: return {12, 40};
    }
    return {12, 40};
}

Corpus generate_corpus(std::size_t n, CorpusMix mix, std::uint64_t seed, const PlatformConfig& platform) {
    if (n == 0) throw InvalidArgument("corpus: n must be positive");
    platform.validate();
    Corpus corpus{mix, seed, {}};
    const std::array<std::size_t, 2> quota{n / 2 + n % 2, n / 2};
    std::array<std::size_t, 2> have{};
    const std::size_t budget = 1000 * n;
    for (std::size_t i = 0; corpus.entries.size() < n; ++i) {
        if (i >= budget) throw InvalidArgument("corpus: could not fill the balanced mix");
        auto rng = make_rng(seed, "corpus.candidate", i);
        CorpusEntry e;
        switch (mix) {
            case CorpusMix::parallel: e.pattern = Pattern::parallel_loop; break;
            case CorpusMix::sequential: e.pattern = Pattern::sequential_chain; break;
            case CorpusMix::mixed: e.pattern = Pattern::mixed; break;
            default: e.pattern = static_cast<Pattern>(uniform_int(rng, 0, 2)); break;
        }
        const auto [lo, hi] = corpus_size_range(e.pattern);
        e.size = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
        e.seed = stream_seed(seed, "corpus.trace", i);
        e.graph = build_dfg(generate_synthetic_trace(e.pattern, e.size, e.seed));
        e.cpu_time = estimate_kernel_time(e.graph, Device::cpu, platform).total();
        e.gpu_time = estimate_kernel_time(e.graph, Device::gpu, platform).total();
        e.label = oracle_label(e.graph, platform);
        const auto c = static_cast<std::size_t>(e.label);
        if (mix == CorpusMix::balanced && have[c] >= quota[c]) continue;
        ++have[c];
        char name[64];
        std::snprintf(name, sizeof name, "k%04zu_%s", corpus.entries.size(), std::string(to_string(e.pattern)).c_str());
        e.name = name;
        corpus.entries.push_back(std::move(e));
    }
    return corpus;
}

namespace {

std::string manifest_rows(const Corpus& corpus) {
    std::ostringstream out;
    out << "name\tpattern\tsize\tseed\tlabel\tcpu_time\tgpu_time\tnodes\tedges\n";
    for (const auto& e : corpus.entries)
        out << e.name << '\t' << to_string(e.pattern) << '\t' << e.size << '\t' << e.seed << '\t' << to_string(e.label)
            << '\t' << fmt(e.cpu_time) << '\t' << fmt(e.gpu_time) << '\t' << e.graph.size() << '\t'
            << e.graph.edges().size() << '\n';
    return out.str();
}

}  // namespace

std::uint64_t manifest_hash(const Corpus& corpus) { return fnv1a(manifest_rows(corpus)); }

void write_stamped(const fs::path& path, const std::string& hash, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << "# pgl config " << hash << '\n' << body;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_stamped(const fs::path& path, const std::string& expected) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::string first;
    std::getline(in, first);
    const std::string prefix = "# pgl config ";
    if (first.rfind(prefix, 0) != 0) throw ParseError(1, "'" + path.string() + "' carries no config stamp");
    const std::string stamp = first.substr(prefix.size());
    if (!expected.empty() && stamp != expected)
        throw SemanticError("'" + path.string() + "' was produced under config " + stamp + ", current config is " +
                            expected);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

void write_corpus(const Corpus& corpus, const fs::path& dir, const ConfigHashes& hashes) {
    std::error_code ec;
    fs::create_directories(dir / "graphs", ec);
    fs::create_directories(dir / "traces", ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    for (const auto& e : corpus.entries) {
        std::ostringstream g, t;
        write_graph(e.graph, g);
        write_stamped(dir / "graphs" / (e.name + ".dfg"), hex(hashes.full), g.str());
        render_trace(generate_synthetic_trace(e.pattern, e.size, e.seed), t);
        write_stamped(dir / "traces" / (e.name + ".trace"), hex(hashes.full), t.str());
    }
    std::ostringstream header;
    header << "# corpus mix=" << to_string(corpus.mix) << " seed=" << corpus.seed << " n=" << corpus.entries.size()
           << " platform=" << hex(hashes.platform) << " manifest=" << hex(manifest_hash(corpus)) << '\n';
    write_stamped(dir / "manifest.tsv", hex(hashes.full), header.str() + manifest_rows(corpus));
}

Corpus read_corpus(const fs::path& dir, const ConfigHashes& hashes) {
    std::istringstream in(read_stamped(dir / "manifest.tsv"));
    std::string line;
    std::getline(in, line);
    Corpus corpus;
    {
        std::istringstream h(line);
        std::string hash_mark, word;
        h >> hash_mark >> word;
        if (hash_mark != "#" || word != "corpus") throw ParseError(2, "manifest header missing");
        for (std::string kv; h >> kv;) {
            const auto eq = kv.find('=');
            const auto k = kv.substr(0, eq), v = kv.substr(eq + 1);
            if (k == "mix") corpus.mix = parse_corpus_mix(v).value_or(CorpusMix::balanced);
            else if (k == "seed") corpus.seed = std::stoull(v);
            else if (k == "platform" && v != hex(hashes.platform))
                throw SemanticError("corpus '" + dir.string() + "' was labeled under platform " + v +
                                    ", current platform is " + hex(hashes.platform));
        }
    }
    std::getline(in, line);  // column names
    std::size_t line_no = 3;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        CorpusEntry e;
        std::string pattern, label, cpu, gpu;
        std::size_t nodes = 0, edges = 0;
        if (!(row >> e.name >> pattern >> e.size >> e.seed >> label >> cpu >> gpu >> nodes >> edges))
            throw ParseError(line_no, "bad manifest row");
        e.pattern = parse_pattern(pattern).value_or(Pattern::mixed);
        e.label = parse_device(label).value_or(Device::cpu);
        e.cpu_time = std::strtod(cpu.c_str(), nullptr);
        e.gpu_time = std::strtod(gpu.c_str(), nullptr);
        std::istringstream g(read_stamped(dir / "graphs" / (e.name + ".dfg")));
        e.graph = read_graph(g);
        if (e.graph.size() != nodes || e.graph.edges().size() != edges)
            throw SemanticError("graph '" + e.name + "' disagrees with the manifest");
        corpus.entries.push_back(std::move(e));
    }
    return corpus;
}

std::vector<LabeledGraph> labeled_graphs(const Corpus& corpus) {
    std::vector<LabeledGraph> out;
    for (const auto& e : corpus.entries) out.push_back({e.name, e.graph, e.label});
    return out;
}

RowMatrix graph_features(const DynamicDataflowGraph& g, FeatureKind kind, const WalkParams& walk) {
    return extract_features(g, kind, walk);
}

std::vector<KernelSample> corpus_samples(const Corpus& corpus, FeatureKind kind, const WalkParams& walk) {
    std::vector<KernelSample> out;
    out.reserve(corpus.entries.size());
    for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
        const auto& e = corpus.entries[i];
        auto w = walk;
        w.seed = stream_seed(walk.seed, "corpus.features", i);
        out.push_back({e.name, e.graph, graph_features(e.graph, kind, w), e.label});
    }
    return out;
}

KernelGraph kernel_graph(const DynamicDataflowGraph& g, const std::vector<int>& assignment) {
    if (assignment.size() != g.size()) throw ShapeError("kernel_graph: one cluster per node required");
    const int k = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
    std::vector<std::vector<int>> succ(static_cast<std::size_t>(k));
    for (const auto& e : g.edges()) {
        const int a = assignment[e.src], b = assignment[e.dst];
        if (a != b) succ[a].push_back(b);
    }

    // Tarjan's strongly connected components over the quotient graph.
    std::vector<int> index(k, -1), low(k, 0), comp(k, -1);
    std::vector<bool> on_stack(k, false);
    std::vector<int> stack;
    int counter = 0, comps = 0;
    std::function<void(int)> visit = [&](int v) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = true;
        for (int w : succ[v]) {
            if (index[w] < 0) {
                visit(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack[w]) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            for (int w = -1; w != v;) {
                w = stack.back();
                stack.pop_back();
                on_stack[w] = false;
                comp[w] = comps;
            }
            ++comps;
        }
    };
    for (int v = 0; v < k; ++v)
        if (index[v] < 0) visit(v);

    // Number kernels by their smallest node id.
    std::vector<int> first(comps, -1), renumber(comps, -1);
    for (std::size_t v = 0; v < g.size(); ++v) {
        const int c = comp[assignment[v]];
        if (first[c] < 0) first[c] = static_cast<int>(v);
    }
    std::vector<int> by_first(comps);
    std::iota(by_first.begin(), by_first.end(), 0);
    std::sort(by_first.begin(), by_first.end(), [&](int a, int b) { return first[a] < first[b]; });
    int used = 0;
    for (int c : by_first)
        if (first[c] >= 0) renumber[c] = used++;

    KernelGraph kg;
    kg.members.resize(static_cast<std::size_t>(used));
    for (std::size_t v = 0; v < g.size(); ++v) kg.members[renumber[comp[assignment[v]]]].push_back(static_cast<NodeId>(v));
    std::map<std::pair<std::size_t, std::size_t>, double> bytes;
    for (const auto& e : g.edges()) {
        const auto a = static_cast<std::size_t>(renumber[comp[assignment[e.src]]]);
        const auto b = static_cast<std::size_t>(renumber[comp[assignment[e.dst]]]);
        if (a != b) bytes[{a, b}] += e.weight;
    }
    for (const auto& [key, b] : bytes) kg.transfers.push_back({key.first, key.second, b});
    std::set<int> distinct(assignment.begin(), assignment.end());
    kg.merged = distinct.size() - kg.members.size();
    return kg;
}

void place_partition(PipelineReport& report, const DynamicDataflowGraph& g, const MapperModel* model,
                     const PipelineConfig& config) {
    const auto kg = stage("kernels", [&] { return kernel_graph(g, report.partition.assignment); });
    report.merged_cycles = kg.merged;
    report.kernels.clear();

    std::vector<KernelSpec> specs;
    stage("classify", [&] {
        for (std::size_t k = 0; k < kg.members.size(); ++k) {
            const auto sub = g.induced(kg.members[k]);
            KernelReport kr;
            kr.id = k;
            kr.nodes = kg.members[k];
            kr.oracle = oracle_label(sub, config.platform);
            kr.label = kr.oracle;
            kr.probabilities = {kr.oracle == Device::cpu ? 1.0 : 0.0, kr.oracle == Device::gpu ? 1.0 : 0.0};
            if (model) {
                auto walk = config.walk;
                walk.seed = stream_seed(config.seed, "pipeline.kernel", k);
                const auto pred = classify(sub, graph_features(sub, config.features, walk), *model);
                kr.label = pred.label;
                kr.probabilities = pred.probabilities;
            }
            kr.cpu_time = estimate_kernel_time(sub, Device::cpu, config.platform).total();
            kr.gpu_time = estimate_kernel_time(sub, Device::gpu, config.platform).total();
            report.kernels.push_back(kr);
            specs.push_back({"kernel" + std::to_string(k), kr.label, kr.cpu_time, kr.gpu_time});
        }
        return 0;
    });

    const auto sim = stage("simulate", [&] { return simulate(specs, kg.transfers, config.platform); });
    std::size_t agree = 0;
    for (std::size_t k = 0; k < report.kernels.size(); ++k) {
        auto& kr = report.kernels[k];
        kr.core = sim.plan.kernels[k].core;
        kr.start = sim.timing.start[k];
        kr.finish = sim.timing.finish[k];
        agree += kr.label == kr.oracle;
    }
    report.transfers = kg.transfers;
    report.transfer_seconds = sim.plan.transfer_seconds;
    report.makespan = sim.timing.makespan;
    report.baseline_makespan = sim.baseline_makespan;
    report.speedup = sim.speedup;
    report.oracle_agreement =
        report.kernels.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(report.kernels.size());
}

PipelineReport run_pipeline(const InstructionTrace& app, const MapperModel& model, const PipelineConfig& raw) {
    const auto config = raw.resolved();
    stage("config", [&] {
        config.validate();
        const auto width = config.features == FeatureKind::multifractal
                               ? config.walk.walkers * config.walk.q_grid.size()
                               : std::size_t{2};
        if (width != model.input_width())
            throw ShapeError("checkpoint expects feature width " + std::to_string(model.input_width()) +
                             ", the configured features have width " + std::to_string(width));
        return 0;
    });

    PipelineReport report;
    report.application = app.name;
    report.config_hash = hex(config_hashes(config).full);
    report.seed = config.seed;

    const auto g = stage("graph", [&] { return build_dfg(app); });
    report.nodes = g.size();
    report.edges = g.edges().size();

    const RowMatrix x = stage("features", [&] {
        auto walk = config.walk;
        walk.seed = stream_seed(config.seed, "pipeline.features");
        return graph_features(g, config.features, walk);
    });

    report.partition = stage("partition", [&] { return partition(g, x, config.partition); });
    place_partition(report, g, &model, config);
    return report;
}

std::string report_json(const PipelineReport& r) {
    ordered_json j;
    j["application"] = r.application;
    j["config_hash"] = r.config_hash;
    j["seed"] = r.seed;
    j["graph"] = {{"nodes", r.nodes}, {"edges", r.edges}};
    j["partition"] = {{"k", r.partition.k},
                      {"iterations", r.partition.history.size()},
                      {"final_stability", r.partition.history.empty() ? 0.0 : r.partition.history.back()},
                      {"converged", r.partition.converged},
                      {"history", r.partition.history},
                      {"merged_for_acyclicity", r.merged_cycles}};
    ordered_json kernels = ordered_json::array();
    for (const auto& k : r.kernels)
        kernels.push_back({{"id", k.id},
                           {"nodes", k.nodes.size()},
                           {"label", to_string(k.label)},
                           {"oracle", to_string(k.oracle)},
                           {"p_cpu", k.probabilities[0]},
                           {"p_gpu", k.probabilities[1]},
                           {"cpu_time", k.cpu_time},
                           {"gpu_time", k.gpu_time},
                           {"core", {k.core.x, k.core.y}},
                           {"start", k.start},
                           {"finish", k.finish}});
    j["kernels"] = kernels;
    ordered_json transfers = ordered_json::array();
    for (std::size_t i = 0; i < r.transfers.size(); ++i)
        transfers.push_back({{"src", r.transfers[i].src},
                             {"dst", r.transfers[i].dst},
                             {"bytes", r.transfers[i].bytes},
                             {"seconds", i < r.transfer_seconds.size() ? r.transfer_seconds[i] : 0.0}});
    j["transfers"] = transfers;
    j["makespan"] = r.makespan;
    j["baseline_makespan"] = r.baseline_makespan;
    j["speedup"] = r.speedup;
    j["oracle_agreement"] = r.oracle_agreement;
    return j.dump(2) + "\n";
}

namespace {

ordered_json metrics_json(const Metrics& m) {
    return {{"total", m.total},
            {"accuracy", m.accuracy},
            {"precision", m.precision},
            {"recall", m.recall},
            {"f1", m.f1},
            {"confusion", {{"cpu_as_cpu", m.confusion[0][0]},
                           {"cpu_as_gpu", m.confusion[0][1]},
                           {"gpu_as_cpu", m.confusion[1][0]},
                           {"gpu_as_gpu", m.confusion[1][1]}}}};
}

}  // namespace

std::string cv_report_json(const CvReport& report, const std::vector<KernelSample>& samples,
                           const std::string& config_hash) {
    ordered_json j;
    j["config_hash"] = config_hash;
    j["folds"] = report.folds.size();
    ordered_json folds = ordered_json::array();
    for (std::size_t f = 0; f < report.folds.size(); ++f) {
        ordered_json preds = ordered_json::array();
        for (std::size_t i = 0; i < report.folds[f].test.size(); ++i) {
            const auto idx = report.folds[f].test[i];
            preds.push_back({{"kernel", samples[idx].name},
                             {"truth", to_string(samples[idx].label)},
                             {"predicted", to_string(report.folds[f].predicted[i])}});
        }
        folds.push_back({{"fold", f}, {"metrics", metrics_json(report.folds[f].metrics)}, {"predictions", preds}});
    }
    j["per_fold"] = folds;
    j["aggregate"] = metrics_json(report.pooled);
    j["accuracy_mean"] = report.accuracy_mean;
    j["accuracy_std"] = report.accuracy_std;
    return j.dump(2) + "\n";
}

std::string metrics_table(const std::string& label, const Metrics& m, double accuracy_std) {
    char buf[256];
    std::ostringstream out;
    std::snprintf(buf, sizeof buf, "%-24s %-18s %-10s %-10s %-10s\n", "Model", "Accuracy", "Precision", "Recall", "F1");
    out << buf;
    char acc[32];
    std::snprintf(acc, sizeof acc, "%.2f%% +- %.2f", 100.0 * m.accuracy, 100.0 * accuracy_std);
    std::snprintf(buf, sizeof buf, "%-24s %-18s %-10.4f %-10.4f %-10.4f\n", label.c_str(), acc, m.precision, m.recall,
                  m.f1);
    out << buf;
    return out.str();
}

std::string ablation_json(const std::vector<AblationRow>& rows, const std::string& config_hash) {
    ordered_json j;
    j["config_hash"] = config_hash;
    ordered_json out = ordered_json::array();
    for (const auto& r : rows)
        out.push_back({{"factor", r.factor},
                       {"value", r.value},
                       {"accuracies", r.accuracies},
                       {"mean", r.mean},
                       {"std", r.std},
                       {"pooled", metrics_json(r.pooled)}});
    j["rows"] = out;
    return j.dump(2) + "\n";
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-14s %-14s %-10s %-10s %s\n", "Factor", "Value", "Mean", "Std", "Reps");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-14s %-14s %-10.4f %-10.4f %zu\n", r.factor.c_str(), r.value.c_str(), r.mean,
                      r.std, r.accuracies.size());
        out << buf;
    }
    return out.str();
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".pgl.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0 && errno == EEXIST) {
        // A lock whose owner is gone (crash, kill -9) is taken over.
        std::ifstream held(path_);
        long owner = 0;
        if (held >> owner && owner > 0 && ::kill(static_cast<pid_t>(owner), 0) != 0 && errno == ESRCH) {
            fs::remove(path_, ec);
            fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        }
    }
    if (fd < 0) throw IoError("'" + dir.string() + "' is locked by another writer (" + path_.string() + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

DirectoryLock::~DirectoryLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

}  // namespace pgl
