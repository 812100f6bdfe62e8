// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <algorithm>
#include <array>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pgl/dfg.hpp"
#include "pgl/errors.hpp"
#include "pgl/fractal.hpp"
#include "pgl/gae.hpp"
#include "pgl/mapper.hpp"
#include "pgl/nn/autograd.hpp"
#include "pgl/nn/dense.hpp"
#include "pgl/nn/layers.hpp"
#include "pgl/pipeline.hpp"
#include "pgl/sched.hpp"
#include "pgl/spectral.hpp"

using namespace pgl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string format(const char* fmt, ...) __attribute__((format(printf, 1, 2)));
std::string format(const char* fmt, ...) {
    char buf[1024];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

DynamicDataflowGraph graph_from_edges(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    std::vector<DfgNode> nodes;
    for (std::size_t i = 0; i < n; ++i) nodes.push_back({i, Opcode::arith, 1});
    std::vector<DfgEdge> es;
    for (auto [a, b] : edges) es.push_back({std::min(a, b), std::max(a, b), EdgeType::data, 8});
    return {"g", nodes, es};
}

// ---------------------------------------------------------------- 1

// Independent BFS box counts: N_i(l) = #nodes within fewer than l hops of i.
std::vector<std::vector<std::size_t>> oracle_box_counts(const DynamicDataflowGraph& g, std::size_t diameter) {
    std::vector<std::vector<std::size_t>> out;
    for (NodeId c = 0; c < g.size(); ++c) {
        std::vector<int> dist(g.size(), -1);
        std::vector<NodeId> queue{c};
        dist[c] = 0;
        for (std::size_t h = 0; h < queue.size(); ++h)
            for (NodeId w : g.undirected_neighbors()[queue[h]])
                if (dist[w] < 0) dist[w] = dist[queue[h]] + 1, queue.push_back(w);
        std::vector<std::size_t> row;
        for (std::size_t l = 1; l <= diameter; ++l)
            row.push_back(static_cast<std::size_t>(
                std::count_if(dist.begin(), dist.end(), [&](int d) { return d >= 0 && d < static_cast<int>(l); })));
        out.push_back(row);
    }
    return out;
}

Outcome fractal_correctness() {
    const auto t0 = Clock::now();
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId i = 0; i + 1 < 64; ++i) edges.emplace_back(i, i + 1);
    const auto path = graph_from_edges(64, edges);
    const auto boxes = box_counts(path);
    const auto oracle = oracle_box_counts(path, boxes.diameter);
    bool counts_match = boxes.diameter == 63;
    for (std::size_t c = 0; c < 64; ++c)
        for (std::size_t l = 1; l <= boxes.diameter; ++l)
            counts_match &= boxes.counts(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(l - 1)) ==
                            static_cast<double>(oracle[c][l - 1]);
    const std::vector<double> q{0.0};
    const double d0 = generalized_fractal_dimension(mass_exponents(boxes, q))[0];
    const double secs = seconds_since(t0);
    const bool pass = counts_match && std::abs(d0 - 1.0) <= 0.15 && secs < 5.0;
    return {pass, format("P_64 D(0) = %.4f (|D(0) - 1| = %.4f, limit 0.15); box counts %s BFS oracle; %.2f s (limit 5 s)",
                         d0, std::abs(d0 - 1.0), counts_match ? "match" : "DIFFER from", secs)};
}

// ---------------------------------------------------------------- 2

// Union of the nodes on every directed path from `from` to `to`, by explicit path enumeration.
std::set<NodeId> all_paths_union(const DynamicDataflowGraph& g, NodeId from, NodeId to) {
    std::set<NodeId> nodes;
    std::vector<NodeId> path{from};
    std::function<void(NodeId)> dfs = [&](NodeId v) {
        if (v == to) {
            nodes.insert(path.begin(), path.end());
            return;
        }
        for (const auto& e : g.out_edges(v)) {
            path.push_back(e.dst);
            dfs(e.dst);
            path.pop_back();
        }
    };
    dfs(from);
    return nodes;
}

// Returns false on the first disagreement and describes it in `why`.
bool check_subgraph(const DynamicDataflowGraph& g, std::string& why) {
    for (NodeId a = 0; a < g.size(); ++a)
        for (NodeId b = a; b < g.size(); ++b) {
            const auto want = all_paths_union(g, a, b);
            std::optional<DynamicDataflowGraph> got;
            try {
                got = walk_subgraph(g, a, b);
            } catch (const ReachabilityError&) {
            }
            if (want.empty() != !got) {
                why = format("reachability disagrees for %u -> %u", a, b);
                return false;
            }
            if (!got) continue;
            std::set<NodeId> have;
            for (const auto& n : got->nodes()) have.insert(static_cast<NodeId>(n.seq));
            std::size_t induced = 0;
            for (const auto& e : g.edges()) induced += want.count(e.src) && want.count(e.dst);
            if (have != want || got->edges().size() != induced) {
                why = format("node or edge set differs for %u -> %u on a %zu-node DAG", a, b, g.size());
                return false;
            }
        }
    return true;
}

DynamicDataflowGraph forward_dag(std::size_t n, std::uint64_t mask) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    std::size_t bit = 0;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j, ++bit)
            if (mask >> bit & 1u) edges.emplace_back(i, j);
    return graph_from_edges(n, edges);
}

Outcome subgraph_oracle() {
    const auto t0 = Clock::now();
    // Every DAG has a topological numbering, so all forward edge sets cover
    // every DAG up to isomorphism. Exhaustive through 6 nodes; 7 and 8 nodes
    // (2^21 and 2^28 edge sets) are sampled uniformly.
    std::size_t graphs = 0;
    std::string why;
    for (std::size_t n = 1; n <= 6; ++n) {
        const std::uint64_t sets = std::uint64_t{1} << (n * (n - 1) / 2);
        for (std::uint64_t mask = 0; mask < sets; ++mask, ++graphs)
            if (!check_subgraph(forward_dag(n, mask), why)) return {false, why};
    }
    const std::size_t exhaustive = graphs;
    auto rng = make_rng(2, "acceptance.subgraph");
    for (std::size_t n = 7; n <= 8; ++n) {
        const std::uint64_t sets = std::uint64_t{1} << (n * (n - 1) / 2);
        for (int k = 0; k < 20000; ++k, ++graphs)
            if (!check_subgraph(forward_dag(n, rng() % sets), why)) return {false, why};
    }
    return {true, format("0 mismatches: all %zu DAGs with <= 6 nodes plus %zu sampled 7-8 node DAGs, every node pair; %.1f s",
                         exhaustive, graphs - exhaustive, seconds_since(t0))};
}

// ---------------------------------------------------------------- 3

using LossFn = std::function<nn::Var(nn::Tape&)>;

// Max relative error between tape gradients and central differences over all parameter entries.
double max_relative_error(const std::vector<nn::Parameter*>& params, const LossFn& f) {
    nn::zero_grads(params);
    {
        nn::Tape tape;
        tape.backward(f(tape));
    }
    auto eval = [&] {
        nn::Tape tape;
        return f(tape).value()(0, 0);
    };
    const double h = 1e-5;
    double worst = 0.0;
    for (auto* p : params)
        for (Eigen::Index k = 0; k < p->value.size(); ++k) {
            const double saved = p->value.data()[k];
            p->value.data()[k] = saved + h;
            const double up = eval();
            p->value.data()[k] = saved - h;
            const double down = eval();
            p->value.data()[k] = saved;
            const double numeric = (up - down) / (2 * h);
            const double analytic = p->grad.data()[k];
            // Floor well above central-difference roundoff, so exact zeros compare as zeros.
            const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
            worst = std::max(worst, std::abs(numeric - analytic) / scale);
        }
    return worst;
}

nn::Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    nn::Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -1.0, 1.0);
    return m;
}

DynamicDataflowGraph random_graph(std::size_t n, double density, Rng& rng) {
    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId i = 0; i < n; ++i)
        for (NodeId j = i + 1; j < n; ++j)
            if (uniform01(rng) < density) edges.emplace_back(i, j);
    return graph_from_edges(n, edges);
}

RowMatrix adjacency_of(const DynamicDataflowGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.size());
    const auto flat = undirected_adjacency(g);
    return Eigen::Map<const RowMatrix>(flat.data(), n, n);
}

Outcome gradient_checks() {
    const auto t0 = Clock::now();
    auto rng = make_rng(3, "acceptance.gradients");
    double gcn = 0, gat = 0, ggnn = 0, fc = 0, stacked = 0;
    for (int inst = 0; inst < 20; ++inst) {
        const auto g = random_graph(5, 0.5, rng);
        const nn::Matrix a = adjacency_of(g);
        const nn::Matrix x = random_matrix(5, 3, rng);
        const nn::Matrix target = random_matrix(5, 4, rng);
        auto lrng = make_rng(static_cast<std::uint64_t>(inst), "acceptance.layers");
        const auto mse = [&](nn::Tape& t, nn::Var out) {
            return nn::scale(nn::sum(nn::square(nn::sub(out, t.constant(target)))), 1.0 / static_cast<double>(target.size()));
        };

        auto l1 = nn::GcnLayer::init("gcn", 3, 4, nn::Activation::tanh, lrng);
        const nn::Matrix a_hat = nn::normalize_adjacency(a);
        gcn = std::max(gcn, max_relative_error(l1.parameters(), [&](nn::Tape& t) {
                           return mse(t, l1.forward(t, t.constant(x), t.constant(a_hat)));
                       }));
        auto l2 = nn::GatLayer::init("gat", 3, 4, nn::Activation::tanh, lrng);
        gat = std::max(gat, max_relative_error(l2.parameters(), [&](nn::Tape& t) {
                           return mse(t, l2.forward(t, t.constant(x), a));
                       }));
        auto l3 = nn::GgnnLayer::init("ggnn", 4, 3, lrng);
        const nn::Matrix x4 = random_matrix(5, 4, rng);
        const nn::Matrix prop = nn::normalize_propagation(a);
        ggnn = std::max(ggnn, max_relative_error(l3.parameters(), [&](nn::Tape& t) {
                             return mse(t, l3.forward(t, t.constant(x4), t.constant(prop)));
                         }));
        auto l4 = nn::FcLayer::init("fc", 3, 4, nn::Activation::sigmoid, lrng);
        fc = std::max(fc, max_relative_error(l4.parameters(), [&](nn::Tape& t) {
                         return mse(t, l4.forward(t, t.constant(x)));
                     }));

        // Whole classifier: backbone stack, readout and both dense layers.
        MapperConfig cfg;
        cfg.backbone = static_cast<Backbone>(inst % 3);
        cfg.neurons = 4;
        cfg.hidden_layers = 2;
        cfg.ggnn_steps = 2;
        auto model = MapperModel::init(3, cfg, static_cast<std::uint64_t>(inst));
        // Zero-initialized weights and biases sit on ReLU kinks; draw every parameter at random.
        for (auto* p : model.parameters()) p->value = random_matrix(p->value.rows(), p->value.cols(), rng);
        const std::vector<int> label{inst % 2};
        stacked = std::max(stacked, max_relative_error(model.parameters(), [&](nn::Tape& t) {
                                return nn::softmax_cross_entropy(mapper_logits(t, model, g, x), label);
                            }));
    }
    const double secs = seconds_since(t0);
    const double worst = std::max({gcn, gat, ggnn, fc, stacked});
    return {worst < 1e-4 && secs < 30.0,
            format("max relative error GCN %.1e, GAT %.1e, GGNN %.1e, FC %.1e, classifier %.1e (limit 1e-4) on 20 "
                   "instances; %.2f s (limit 30 s)",
                   gcn, gat, ggnn, fc, stacked, secs)};
}

// ---------------------------------------------------------------- 4

Outcome equivariance() {
    auto rng = make_rng(4, "acceptance.equivariance");
    double worst_layer = 0.0, worst_classifier = 0.0;
    for (int inst = 0; inst < 50; ++inst) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 4, 12));
        const auto g = random_graph(n, 0.35, rng);
        const nn::Matrix a = adjacency_of(g);
        const nn::Matrix x = random_matrix(static_cast<Eigen::Index>(n), 5, rng);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::PermutationMatrix<Eigen::Dynamic> p(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) p.indices()[static_cast<Eigen::Index>(i)] = perm[i];
        const nn::Matrix pa = p * a * p.transpose();
        const nn::Matrix px = p * x;

        auto lrng = make_rng(static_cast<std::uint64_t>(inst), "acceptance.equivariance.layers");
        const nn::Matrix theta = random_matrix(5, 5, lrng);
        const nn::RowVec<double> attn = random_matrix(1, 10, lrng);
        auto ggnn = nn::GgnnLayer::init("g", 5, 3, lrng);
        const auto gap = [&](const nn::Matrix& permuted_out, const nn::Matrix& out) {
            worst_layer = std::max(worst_layer, (permuted_out - p * out).cwiseAbs().maxCoeff());
        };
        gap(nn::gcn_forward(px, nn::normalize_adjacency(pa), theta, nn::Activation::relu),
            nn::gcn_forward(x, nn::normalize_adjacency(a), theta, nn::Activation::relu));
        gap(nn::gat_forward(px, pa, theta, attn, nn::Activation::relu),
            nn::gat_forward(x, a, theta, attn, nn::Activation::relu));
        gap(nn::ggnn_forward(px, nn::normalize_propagation(pa), ggnn.weights(), 3),
            nn::ggnn_forward(x, nn::normalize_propagation(a), ggnn.weights(), 3));

        // The permuted graph is oriented by its new ids, which keeps it a valid DAG
        // with undirected view P A P^T.
        std::vector<std::pair<NodeId, NodeId>> pedges;
        for (const auto& e : g.edges())
            pedges.emplace_back(static_cast<NodeId>(perm[e.src]), static_cast<NodeId>(perm[e.dst]));
        const auto pg = graph_from_edges(n, pedges);
        MapperConfig cfg;
        cfg.backbone = static_cast<Backbone>(inst % 3);
        cfg.neurons = 8;
        cfg.hidden_layers = 2;
        auto model = MapperModel::init(5, cfg, static_cast<std::uint64_t>(inst));
        for (auto* q : model.parameters()) q->value = random_matrix(q->value.rows(), q->value.cols(), lrng);
        const auto p1 = classify(g, x, model);
        const auto p2 = classify(pg, px, model);
        worst_classifier = std::max(worst_classifier, std::abs(p1.probabilities[1] - p2.probabilities[1]));
        if (p1.label != p2.label && std::abs(p1.probabilities[1] - 0.5) > 1e-10) worst_classifier = 1.0;
    }
    const bool pass = worst_layer <= 1e-10 && worst_classifier <= 1e-10;
    return {pass, format("50 random graphs: max |f(PX) - P f(X)| = %.1e over GCN/GAT/GGNN, max classifier probability "
                         "change %.1e (limit 1e-10)",
                         worst_layer, worst_classifier)};
}

// ---------------------------------------------------------------- 5

Outcome spectral_oracle() {
    auto rng = make_rng(5, "acceptance.spectral");
    std::size_t exact = 0;
    for (int inst = 0; inst < 100; ++inst) {
        const auto k = static_cast<std::size_t>(uniform_int(rng, 2, 4));
        const auto n = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(2 * k), 30));
        std::vector<int> block(n);
        for (std::size_t i = 0; i < n; ++i)
            block[i] = i < k ? static_cast<int>(i) : static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(k) - 1));
        std::shuffle(block.begin(), block.end(), rng);
        // Each block is a random spanning tree plus random chords, so it is connected.
        RowMatrix s = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (int b = 0; b < static_cast<int>(k); ++b) {
            std::vector<Eigen::Index> members;
            for (std::size_t i = 0; i < n; ++i)
                if (block[i] == b) members.push_back(static_cast<Eigen::Index>(i));
            for (std::size_t m = 1; m < members.size(); ++m) {
                const auto parent = members[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(m) - 1))];
                s(members[m], parent) = s(parent, members[m]) = uniform(rng, 0.1, 1.0);
            }
            for (auto i : members)
                for (auto j : members)
                    if (i < j && uniform01(rng) < 0.3) s(i, j) = s(j, i) = uniform(rng, 0.1, 1.0);
        }
        const auto labels = spectral_clustering(s, k, static_cast<std::uint64_t>(inst));
        exact += canonical_labels(labels) == canonical_labels(block);
    }
    return {exact == 100, format("%zu / 100 block-diagonal instances recovered exactly (2-4 blocks, <= 30 nodes)", exact)};
}

// ---------------------------------------------------------------- 6

// Balanced planted pair: both kernels share a pattern and a size.
struct Planted {
    InstructionTrace trace;
    std::size_t first = 0;  // nodes of the first kernel
};

Planted planted_pair(std::uint64_t index) {
    auto rng = make_rng(6, "acceptance.planted", index);
    const auto pattern = static_cast<Pattern>(uniform_int(rng, 0, 2));
    const auto size = static_cast<std::size_t>(pattern == Pattern::parallel_loop ? uniform_int(rng, 6, 12)
                                                                                  : uniform_int(rng, 16, 40));
    const auto a = generate_synthetic_trace(pattern, size, stream_seed(6, "planted.a", index));
    const auto b = generate_synthetic_trace(pattern, size, stream_seed(6, "planted.b", index));
    return {join_traces(a, b), build_dfg(a).size()};
}

Outcome partition_recovery() {
    const auto t0 = Clock::now();
    PipelineConfig base;
    base.partition.clusters = 2;
    double total = 0.0, worst = 1.0;
    std::size_t max_iters = 0;
    for (std::uint64_t i = 0; i < 20; ++i) {
        const auto planted = planted_pair(i);
        const auto g = build_dfg(planted.trace);
        auto cfg = base;
        cfg.seed = stream_seed(6, "planted.seed", i);
        cfg = cfg.resolved();
        const auto x = graph_features(g, cfg.features, cfg.walk);
        const auto p = partition(g, x, cfg.partition);
        std::size_t same = 0;
        for (std::size_t v = 0; v < g.size(); ++v) same += (p.assignment[v] == 0) == (v < planted.first);
        const double agree = std::max(same, g.size() - same) / static_cast<double>(g.size());
        total += agree;
        worst = std::min(worst, agree);
        max_iters = std::max(max_iters, p.history.size());
    }
    const double mean = total / 20.0;
    const double secs = seconds_since(t0);
    return {mean >= 0.95 && max_iters <= 20 && secs < 120.0,
            format("mean node agreement %.4f (limit 0.95, worst graph %.3f); at most %zu outer iterations (limit 20); "
                   "%.1f s (limit 120 s)",
                   mean, worst, max_iters, secs)};
}

// ---------------------------------------------------------------- 7

struct Shared {
    PipelineConfig config = PipelineConfig{}.resolved();
    std::optional<Corpus> corpus;
    std::optional<MapperModel> model;

    const Corpus& get_corpus() {
        if (!corpus) corpus = generate_corpus(200, CorpusMix::balanced, config.seed, config.platform);
        return *corpus;
    }
    const MapperModel& get_model() {
        if (!model) model = train(corpus_samples(get_corpus(), config.features, config.walk), config.mapper, config.seed).model;
        return *model;
    }
};

Outcome classification(Shared& shared) {
    const auto t0 = Clock::now();
    const auto& cfg = shared.config;
    AblationGrid grid;
    grid.features = {FeatureKind::degree, FeatureKind::weight, FeatureKind::multifractal};
    grid.repetitions = 5;
    grid.folds = 5;
    AblationBase base{cfg.walk, cfg.mapper, cfg.features};
    const auto rows = ablation_sweep(labeled_graphs(shared.get_corpus()), grid, base, cfg.seed);
    const double degree = rows[0].mean, weight = rows[1].mean, mf = rows[2].mean;
    const double secs = seconds_since(t0);
    const bool ordered = degree < weight && weight < mf;
    return {mf >= 0.90 && ordered && secs < 600.0,
            format("multifractal 5-fold CV accuracy %.4f +- %.4f (limit 0.90); ablation degree %.4f, weight %.4f, "
                   "multifractal %.4f (%s degree < weight < multifractal); %.0f s (limit 600 s)",
                   mf, rows[2].std, degree, weight, mf, ordered ? "satisfies" : "violates", secs)};
}

// ---------------------------------------------------------------- 8

double exhaustive_cost(const std::vector<KernelSpec>& ks, const std::vector<Transfer>& ts, const PlatformConfig& p,
                       bool& feasible) {
    std::vector<Coord> cores(ks.size());
    const std::array<std::vector<Coord>, 2> options{device_cores(Device::cpu, p), device_cores(Device::gpu, p)};
    std::array<std::vector<bool>, 2> used{std::vector<bool>(options[0].size()), std::vector<bool>(options[1].size())};
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == ks.size()) {
            best = std::min(best, communication_cost(cores, ts, p));
            return;
        }
        const auto d = static_cast<std::size_t>(ks[i].device);
        for (std::size_t c = 0; c < options[d].size(); ++c) {
            if (used[d][c]) continue;
            used[d][c] = true;
            cores[i] = options[d][c];
            rec(i + 1);
            used[d][c] = false;
        }
    };
    rec(0);
    feasible = std::isfinite(best);
    return best;
}

Outcome scheduler(Shared& shared) {
    // Every instance: 1-3 kernels, each CPU or GPU, each forward pair either
    // silent or carrying one of three volumes, on 1-4 cores per class.
    std::size_t instances = 0, mismatches = 0;
    const std::array<double, 3> volumes{1.0, 64.0, 4096.0};
    for (std::size_t cores = 1; cores <= 4; ++cores) {
        PlatformConfig p;
        p.mesh_width = 4;
        p.mesh_height = 2;
        p.cpu_cores = p.gpu_cores = cores;
        for (std::size_t n = 1; n <= 3; ++n) {
            std::vector<std::pair<std::size_t, std::size_t>> pairs;
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
            std::size_t patterns = 1;
            for (std::size_t k = 0; k < pairs.size(); ++k) patterns *= 4;
            for (std::uint32_t devices = 0; devices < (1u << n); ++devices)
                for (std::size_t pat = 0; pat < patterns; ++pat) {
                    std::vector<KernelSpec> ks;
                    for (std::size_t i = 0; i < n; ++i)
                        ks.push_back({"k", (devices >> i & 1u) ? Device::gpu : Device::cpu, 1e-6, 2e-6});
                    std::vector<Transfer> ts;
                    for (std::size_t k = 0, code = pat; k < pairs.size(); ++k, code /= 4)
                        if (code % 4) ts.push_back({pairs[k].first, pairs[k].second, volumes[code % 4 - 1]});
                    bool feasible = false;
                    const double best = exhaustive_cost(ks, ts, p, feasible);
                    ++instances;
                    try {
                        const auto plan = greedy_map(ks, ts, p);
                        std::vector<Coord> chosen;
                        for (const auto& k : plan.kernels) chosen.push_back(k.core);
                        const double got = communication_cost(chosen, ts, p);
                        if (!feasible || std::abs(got - best) > 1e-12 * std::max(1.0, best)) ++mismatches;
                    } catch (const CapacityError&) {
                        if (feasible) ++mismatches;
                    }
                }
        }
    }

    const PlatformConfig mesh;
    std::size_t hop_errors = 0;
    for (int a = 0; a < mesh.mesh_width * mesh.mesh_height; ++a)
        for (int b = 0; b < mesh.mesh_width * mesh.mesh_height; ++b) {
            const Coord ca{a % mesh.mesh_width, a / mesh.mesh_width}, cb{b % mesh.mesh_width, b / mesh.mesh_width};
            const auto route = xy_route(ca, cb, mesh);
            hop_errors += static_cast<int>(route.size()) - 1 != manhattan_distance(ca, cb, mesh);
        }

    const auto app = join_traces(generate_synthetic_trace(Pattern::parallel_loop, 64, shared.config.seed),
                                 generate_synthetic_trace(Pattern::sequential_chain, 48, shared.config.seed + 1));
    const auto report = run_pipeline(app, shared.get_model(), shared.config);
    const bool pass = mismatches == 0 && hop_errors == 0 && report.speedup > 1.0;
    return {pass, format("greedy vs exhaustive communication cost: %zu mismatches in %zu instances; XY hops != "
                         "Manhattan on %zu of 4096 core pairs; mixed app speedup %.3f over the CPU baseline (limit > 1) "
                         "with %zu kernels",
                         mismatches, instances, hop_errors, report.speedup, report.kernels.size())};
}

// ---------------------------------------------------------------- 9

Outcome determinism(Shared& shared) {
    const auto app = join_traces(generate_synthetic_trace(Pattern::parallel_loop, 64, shared.config.seed),
                                 generate_synthetic_trace(Pattern::sequential_chain, 48, shared.config.seed + 1));
    // Second run rebuilds the corpus and retrains, sharing nothing with the first.
    Shared fresh;
    const auto first = report_json(run_pipeline(app, shared.get_model(), shared.config));
    const auto second = report_json(run_pipeline(app, fresh.get_model(), fresh.config));
    return {first == second, format("two independent corpus -> train -> pipeline runs: reports of %zu and %zu bytes %s",
                                    first.size(), second.size(), first == second ? "are identical" : "DIFFER")};
}

}  // namespace

// Optional arguments pick criteria by number; default runs all of them.
int main(int argc, char** argv) {
    Shared shared;
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"fractal correctness", fractal_correctness},
        {"subgraph oracle", subgraph_oracle},
        {"gradient checks", gradient_checks},
        {"equivariance", equivariance},
        {"spectral oracle", spectral_oracle},
        {"partition recovery", partition_recovery},
        {"desk-scale classification", [&] { return classification(shared); }},
        {"scheduler oracle", [&] { return scheduler(shared); }},
        {"determinism", [&] { return determinism(shared); }},
    };
    std::set<std::size_t> selected;
    for (int a = 1; a < argc; ++a) selected.insert(std::stoul(argv[a]));
    int failed = 0, ran = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!selected.empty() && !selected.count(i + 1)) continue;
        ++ran;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", ran - failed, ran);
    return failed ? 1 : 0;
}
