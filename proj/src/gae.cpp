#include "pgl/gae.hpp"

#include <numeric>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "pgl/errors.hpp"
#include "pgl/spectral.hpp"

namespace pgl {

namespace {

RowMatrix dense_adjacency(const DynamicDataflowGraph& g) {
    const auto n = static_cast<Eigen::Index>(g.size());
    const auto flat = undirected_adjacency(g);
    return Eigen::Map<const RowMatrix>(flat.data(), n, n);
}

}  // namespace

GaeModel GaeModel::init(std::size_t input_width, const GaeConfig& config, std::uint64_t seed) {
    auto rng = make_rng(seed, "gae.init");
    const auto in = static_cast<Eigen::Index>(input_width);
    const auto hidden = static_cast<Eigen::Index>(config.hidden);
    const auto emb = static_cast<Eigen::Index>(config.embedding);
    return {nn::GcnLayer::init("gae.encoder1", in, hidden, nn::Activation::relu, rng),
            nn::GcnLayer::init("gae.encoder2", hidden, emb, nn::Activation::identity, rng)};
}

GaeOutput gae_forward(const RowMatrix& features, const RowMatrix& adjacency, const GaeModel& model) {
    if (features.rows() != adjacency.rows() || adjacency.rows() != adjacency.cols())
        throw ShapeError("gae_forward: feature rows must match adjacency size");
    if (static_cast<std::size_t>(features.cols()) != model.input_width())
        throw ShapeError("gae_forward: feature width does not match the encoder");
    const nn::Matrix a_hat = nn::normalize_adjacency(adjacency);
    const nn::Matrix hidden = nn::gcn_forward(features, a_hat, model.encoder1.theta.value, model.encoder1.activation);
    GaeOutput out;
    out.embedding = nn::gcn_forward(hidden, a_hat, model.encoder2.theta.value, model.encoder2.activation);
    out.reconstruction = nn::activate(out.embedding * out.embedding.transpose(), nn::Activation::sigmoid);
    return out;
}

std::vector<double> gae_fit(GaeModel& model, const RowMatrix& features, const RowMatrix& adjacency,
                            std::size_t epochs, nn::Adam& optimizer) {
    if (features.rows() != adjacency.rows()) throw ShapeError("gae_fit: feature rows must match adjacency size");
    const nn::Matrix a_hat = nn::normalize_adjacency(adjacency);
    nn::Matrix target = adjacency;
    target.diagonal().setOnes();
    const double positives = target.sum();
    const double pos_weight = static_cast<double>(target.size()) / positives;

    auto params = model.parameters();
    std::vector<double> losses;
    losses.reserve(epochs);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        nn::zero_grads(params);
        nn::Tape tape;
        nn::Var a = tape.constant(a_hat);
        nn::Var x = tape.constant(features);
        nn::Var h = model.encoder1.forward(tape, x, a);
        nn::Var z = model.encoder2.forward(tape, h, a);
        nn::Var loss = nn::bce_with_logits(nn::matmul_transposed(z, z), target, pos_weight);
        losses.push_back(loss.value()(0, 0));
        tape.backward(loss);
        optimizer.step(params);
    }
    return losses;
}

GaeTraining gae_train(const DynamicDataflowGraph& g, const RowMatrix& features, std::size_t epochs,
                      std::uint64_t seed, const GaeConfig& config) {
    if (epochs == 0) throw InvalidArgument("gae_train: epochs must be at least 1");
    GaeTraining out{GaeModel::init(static_cast<std::size_t>(features.cols()), config, seed), {}};
    nn::Adam optimizer({.learning_rate = config.learning_rate});
    out.losses = gae_fit(out.model, features, dense_adjacency(g), epochs, optimizer);
    return out;
}

RowMatrix distance_matrix(const RowMatrix& embedding) {
    const RowMatrix gram = (embedding * embedding.transpose()).cwiseAbs();
    return 0.5 * (gram + gram.transpose());
}

RowMatrix gae_input(const RowMatrix& features, const GaeConfig& config) {
    const RowMatrix* blocks[] = {&features};
    const RowMatrix scaled = Standardizer::fit(blocks).apply(features);
    if (!config.identity_channel) return scaled;
    const auto n = features.rows();
    RowMatrix out(n, scaled.cols() + n);
    out << scaled, RowMatrix::Identity(n, n);
    return out;
}

std::string_view to_string(Affinity a) {
    switch (a) {
        case Affinity::magnitude: return "magnitude";
        case Affinity::decoder: return "decoder";
        case Affinity::graph: return "graph";
    }
    return "?";
}

std::optional<Affinity> parse_affinity(std::string_view text) {
    if (text == "magnitude") return Affinity::magnitude;
    if (text == "decoder") return Affinity::decoder;
    if (text == "graph") return Affinity::graph;
    return std::nullopt;
}

RowMatrix affinity_matrix(const RowMatrix& embedding, Affinity kind) {
    if (kind == Affinity::magnitude) return distance_matrix(embedding);
    const RowMatrix gram = embedding * embedding.transpose();
    RowMatrix s = gram.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return 0.5 * (s + s.transpose());
}

RowMatrix nearest_neighbor_graph(const RowMatrix& similarity, std::size_t m) {
    const auto n = static_cast<std::size_t>(similarity.rows());
    if (m == 0 || m + 1 >= n) return similarity;
    RowMatrix keep = RowMatrix::Zero(similarity.rows(), similarity.cols());
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::iota(order.begin(), order.end(), 0);
        const auto row = static_cast<Eigen::Index>(i);
        // Self first, then by descending similarity; index breaks ties.
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m + 1), order.end(),
                          [&](std::size_t a, std::size_t b) {
                              if ((a == i) != (b == i)) return a == i;
                              const double sa = similarity(row, static_cast<Eigen::Index>(a));
                              const double sb = similarity(row, static_cast<Eigen::Index>(b));
                              return sa != sb ? sa > sb : a < b;
                          });
        for (std::size_t r = 0; r <= m; ++r) {
            const auto j = static_cast<Eigen::Index>(order[r]);
            keep(row, j) = keep(j, row) = 1.0;
        }
    }
    return similarity.cwiseProduct(keep);
}

std::vector<std::vector<NodeId>> Partition::members() const {
    std::vector<std::vector<NodeId>> out(k);
    for (std::size_t v = 0; v < assignment.size(); ++v) out[static_cast<std::size_t>(assignment[v])].push_back(
        static_cast<NodeId>(v));
    return out;
}

std::vector<int> match_labels(const std::vector<int>& previous, const std::vector<int>& current) {
    if (previous.size() != current.size()) throw InvalidArgument("match_labels: size mismatch");
    std::map<std::pair<int, int>, std::size_t> overlap;
    for (std::size_t v = 0; v < current.size(); ++v) ++overlap[{current[v], previous[v]}];
    // A current cluster is identified by its first node, not its label value,
    // so tie-breaking (and hence stability) is invariant to relabeling.
    std::map<int, std::size_t> first_node;
    for (std::size_t v = 0; v < current.size(); ++v) first_node.emplace(current[v], v);
    std::vector<std::tuple<std::size_t, int, int>> pairs;
    for (const auto& [key, count] : overlap) pairs.emplace_back(count, key.first, key.second);
    std::sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        const auto fa = first_node.at(std::get<1>(a)), fb = first_node.at(std::get<1>(b));
        return std::tie(fa, std::get<2>(a)) < std::tie(fb, std::get<2>(b));
    });
    std::map<int, int> mapping;
    std::map<int, bool> taken;
    for (const auto& [count, cur, prev] : pairs) {
        if (mapping.count(cur) || taken[prev]) continue;
        mapping[cur] = prev;
        taken[prev] = true;
    }
    int fresh = 0;
    for (int l : previous) fresh = std::max(fresh, l + 1);
    for (int l : current) fresh = std::max(fresh, l + 1);
    std::vector<int> out(current.size());
    for (std::size_t v = 0; v < current.size(); ++v) {
        auto it = mapping.find(current[v]);
        if (it == mapping.end()) it = mapping.emplace(current[v], fresh++).first;
        out[v] = it->second;
    }
    return out;
}

double stability(const std::vector<int>& previous, const std::vector<int>& current) {
    if (current.empty()) return 1.0;
    const auto matched = match_labels(previous, current);
    std::size_t same = 0;
    for (std::size_t v = 0; v < current.size(); ++v) same += matched[v] == previous[v];
    return static_cast<double>(same) / static_cast<double>(current.size());
}

Partition partition(const DynamicDataflowGraph& g, const RowMatrix& features, const PartitionConfig& config) {
    if (g.empty()) throw InvalidArgument("partition: empty graph");
    if (static_cast<std::size_t>(features.rows()) != g.size())
        throw ShapeError("partition: one feature row per node required");
    const auto n = g.size();
    Partition result;
    if (config.clusters && *config.clusters <= 1) {
        result.k = 1;
        result.assignment.assign(n, 0);
        result.history = {1.0};
        result.converged = true;
        return result;
    }

    const RowMatrix adjacency = dense_adjacency(g);
    const RowMatrix input = gae_input(features, config.gae);
    auto model = GaeModel::init(static_cast<std::size_t>(input.cols()), config.gae, config.seed);
    nn::Adam optimizer({.learning_rate = config.gae.learning_rate});
    std::optional<std::size_t> k = config.clusters;
    std::vector<int> previous;

    for (std::size_t iter = 0; iter < std::max<std::size_t>(1, config.max_iterations); ++iter) {
        if (!config.warm_start && iter > 0) {
            model = GaeModel::init(static_cast<std::size_t>(input.cols()), config.gae,
                                   stream_seed(config.seed, "gae.cold", iter));
            optimizer = nn::Adam({.learning_rate = config.gae.learning_rate});
        }
        gae_fit(model, input, adjacency, config.gae_epochs, optimizer);
        const auto z = gae_forward(input, adjacency, model).embedding;
        RowMatrix dist = config.affinity == Affinity::graph
                             ? RowMatrix(affinity_matrix(z, Affinity::decoder).cwiseProduct(adjacency))
                             : nearest_neighbor_graph(affinity_matrix(z, config.affinity), config.neighbors);
        if (config.regularization > 0.0)
            dist.array() += config.regularization * dist.sum() / static_cast<double>(n * n);
        // The cluster count is fixed on the first iteration so stability compares like with like.
        if (!k) k = eigengap_cluster_count(dist, config.k_max);
        const auto kk = std::min<std::size_t>(*k, n);
        std::vector<int> labels =
            kk < 2 ? std::vector<int>(n, 0)
                   : spectral_clustering(dist, kk, stream_seed(config.seed, "partition.kmeans", iter),
                                         config.kmeans_restarts);
        if (previous.empty()) {
            result.history.push_back(0.0);
        } else {
            const double s = stability(previous, labels);
            labels = match_labels(previous, labels);
            result.history.push_back(s);
            if (s >= config.stability_target) {
                previous = labels;
                result.converged = true;
                break;
            }
        }
        previous = labels;
    }
    result.assignment = canonical_labels(previous);
    result.k = static_cast<std::size_t>(*std::max_element(result.assignment.begin(), result.assignment.end()) + 1);
    return result;
}

void write_partition(const Partition& p, std::ostream& out) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", p.history.empty() ? 0.0 : p.history.back());
    out << "partition " << p.k << ' ' << p.history.size() << ' ' << buf << ' ' << (p.converged ? 1 : 0) << '\n';
    out << "history";
    for (double h : p.history) {
        std::snprintf(buf, sizeof buf, "%.17g", h);
        out << ' ' << buf;
    }
    out << '\n';
    for (std::size_t v = 0; v < p.assignment.size(); ++v) out << "node " << v << " cluster " << p.assignment[v] << '\n';
}

Partition read_partition(std::istream& in) {
    Partition p;
    std::string line, kind;
    std::size_t line_no = 0, iterations = 0;
    double final_stability = 0.0;
    int converged = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        ls >> kind;
        if (kind == "partition") {
            if (!(ls >> p.k >> iterations >> final_stability >> converged)) throw ParseError(line_no, "bad header");
            p.converged = converged != 0;
            header = true;
        } else if (kind == "history") {
            std::string tok;
            while (ls >> tok) p.history.push_back(std::strtod(tok.c_str(), nullptr));
        } else if (kind == "node") {
            std::size_t id;
            std::string word;
            int cluster;
            if (!(ls >> id >> word >> cluster) || word != "cluster") throw ParseError(line_no, "bad node record");
            if (id != p.assignment.size()) throw ParseError(line_no, "node ids must be dense and ascending");
            if (cluster < 0) throw ParseError(line_no, "negative cluster id");
            p.assignment.push_back(cluster);
        } else {
            throw ParseError(line_no, "unknown record '" + kind + "'");
        }
    }
    if (!header) throw ParseError(0, "missing partition header");
    if (p.history.size() != iterations) throw ParseError(0, "history length disagrees with header");
    for (int c : p.assignment)
        if (static_cast<std::size_t>(c) >= p.k) throw ParseError(0, "cluster id exceeds k");
    return p;
}

}  // namespace pgl
