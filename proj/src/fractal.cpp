#include "pgl/fractal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <istream>
#include <ostream>
#include <queue>
#include <sstream>

#include "pgl/errors.hpp"

namespace pgl {

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

struct WeightedNeighbor {
    NodeId node;
    double weight;
};

std::vector<std::vector<WeightedNeighbor>> weighted_undirected(const DynamicDataflowGraph& g) {
    std::vector<std::vector<WeightedNeighbor>> adj(g.size());
    for (const auto& e : g.edges()) {
        adj[e.src].push_back({e.dst, e.weight});
        adj[e.dst].push_back({e.src, e.weight});
    }
    return adj;
}

// Nodes whose weighted distance from `source` stays within `cutoff`.
std::vector<char> within_cutoff(const std::vector<std::vector<WeightedNeighbor>>& adj, NodeId source,
                                double cutoff) {
    std::vector<double> dist(adj.size(), std::numeric_limits<double>::infinity());
    std::vector<char> done(adj.size(), 0);
    using Item = std::pair<double, NodeId>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.push({0.0, source});
    while (!heap.empty()) {
        auto [d, v] = heap.top();
        heap.pop();
        if (done[v]) continue;
        done[v] = 1;
        for (const auto& nb : adj[v]) {
            const double nd = d + nb.weight;
            if (nd <= cutoff && nd < dist[nb.node]) {
                dist[nb.node] = nd;
                heap.push({nd, nb.node});
            }
        }
    }
    return done;
}

double log_mean_exp(std::span<const double> xs) {
    const double m = *std::max_element(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s / static_cast<double>(xs.size()));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<double> default_q_grid() {
    std::vector<double> q;
    for (int v = -10; v <= 10; ++v)
        if (v != 1) q.push_back(v);
    return q;
}

void WalkParams::validate() const {
    if (walkers == 0) throw InvalidArgument("walkers must be at least 1");
    if (walk_len == 0) throw InvalidArgument("walk length must be at least 1");
    if (!(cutoff > 0.0)) throw InvalidArgument("cutoff must be positive");
    if (q_grid.empty()) throw InvalidArgument("q grid is empty");
    for (double q : q_grid)
        if (q == 1.0) throw InvalidArgument("q grid must exclude 1");
}

std::vector<Transition> transition_probabilities(const DynamicDataflowGraph& g, NodeId node) {
    auto out = g.out_edges(node);
    std::vector<Transition> probs;
    probs.reserve(out.size());
    double total = 0.0;
    for (const auto& e : out) total += e.weight;
    for (const auto& e : out) probs.push_back({e.dst, e.weight / total});
    return probs;
}

std::vector<NodeId> random_walk(const DynamicDataflowGraph& g, NodeId start, std::size_t walk_len, Rng& rng) {
    if (start >= g.size()) throw LookupError("unknown node " + std::to_string(start));
    std::vector<NodeId> path{start};
    NodeId cur = start;
    for (std::size_t step = 0; step < walk_len; ++step) {
        auto out = g.out_edges(cur);
        if (out.empty()) break;
        double total = 0.0;
        for (const auto& e : out) total += e.weight;
        // Inverse-CDF draw; the last edge absorbs rounding.
        double u = uniform01(rng) * total;
        NodeId next = out.back().dst;
        for (const auto& e : out) {
            if (u < e.weight) {
                next = e.dst;
                break;
            }
            u -= e.weight;
        }
        path.push_back(next);
        cur = next;
    }
    return path;
}

DynamicDataflowGraph walk_subgraph(const DynamicDataflowGraph& g, NodeId from, NodeId to) {
    if (from >= g.size() || to >= g.size()) throw LookupError("walk_subgraph: unknown node");
    if (from == to) {
        const NodeId only[] = {from};
        return g.induced(only);
    }
    if (to < from) throw ReachabilityError("node " + std::to_string(to) + " is not reachable from " +
                                           std::to_string(from));
    // Ids follow execution order, so both searches stay inside [from, to].
    const std::size_t span_len = to - from + 1;
    std::vector<char> forward(span_len, 0), backward(span_len, 0);
    forward[0] = 1;
    for (NodeId v = from; v <= to; ++v) {
        if (!forward[v - from]) continue;
        for (const auto& e : g.out_edges(v))
            if (e.dst <= to) forward[e.dst - from] = 1;
    }
    if (!forward[span_len - 1])
        throw ReachabilityError("node " + std::to_string(to) + " is not reachable from " + std::to_string(from));
    backward[span_len - 1] = 1;
    for (NodeId v = to + 1; v-- > from;) {
        if (!backward[v - from]) continue;
        for (auto k : g.in_edge_indices(v)) {
            const auto src = g.edges()[k].src;
            if (src >= from) backward[src - from] = 1;
        }
    }
    std::vector<NodeId> keep;
    for (std::size_t k = 0; k < span_len; ++k)
        if (forward[k] && backward[k]) keep.push_back(static_cast<NodeId>(from + k));
    return g.induced(keep);
}

BoxCounts box_counts(const DynamicDataflowGraph& sg, double cutoff) {
    const auto n = sg.size();
    std::vector<std::vector<std::size_t>> hops(n);
    std::size_t diameter = 0;
    for (NodeId v = 0; v < n; ++v) {
        hops[v] = undirected_hops(sg, v);
        for (auto d : hops[v])
            if (d != kUnreached) diameter = std::max(diameter, d);
    }
    if (diameter < 2)
        throw DegenerateGraph("subgraph diameter " + std::to_string(diameter) + " is too small for box counting");

    const bool limited = std::isfinite(cutoff);
    const auto adj = limited ? weighted_undirected(sg) : std::vector<std::vector<WeightedNeighbor>>{};

    BoxCounts boxes;
    boxes.diameter = diameter;
    boxes.nodes = n;
    boxes.counts = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(diameter));
    std::vector<std::size_t> histogram(diameter + 1);
    for (NodeId c = 0; c < n; ++c) {
        std::fill(histogram.begin(), histogram.end(), 0);
        const auto covered = limited ? within_cutoff(adj, c, cutoff) : std::vector<char>(n, 1);
        for (NodeId v = 0; v < n; ++v)
            if (covered[v] && hops[c][v] != kUnreached) ++histogram[hops[c][v]];
        double running = 0.0;
        for (std::size_t l = 1; l <= diameter; ++l) {
            running += static_cast<double>(histogram[l - 1]);
            boxes.counts(c, static_cast<Eigen::Index>(l - 1)) = running;
        }
    }
    return boxes;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw DegenerateGraph("regression needs at least two points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (sxx == 0.0) throw DegenerateGraph("regression needs two distinct box sizes");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const double r = ys[k] - (fit.intercept + fit.slope * xs[k]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

std::vector<double> log_moment_curve(const BoxCounts& boxes, double q) {
    std::vector<double> curve(boxes.diameter);
    std::vector<double> terms(boxes.nodes);
    for (std::size_t l = 1; l <= boxes.diameter; ++l) {
        for (std::size_t c = 0; c < boxes.nodes; ++c) terms[c] = (q - 1.0) * std::log(boxes.ratio(c, l));
        curve[l - 1] = log_mean_exp(terms);
    }
    return curve;
}

std::vector<MassExponent> mass_exponents(const BoxCounts& boxes, std::span<const double> q_grid) {
    if (boxes.diameter < 2) throw DegenerateGraph("need at least two box sizes");
    std::vector<double> xs(boxes.diameter);
    for (std::size_t l = 1; l <= boxes.diameter; ++l)
        xs[l - 1] = std::log(static_cast<double>(l) / static_cast<double>(boxes.diameter));
    std::vector<MassExponent> out;
    out.reserve(q_grid.size());
    for (double q : q_grid) {
        const auto ys = log_moment_curve(boxes, q);
        const auto fit = fit_line(xs, ys);
        out.push_back({q, fit.slope, fit.r_squared});
    }
    return out;
}

std::vector<double> generalized_fractal_dimension(std::span<const MassExponent> taus) {
    std::vector<double> dims;
    dims.reserve(taus.size());
    for (const auto& t : taus) {
        if (t.q == 1.0) throw InvalidArgument("D(q) is undefined at q = 1");
        dims.push_back(t.tau / (t.q - 1.0));
    }
    return dims;
}

std::vector<double> fractal_spectrum(const DynamicDataflowGraph& sg, std::span<const double> q_grid,
                                     double cutoff) {
    std::vector<double> zeros(q_grid.size(), 0.0);
    if (sg.size() < 3) return zeros;
    try {
        const auto boxes = box_counts(sg, cutoff);
        auto dims = generalized_fractal_dimension(mass_exponents(boxes, q_grid));
        for (double d : dims)
            if (!std::isfinite(d)) return zeros;
        return dims;
    } catch (const DegenerateGraph&) {
        return zeros;
    }
}

std::vector<double> node_feature_row(const DynamicDataflowGraph& g, NodeId node, const WalkParams& params) {
    const auto q = params.q_grid.size();
    std::vector<double> row(params.walkers * q, 0.0);
    auto rng = make_rng(params.seed, "features.walk", node);
    for (std::size_t k = 0; k < params.walkers; ++k) {
        const auto path = random_walk(g, node, params.walk_len, rng);
        if (path.back() == node) continue;
        const auto sg = walk_subgraph(g, node, path.back());
        const auto spectrum = fractal_spectrum(sg, params.q_grid, params.cutoff);
        std::copy(spectrum.begin(), spectrum.end(), row.begin() + static_cast<std::ptrdiff_t>(k * q));
    }
    return row;
}

FeatureMatrix node_features(const DynamicDataflowGraph& g, const WalkParams& params) {
    params.validate();
    FeatureMatrix f;
    f.walkers = params.walkers;
    f.q_grid = params.q_grid;
    f.seed = params.seed;
    f.values.resize(static_cast<Eigen::Index>(g.size()),
                    static_cast<Eigen::Index>(params.walkers * params.q_grid.size()));
    for (NodeId v = 0; v < g.size(); ++v) {
        const auto row = node_feature_row(g, v, params);
        f.values.row(v) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
    }
    return f;
}

std::string_view to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::degree: return "degree";
        case FeatureKind::weight: return "weight";
        case FeatureKind::multifractal: return "multifractal";
    }
    return "?";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view text) {
    for (auto k : {FeatureKind::degree, FeatureKind::weight, FeatureKind::multifractal})
        if (to_string(k) == text) return k;
    return std::nullopt;
}

RowMatrix degree_features(const DynamicDataflowGraph& g) {
    RowMatrix x(static_cast<Eigen::Index>(g.size()), 2);
    for (NodeId v = 0; v < g.size(); ++v) {
        x(v, 0) = static_cast<double>(g.in_degree(v));
        x(v, 1) = static_cast<double>(g.out_degree(v));
    }
    return x;
}

RowMatrix weight_features(const DynamicDataflowGraph& g) {
    RowMatrix x = RowMatrix::Zero(static_cast<Eigen::Index>(g.size()), 2);
    for (const auto& e : g.edges()) {
        x(e.dst, 0) += e.weight;
        x(e.src, 1) += e.weight;
    }
    return x;
}

RowMatrix extract_features(const DynamicDataflowGraph& g, FeatureKind kind, const WalkParams& params) {
    switch (kind) {
        case FeatureKind::degree: return degree_features(g);
        case FeatureKind::weight: return weight_features(g);
        case FeatureKind::multifractal: return node_features(g, params).values;
    }
    throw InvalidArgument("unknown feature kind");
}

Standardizer Standardizer::fit(std::span<const RowMatrix* const> blocks) {
    if (blocks.empty()) throw InvalidArgument("Standardizer::fit: no data");
    const auto width = blocks.front()->cols();
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(width);
    Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(width);
    double count = 0.0;
    for (const auto* b : blocks) {
        if (b->cols() != width) throw ShapeError("Standardizer::fit: inconsistent feature widths");
        sum += b->colwise().sum();
        count += static_cast<double>(b->rows());
    }
    Standardizer s;
    s.mean = count > 0 ? Eigen::RowVectorXd(sum / count) : Eigen::RowVectorXd::Zero(width);
    for (const auto* b : blocks) sq += (b->rowwise() - s.mean).array().square().colwise().sum().matrix();
    s.scale.resize(width);
    for (Eigen::Index c = 0; c < width; ++c) {
        const double var = count > 0 ? sq(c) / count : 0.0;
        s.scale(c) = var > 1e-24 ? 1.0 / std::sqrt(var) : 0.0;
    }
    return s;
}

RowMatrix Standardizer::apply(const RowMatrix& x) const {
    if (x.cols() != mean.size()) throw ShapeError("Standardizer::apply: feature width mismatch");
    return ((x.rowwise() - mean).array().rowwise() * scale.array()).matrix();
}

void write_features(const FeatureMatrix& f, std::ostream& out) {
    out << "features " << f.rows() << ' ' << f.walkers << ' ' << f.q_grid.size() << ' ' << f.seed << '\n';
    out << 'q';
    for (double q : f.q_grid) out << ' ' << format_double(q);
    out << '\n';
    for (Eigen::Index r = 0; r < f.values.rows(); ++r) {
        out << "row";
        for (Eigen::Index c = 0; c < f.values.cols(); ++c) out << ' ' << format_double(f.values(r, c));
        out << '\n';
    }
}

FeatureMatrix read_features(std::istream& in) {
    std::string line, kind;
    std::size_t rows = 0, q_count = 0;
    FeatureMatrix f;
    if (!std::getline(in, line)) throw ParseError(1, "missing features header");
    {
        std::istringstream ls(line);
        if (!(ls >> kind >> rows >> f.walkers >> q_count >> f.seed) || kind != "features")
            throw ParseError(1, "bad features header");
    }
    if (!std::getline(in, line)) throw ParseError(2, "missing q grid");
    {
        std::istringstream ls(line);
        ls >> kind;
        if (kind != "q") throw ParseError(2, "expected q grid");
        std::string tok;
        while (ls >> tok) f.q_grid.push_back(std::strtod(tok.c_str(), nullptr));
        if (f.q_grid.size() != q_count) throw ParseError(2, "q grid length disagrees with header");
    }
    const auto cols = f.walkers * q_count;
    f.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw ParseError(r + 3, "missing feature row");
        std::istringstream ls(line);
        ls >> kind;
        if (kind != "row") throw ParseError(r + 3, "expected row record");
        std::string tok;
        std::size_t c = 0;
        while (ls >> tok) {
            if (c >= cols) throw ParseError(r + 3, "too many values in row");
            f.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c++)) = std::strtod(tok.c_str(), nullptr);
        }
        if (c != cols) throw ParseError(r + 3, "too few values in row");
    }
    return f;
}

}  // namespace pgl
