#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pgl/dfg.hpp"
#include "pgl/rng.hpp"

namespace pgl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Integers -10..10 without 1, where D(q) = tau/(q-1) is singular.
std::vector<double> default_q_grid();

struct WalkParams {
    std::size_t walkers = 16;
    std::size_t walk_len = 32;
    double cutoff = 128.0;  // weighted search radius for box counting
    std::vector<double> q_grid = default_q_grid();
    std::uint64_t seed = 0;

    /// Throws InvalidArgument on walkers/walk_len of 0, cutoff <= 0, or q == 1.
    void validate() const;
};

struct Transition {
    NodeId node;
    double probability;
};

/// P(j) = w_ij / sum_k w_ik over the out-edges of `node`; empty for sinks.
std::vector<Transition> transition_probabilities(const DynamicDataflowGraph& g, NodeId node);

/// Weighted walk of at most `walk_len` steps from `start`; ends early at a sink.
std::vector<NodeId> random_walk(const DynamicDataflowGraph& g, NodeId start, std::size_t walk_len, Rng& rng);

/// Every node lying on some directed path from `from` to `to`, with the
/// induced edges. Throws ReachabilityError if `to` is not reachable.
DynamicDataflowGraph walk_subgraph(const DynamicDataflowGraph& g, NodeId from, NodeId to);

/// Sandbox box counts on the undirected, unit-length view of a subgraph.
/// counts(i, l-1) = N_i(l) = nodes at hop distance < l from center i, for
/// l = 1..diameter. Nodes farther than `cutoff` by weighted shortest path are
/// never covered.
struct BoxCounts {
    std::size_t diameter = 0;
    std::size_t nodes = 0;
    RowMatrix counts;

    double ratio(std::size_t center, std::size_t box_size) const {
        return counts(static_cast<Eigen::Index>(center), static_cast<Eigen::Index>(box_size - 1)) /
               static_cast<double>(nodes);
    }
};

/// Throws DegenerateGraph when the undirected diameter is below 2.
BoxCounts box_counts(const DynamicDataflowGraph& sg, double cutoff = std::numeric_limits<double>::infinity());

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 1.0;
};

/// Ordinary least squares. Needs >= 2 points with distinct x.
LineFit fit_line(std::span<const double> xs, std::span<const double> ys);

struct MassExponent {
    double q = 0.0;
    double tau = 0.0;
    double r_squared = 1.0;
};

/// log Z_q(l) for l = 1..diameter, with Z_q(l) = mean_i (N_i(l)/N)^(q-1): the
/// box-mass moment sum estimated by averaging over sandbox centers.
std::vector<double> log_moment_curve(const BoxCounts& boxes, double q);

/// tau(q) = slope of log Z_q(l) against log(l/diameter).
/// Throws DegenerateGraph with fewer than two box sizes.
std::vector<MassExponent> mass_exponents(const BoxCounts& boxes, std::span<const double> q_grid);

/// D(q) = tau(q) / (q - 1). Throws InvalidArgument if any q == 1.
std::vector<double> generalized_fractal_dimension(std::span<const MassExponent> taus);

/// Multifractal spectrum of a whole (sub)graph; Q zeros when degenerate.
std::vector<double> fractal_spectrum(const DynamicDataflowGraph& sg, std::span<const double> q_grid,
                                     double cutoff);

/// N x (walkers * Q) node features, walk-major then q-major in each row.
struct FeatureMatrix {
    std::size_t walkers = 0;
    std::vector<double> q_grid;
    std::uint64_t seed = 0;
    RowMatrix values;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
    bool operator==(const FeatureMatrix& o) const {
        return walkers == o.walkers && q_grid == o.q_grid && seed == o.seed && values.rows() == o.values.rows() &&
               values.cols() == o.values.cols() && values == o.values;
    }
};

/// For every node and each of `walkers` walks: walk, cut the subgraph between
/// the start and the walk's end, and append its D(q) spectrum. Each node draws
/// from its own stream (seed, node id), so rows are independent.
FeatureMatrix node_features(const DynamicDataflowGraph& g, const WalkParams& params);

/// Row of node_features for a single node.
std::vector<double> node_feature_row(const DynamicDataflowGraph& g, NodeId node, const WalkParams& params);

enum class FeatureKind { degree, weight, multifractal };

std::string_view to_string(FeatureKind k);
std::optional<FeatureKind> parse_feature_kind(std::string_view text);

/// [in-degree, out-degree] per node.
RowMatrix degree_features(const DynamicDataflowGraph& g);
/// [incoming bytes, outgoing bytes] per node.
RowMatrix weight_features(const DynamicDataflowGraph& g);

RowMatrix extract_features(const DynamicDataflowGraph& g, FeatureKind kind, const WalkParams& params);

/// Per-column z-scoring; columns with zero spread map to 0.
struct Standardizer {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd scale;  // 1/stddev, 0 for constant columns

    static Standardizer fit(std::span<const RowMatrix* const> blocks);
    RowMatrix apply(const RowMatrix& x) const;
    std::size_t width() const { return static_cast<std::size_t>(mean.size()); }
};

/// features <N> <walkers> <Q> <seed>
/// q <q_1> ... <q_Q>
/// row <v_1> ... <v_{K*Q}>     (N lines, 17 significant digits)
void write_features(const FeatureMatrix& f, std::ostream& out);
FeatureMatrix read_features(std::istream& in);

}  // namespace pgl
