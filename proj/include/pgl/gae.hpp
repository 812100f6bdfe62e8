#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "pgl/dfg.hpp"
#include "pgl/fractal.hpp"
#include "pgl/nn/checkpoint.hpp"
#include "pgl/nn/layers.hpp"

namespace pgl {

struct GaeConfig {
    std::size_t hidden = 64;
    std::size_t embedding = 16;
    double learning_rate = 3e-3;
    bool identity_channel = true;  // append one-hot node ids to the encoder input
};

/// Encoder input used by partition: column-standardized features, followed by
/// I_N when the identity channel is on.
RowMatrix gae_input(const RowMatrix& features, const GaeConfig& config);

/// Two-layer GCN encoder (ReLU, then linear) with an inner-product decoder.
struct GaeModel {
    nn::GcnLayer encoder1;
    nn::GcnLayer encoder2;

    static GaeModel init(std::size_t input_width, const GaeConfig& config, std::uint64_t seed);
    std::vector<nn::Parameter*> parameters() { return {&encoder1.theta, &encoder2.theta}; }
    std::size_t input_width() const { return static_cast<std::size_t>(encoder1.theta.value.rows()); }
};

struct GaeOutput {
    nn::Matrix embedding;       // Z, N x embedding
    nn::Matrix reconstruction;  // sigmoid(Z Z^T)
};

/// `adjacency` is the raw symmetric 0/1 matrix; normalization happens inside.
GaeOutput gae_forward(const RowMatrix& features, const RowMatrix& adjacency, const GaeModel& model);

struct GaeTraining {
    GaeModel model;
    std::vector<double> losses;  // one per epoch, before that epoch's update
};

/// Continues training `model` in place; returns the per-epoch losses. The
/// target is A + I, with positive entries weighted by N^2 / #positives.
std::vector<double> gae_fit(GaeModel& model, const RowMatrix& features, const RowMatrix& adjacency,
                            std::size_t epochs, nn::Adam& optimizer);

/// Fresh model trained for `epochs` on the undirected view of `g`.
/// Throws InvalidArgument when epochs == 0.
GaeTraining gae_train(const DynamicDataflowGraph& g, const RowMatrix& features, std::size_t epochs,
                      std::uint64_t seed, const GaeConfig& config = {});

/// 1/2 (|Z Z^T| + |Z Z^T|^T).
RowMatrix distance_matrix(const RowMatrix& embedding);

/// What spectral clustering sees: the magnitude matrix above, the decoder's
/// sigmoid(Z Z^T), which keeps the sign of each inner product, or the decoder
/// restricted to the graph's own (undirected) edges.
enum class Affinity { magnitude, decoder, graph };
std::string_view to_string(Affinity a);
std::optional<Affinity> parse_affinity(std::string_view text);
RowMatrix affinity_matrix(const RowMatrix& embedding, Affinity kind);

/// Symmetric m-nearest-neighbor graph of a similarity matrix: entry (i, j)
/// survives when j is among the m most similar nodes to i or i among those of
/// j. m == 0 or m >= N - 1 returns the input unchanged.
RowMatrix nearest_neighbor_graph(const RowMatrix& similarity, std::size_t m);

struct Partition {
    std::vector<int> assignment;  // node -> cluster in 0..k-1
    std::size_t k = 0;
    std::vector<double> history;  // stability after each outer iteration (first entry is 0)
    bool converged = false;

    std::vector<std::vector<NodeId>> members() const;
};

struct PartitionConfig {
    std::optional<std::size_t> clusters;  // empty: pick by eigengap
    std::size_t k_max = 8;
    std::size_t max_iterations = 20;
    std::size_t gae_epochs = 100;
    double stability_target = 0.99;
    bool warm_start = true;
    std::size_t kmeans_restarts = 20;
    Affinity affinity = Affinity::graph;
    std::size_t neighbors = 5;  // m of the nearest-neighbor graph (embedding affinities only); 0 keeps it dense
    double regularization = 1.0;  // adds tau * mean degree / N to every affinity entry
    GaeConfig gae;
    std::uint64_t seed = 0;
};

/// Relabels `current` to agree as much as possible with `previous`: cluster
/// pairs are matched greedily by descending overlap.
std::vector<int> match_labels(const std::vector<int>& previous, const std::vector<int>& current);

/// Fraction of nodes whose cluster is unchanged after matching.
double stability(const std::vector<int>& previous, const std::vector<int>& current);

/// Repeats train -> embed -> distance -> spectral clustering until the
/// stability reaches the target or the iteration budget runs out.
Partition partition(const DynamicDataflowGraph& g, const RowMatrix& features, const PartitionConfig& config);

/// partition <k> <iterations> <final stability> <converged 0|1>
/// node <id> cluster <cid>
void write_partition(const Partition& p, std::ostream& out);
Partition read_partition(std::istream& in);

}  // namespace pgl
