#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgl/trace.hpp"

namespace pgl {

using NodeId = std::uint32_t;

enum class EdgeType : std::uint8_t { control = 0, memory = 1, data = 2 };  // ordered by strength

std::string_view to_string(EdgeType t);
std::optional<EdgeType> parse_edge_type(std::string_view text);

struct DfgNode {
    std::size_t seq = 0;  // position in the originating trace
    Opcode opcode = Opcode::other;
    std::uint32_t latency = 0;

    bool operator==(const DfgNode&) const = default;
};

struct DfgEdge {
    NodeId src = 0;
    NodeId dst = 0;
    EdgeType type = EdgeType::data;
    double weight = 0.0;  // bytes communicated

    bool operator==(const DfgEdge&) const = default;
};

/// Weighted DAG of executed instructions. Node ids are dense 0..N-1 and
/// ordered by trace position, so every edge points from a lower id to a
/// higher one. Immutable once built.
class DynamicDataflowGraph {
public:
    DynamicDataflowGraph() = default;

    /// Canonicalizes edge order (by src, then dst) and checks invariants:
    /// seq strictly increasing with id, edges forward, positive weights, no
    /// duplicate pairs. Throws SemanticError.
    DynamicDataflowGraph(std::string name, std::vector<DfgNode> nodes, std::vector<DfgEdge> edges);

    const std::string& name() const { return name_; }
    std::size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    const std::vector<DfgNode>& nodes() const { return nodes_; }
    const std::vector<DfgEdge>& edges() const { return edges_; }
    const DfgNode& node(NodeId id) const { return nodes_.at(id); }

    /// Outgoing edges of `id`, sorted by destination.
    std::span<const DfgEdge> out_edges(NodeId id) const;
    /// Indices into edges() of the edges entering `id`.
    std::span<const std::size_t> in_edge_indices(NodeId id) const;

    std::size_t out_degree(NodeId id) const { return out_edges(id).size(); }
    std::size_t in_degree(NodeId id) const { return in_edge_indices(id).size(); }

    /// Undirected neighbor lists (each neighbor once, ascending).
    const std::vector<std::vector<NodeId>>& undirected_neighbors() const { return undirected_; }

    /// Induced subgraph on `keep` (ascending, distinct), ids renumbered in order.
    DynamicDataflowGraph induced(std::span<const NodeId> keep) const;

    bool operator==(const DynamicDataflowGraph& o) const {
        return name_ == o.name_ && nodes_ == o.nodes_ && edges_ == o.edges_;
    }

private:
    std::string name_;
    std::vector<DfgNode> nodes_;
    std::vector<DfgEdge> edges_;
    std::vector<std::size_t> out_offsets_;
    std::vector<std::size_t> in_offsets_;
    std::vector<std::size_t> in_index_;
    std::vector<std::vector<NodeId>> undirected_;
};

/// Dependence rules, scanning forward over the trace:
///  - data: each source of a non-control instruction links from its most
///    recent definition;
///  - control: each source of a call or branch links from its most recent
///    definition;
///  - memory: store->load, store->store and load->store at identical
///    addresses (load->load is not a dependence).
/// Edge weight is the producer's operand bytes. Pairs hit by several rules
/// collapse to one edge with the largest weight and strongest type.
DynamicDataflowGraph build_dfg(const InstructionTrace& trace);

struct GraphStats {
    std::size_t nodes = 0;
    std::size_t edges = 0;
    double average_path_length = 0.0;  // mean over connected unordered pairs, undirected hops
    std::size_t diameter = 0;          // undirected hops over connected pairs
};

GraphStats graph_stats(const DynamicDataflowGraph& g);

/// Unweighted BFS hop distances on the undirected view; unreachable = npos.
std::vector<std::size_t> undirected_hops(const DynamicDataflowGraph& g, NodeId source);

/// Largest finite undirected hop distance.
std::size_t undirected_diameter(const DynamicDataflowGraph& g);

/// Kahn order; throws SemanticError on a cycle (impossible for a valid graph,
/// kept as an independent check).
std::vector<NodeId> topological_order(const DynamicDataflowGraph& g);

/// Sum of node latencies along the heaviest dependence chain.
std::uint64_t critical_path_latency(const DynamicDataflowGraph& g);

/// Width of the widest ASAP level (longest-path-from-source leveling).
std::size_t max_level_width(const DynamicDataflowGraph& g);

/// Symmetric 0/1 adjacency of the undirected union of all edge types, row-major N*N.
std::vector<double> undirected_adjacency(const DynamicDataflowGraph& g);

/// Text records:
///   dfg <name> <nodes> <edges>
///   node <id> <opcode> <latency> <seq>
///   edge <src> <dst> <type> <weight>
/// Weights use 17 significant digits so reading back is bit-exact.
void write_graph(const DynamicDataflowGraph& g, std::ostream& out);
DynamicDataflowGraph read_graph(std::istream& in);

}  // namespace pgl
