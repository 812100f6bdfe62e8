#include "pgl/dfg.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "pgl/errors.hpp"

namespace pgl {

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string_view to_string(EdgeType t) {
    switch (t) {
        case EdgeType::data: return "data";
        case EdgeType::memory: return "memory";
        case EdgeType::control: return "control";
    }
    return "?";
}

std::optional<EdgeType> parse_edge_type(std::string_view text) {
    for (auto t : {EdgeType::data, EdgeType::memory, EdgeType::control})
        if (to_string(t) == text) return t;
    return std::nullopt;
}

DynamicDataflowGraph::DynamicDataflowGraph(std::string name, std::vector<DfgNode> nodes,
                                           std::vector<DfgEdge> edges)
    : name_(std::move(name)), nodes_(std::move(nodes)), edges_(std::move(edges)) {
    const auto n = nodes_.size();
    for (std::size_t i = 1; i < n; ++i)
        if (nodes_[i].seq <= nodes_[i - 1].seq)
            throw SemanticError("graph nodes must be ordered by strictly increasing seq");
    std::sort(edges_.begin(), edges_.end(),
              [](const DfgEdge& a, const DfgEdge& b) { return std::tie(a.src, a.dst) < std::tie(b.src, b.dst); });
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        const auto& e = edges_[k];
        if (e.src >= n || e.dst >= n) throw SemanticError("edge endpoint out of range");
        if (e.src >= e.dst) throw SemanticError("edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) +
                                                " does not point forward in execution order");
        if (!(e.weight > 0.0)) throw SemanticError("edge weight must be positive");
        if (k > 0 && edges_[k - 1].src == e.src && edges_[k - 1].dst == e.dst)
            throw SemanticError("duplicate edge " + std::to_string(e.src) + "->" + std::to_string(e.dst));
    }

    out_offsets_.assign(n + 1, 0);
    in_offsets_.assign(n + 1, 0);
    for (const auto& e : edges_) {
        ++out_offsets_[e.src + 1];
        ++in_offsets_[e.dst + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
        out_offsets_[i + 1] += out_offsets_[i];
        in_offsets_[i + 1] += in_offsets_[i];
    }
    in_index_.resize(edges_.size());
    std::vector<std::size_t> fill(in_offsets_.begin(), in_offsets_.end() - 1);
    for (std::size_t k = 0; k < edges_.size(); ++k) in_index_[fill[edges_[k].dst]++] = k;

    undirected_.assign(n, {});
    for (const auto& e : edges_) {
        undirected_[e.src].push_back(e.dst);
        undirected_[e.dst].push_back(e.src);
    }
    for (auto& adj : undirected_) std::sort(adj.begin(), adj.end());
}

std::span<const DfgEdge> DynamicDataflowGraph::out_edges(NodeId id) const {
    if (id >= nodes_.size()) throw LookupError("unknown node " + std::to_string(id));
    return std::span(edges_).subspan(out_offsets_[id], out_offsets_[id + 1] - out_offsets_[id]);
}

std::span<const std::size_t> DynamicDataflowGraph::in_edge_indices(NodeId id) const {
    if (id >= nodes_.size()) throw LookupError("unknown node " + std::to_string(id));
    return std::span(in_index_).subspan(in_offsets_[id], in_offsets_[id + 1] - in_offsets_[id]);
}

DynamicDataflowGraph DynamicDataflowGraph::induced(std::span<const NodeId> keep) const {
    std::vector<NodeId> remap(nodes_.size(), std::numeric_limits<NodeId>::max());
    std::vector<DfgNode> nodes;
    nodes.reserve(keep.size());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        if (k > 0 && keep[k] <= keep[k - 1]) throw InvalidArgument("induced: node set must be ascending");
        remap[keep[k]] = static_cast<NodeId>(k);
        nodes.push_back(node(keep[k]));
    }
    std::vector<DfgEdge> edges;
    for (auto v : keep)
        for (const auto& e : out_edges(v))
            if (remap[e.dst] != std::numeric_limits<NodeId>::max())
                edges.push_back({remap[e.src], remap[e.dst], e.type, e.weight});
    return DynamicDataflowGraph(name_, std::move(nodes), std::move(edges));
}

DynamicDataflowGraph build_dfg(const InstructionTrace& trace) {
    if (trace.instructions.empty()) throw SemanticError("cannot build a graph from an empty trace");
    validate(trace);

    const auto& ins = trace.instructions;
    std::map<std::pair<NodeId, NodeId>, DfgEdge> edges;
    auto link = [&](NodeId src, NodeId dst, EdgeType type) {
        const double w = ins[src].operand_bytes;
        auto [it, fresh] = edges.try_emplace({src, dst}, DfgEdge{src, dst, type, w});
        if (!fresh) {
            it->second.weight = std::max(it->second.weight, w);
            it->second.type = std::max(it->second.type, type);
        }
    };

    std::unordered_map<RegId, NodeId> last_def;
    struct MemoryState {
        std::optional<NodeId> last_store;
        std::vector<NodeId> loads_since_store;
    };
    std::unordered_map<Address, MemoryState> memory;

    std::vector<DfgNode> nodes;
    nodes.reserve(ins.size());
    for (std::size_t k = 0; k < ins.size(); ++k) {
        const auto id = static_cast<NodeId>(k);
        const auto& cur = ins[k];
        nodes.push_back({cur.seq, cur.opcode, cur.latency});

        const bool control = cur.opcode == Opcode::branch || cur.opcode == Opcode::call;
        for (auto r : cur.sources)
            if (auto it = last_def.find(r); it != last_def.end())
                link(it->second, id, control ? EdgeType::control : EdgeType::data);

        if (cur.mem_addr) {
            auto& mem = memory[*cur.mem_addr];
            if (cur.opcode == Opcode::load) {
                if (mem.last_store) link(*mem.last_store, id, EdgeType::memory);
                mem.loads_since_store.push_back(id);
            } else if (cur.opcode == Opcode::store) {
                if (mem.last_store) link(*mem.last_store, id, EdgeType::memory);
                for (auto l : mem.loads_since_store) link(l, id, EdgeType::memory);
                mem.last_store = id;
                mem.loads_since_store.clear();
            }
        }
        if (cur.dest) last_def[*cur.dest] = id;
    }

    std::vector<DfgEdge> flat;
    flat.reserve(edges.size());
    for (auto& [key, e] : edges) flat.push_back(e);
    return DynamicDataflowGraph(trace.name, std::move(nodes), std::move(flat));
}

std::vector<std::size_t> undirected_hops(const DynamicDataflowGraph& g, NodeId source) {
    std::vector<std::size_t> dist(g.size(), kUnreached);
    if (source >= g.size()) throw LookupError("unknown node " + std::to_string(source));
    std::deque<NodeId> queue{source};
    dist[source] = 0;
    const auto& adj = g.undirected_neighbors();
    while (!queue.empty()) {
        auto v = queue.front();
        queue.pop_front();
        for (auto u : adj[v])
            if (dist[u] == kUnreached) {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
    }
    return dist;
}

std::size_t undirected_diameter(const DynamicDataflowGraph& g) {
    std::size_t diam = 0;
    for (NodeId v = 0; v < g.size(); ++v)
        for (auto d : undirected_hops(g, v))
            if (d != kUnreached) diam = std::max(diam, d);
    return diam;
}

GraphStats graph_stats(const DynamicDataflowGraph& g) {
    if (g.empty()) throw SemanticError("graph_stats: empty graph");
    GraphStats s;
    s.nodes = g.size();
    s.edges = g.edges().size();
    double total = 0.0;
    std::size_t pairs = 0;
    for (NodeId v = 0; v < g.size(); ++v) {
        auto dist = undirected_hops(g, v);
        for (NodeId u = v + 1; u < g.size(); ++u) {
            if (dist[u] == kUnreached) continue;
            total += static_cast<double>(dist[u]);
            ++pairs;
            s.diameter = std::max(s.diameter, dist[u]);
        }
    }
    s.average_path_length = pairs ? total / static_cast<double>(pairs) : 0.0;
    return s;
}

std::vector<NodeId> topological_order(const DynamicDataflowGraph& g) {
    std::vector<std::size_t> indeg(g.size());
    for (NodeId v = 0; v < g.size(); ++v) indeg[v] = g.in_degree(v);
    std::deque<NodeId> ready;
    for (NodeId v = 0; v < g.size(); ++v)
        if (indeg[v] == 0) ready.push_back(v);
    std::vector<NodeId> order;
    order.reserve(g.size());
    while (!ready.empty()) {
        auto v = ready.front();
        ready.pop_front();
        order.push_back(v);
        for (const auto& e : g.out_edges(v))
            if (--indeg[e.dst] == 0) ready.push_back(e.dst);
    }
    if (order.size() != g.size()) throw SemanticError("graph contains a cycle");
    return order;
}

std::uint64_t critical_path_latency(const DynamicDataflowGraph& g) {
    std::vector<std::uint64_t> finish(g.size(), 0);
    std::uint64_t best = 0;
    // ids are a topological order
    for (NodeId v = 0; v < g.size(); ++v) {
        std::uint64_t start = 0;
        for (auto k : g.in_edge_indices(v)) start = std::max(start, finish[g.edges()[k].src]);
        finish[v] = start + g.node(v).latency;
        best = std::max(best, finish[v]);
    }
    return best;
}

std::size_t max_level_width(const DynamicDataflowGraph& g) {
    std::vector<std::size_t> level(g.size(), 0);
    std::size_t depth = 0;
    for (NodeId v = 0; v < g.size(); ++v) {
        for (auto k : g.in_edge_indices(v)) level[v] = std::max(level[v], level[g.edges()[k].src] + 1);
        depth = std::max(depth, level[v]);
    }
    std::vector<std::size_t> width(g.empty() ? 0 : depth + 1, 0);
    for (auto l : level) ++width[l];
    return width.empty() ? 0 : *std::max_element(width.begin(), width.end());
}

std::vector<double> undirected_adjacency(const DynamicDataflowGraph& g) {
    const auto n = g.size();
    std::vector<double> a(n * n, 0.0);
    for (const auto& e : g.edges()) {
        a[e.src * n + e.dst] = 1.0;
        a[e.dst * n + e.src] = 1.0;
    }
    return a;
}

void write_graph(const DynamicDataflowGraph& g, std::ostream& out) {
    out << "dfg " << (g.name().empty() ? "-" : g.name()) << ' ' << g.size() << ' ' << g.edges().size() << '\n';
    for (NodeId v = 0; v < g.size(); ++v) {
        const auto& n = g.node(v);
        out << "node " << v << ' ' << to_string(n.opcode) << ' ' << n.latency << ' ' << n.seq << '\n';
    }
    for (const auto& e : g.edges())
        out << "edge " << e.src << ' ' << e.dst << ' ' << to_string(e.type) << ' ' << format_double(e.weight)
            << '\n';
}

DynamicDataflowGraph read_graph(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::string name;
    std::size_t expect_nodes = 0, expect_edges = 0;
    bool header = false;
    std::vector<DfgNode> nodes;
    std::vector<DfgEdge> edges;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "dfg") {
            if (!(ls >> name >> expect_nodes >> expect_edges)) throw ParseError(line_no, "bad dfg header");
            if (name == "-") name.clear();
            header = true;
        } else if (kind == "node") {
            std::size_t id, seq;
            std::string op;
            std::uint32_t latency;
            if (!(ls >> id >> op >> latency >> seq)) throw ParseError(line_no, "bad node record");
            auto opcode = parse_opcode(op);
            if (!opcode) throw ParseError(line_no, "unknown opcode '" + op + "'");
            if (id != nodes.size()) throw ParseError(line_no, "node ids must be dense and ascending");
            nodes.push_back({seq, *opcode, latency});
        } else if (kind == "edge") {
            NodeId src, dst;
            std::string type, weight;
            if (!(ls >> src >> dst >> type >> weight)) throw ParseError(line_no, "bad edge record");
            auto t = parse_edge_type(type);
            if (!t) throw ParseError(line_no, "unknown edge type '" + type + "'");
            edges.push_back({src, dst, *t, std::strtod(weight.c_str(), nullptr)});
        } else {
            throw ParseError(line_no, "unknown record '" + kind + "'");
        }
    }
    if (!header) throw ParseError(0, "missing dfg header");
    if (nodes.size() != expect_nodes || edges.size() != expect_edges)
        throw ParseError(0, "record counts disagree with header");
    return DynamicDataflowGraph(std::move(name), std::move(nodes), std::move(edges));
}

}  // namespace pgl
