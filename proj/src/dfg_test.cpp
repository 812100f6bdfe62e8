#include "pgl/dfg.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "pgl/errors.hpp"
#include "pgl/rng.hpp"

namespace pgl {
namespace {

// Random valid trace: registers r0..r3 are inputs, addresses come from a small
// pool so memory dependences actually occur.
InstructionTrace random_trace(std::uint64_t seed, std::size_t length) {
    auto rng = make_rng(seed, "dfg.test");
    InstructionTrace t;
    t.name = "random";
    t.inputs = {0, 1, 2, 3};
    RegId next = 4;
    std::vector<RegId> live = t.inputs;
    auto pick = [&] { return live[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(live.size()) - 1))]; };
    for (std::size_t k = 0; k < length; ++k) {
        Instruction ins;
        ins.seq = k;
        ins.operand_bytes = static_cast<std::uint32_t>(uniform_int(rng, 1, 16));
        switch (uniform_int(rng, 0, 4)) {
            case 0:
                ins.opcode = Opcode::load;
                ins.mem_addr = uniform_int(rng, 0, 3) * 8;
                ins.sources = {pick()};
                break;
            case 1:
                ins.opcode = Opcode::store;
                ins.mem_addr = uniform_int(rng, 0, 3) * 8;
                ins.sources = {pick()};
                break;
            case 2:
                ins.opcode = Opcode::branch;
                ins.sources = {pick()};
                break;
            default:
                ins.opcode = Opcode::arith;
                ins.sources = {pick(), pick()};
                break;
        }
        if (ins.opcode != Opcode::store && ins.opcode != Opcode::branch) {
            ins.dest = next++;
            live.push_back(*ins.dest);
        }
        ins.latency = default_latency(ins.opcode);
        t.instructions.push_back(ins);
    }
    return t;
}

// Quadratic restatement of the dependence rules, used as the oracle.
std::map<std::pair<NodeId, NodeId>, std::pair<EdgeType, double>> oracle_edges(const InstructionTrace& t) {
    std::map<std::pair<NodeId, NodeId>, std::pair<EdgeType, double>> out;
    auto add = [&](std::size_t s, std::size_t d, EdgeType type) {
        const double w = t.instructions[s].operand_bytes;
        auto key = std::make_pair(static_cast<NodeId>(s), static_cast<NodeId>(d));
        auto it = out.find(key);
        if (it == out.end()) out[key] = {type, w};
        else it->second = {std::max(it->second.first, type), std::max(it->second.second, w)};
    };
    const auto& ins = t.instructions;
    for (std::size_t d = 0; d < ins.size(); ++d) {
        const bool ctrl = ins[d].opcode == Opcode::branch || ins[d].opcode == Opcode::call;
        for (auto r : ins[d].sources)
            for (std::size_t s = d; s-- > 0;)
                if (ins[s].dest == r) {
                    add(s, d, ctrl ? EdgeType::control : EdgeType::data);
                    break;
                }
        if (!ins[d].mem_addr) continue;
        for (std::size_t s = 0; s < d; ++s) {
            if (ins[s].mem_addr != ins[d].mem_addr) continue;
            // Is there a store strictly between s and d at this address?
            bool killed = false;
            for (std::size_t m = s + 1; m < d; ++m)
                killed |= ins[m].opcode == Opcode::store && ins[m].mem_addr == ins[d].mem_addr;
            if (killed) continue;
            const auto a = ins[s].opcode, b = ins[d].opcode;
            if ((a == Opcode::store && b == Opcode::load) || (a == Opcode::store && b == Opcode::store) ||
                (a == Opcode::load && b == Opcode::store))
                add(s, d, EdgeType::memory);
        }
    }
    return out;
}

TEST(BuildDfg, DataEdgeFromDefinition) {
    const auto g = build_dfg(parse_trace("trace t inputs r1,r2,r5\narith r3 r1,r2\narith r4 r3,r5\n"));
    ASSERT_EQ(g.size(), 2u);
    ASSERT_EQ(g.edges().size(), 1u);
    EXPECT_EQ(g.edges()[0].src, 0u);
    EXPECT_EQ(g.edges()[0].dst, 1u);
    EXPECT_EQ(g.edges()[0].type, EdgeType::data);
}

TEST(BuildDfg, StoreThenLoadIsMemoryEdge) {
    const auto g = build_dfg(parse_trace("trace t inputs r1\nstore r1 @16\nload r2 @16\n"));
    ASSERT_EQ(g.edges().size(), 1u);
    EXPECT_EQ(g.edges()[0].type, EdgeType::memory);
}

TEST(BuildDfg, LoadsDoNotDependOnEachOther) {
    const auto g = build_dfg(parse_trace("trace t inputs r1\nload r2 @8\nload r3 @8\n"));
    EXPECT_TRUE(g.edges().empty());
}

TEST(BuildDfg, BranchSourcesBecomeControlEdges) {
    const auto g = build_dfg(parse_trace("trace t inputs r1\narith r2 r1\nbranch r2\n"));
    ASSERT_EQ(g.edges().size(), 1u);
    EXPECT_EQ(g.edges()[0].type, EdgeType::control);
}

TEST(BuildDfg, WeightIsProducerOperandBytes) {
    const auto g = build_dfg(parse_trace("trace t inputs r1\narith r2 r1 4\narith r3 r2 16\n"));
    ASSERT_EQ(g.edges().size(), 1u);
    EXPECT_DOUBLE_EQ(g.edges()[0].weight, 4.0);
}

TEST(BuildDfg, MatchesBruteForceOracleOnRandomTraces) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const auto t = random_trace(seed, 30);
        const auto g = build_dfg(t);
        const auto want = oracle_edges(t);
        ASSERT_EQ(g.edges().size(), want.size()) << "seed " << seed;
        for (const auto& e : g.edges()) {
            auto it = want.find({e.src, e.dst});
            ASSERT_NE(it, want.end()) << "seed " << seed << " extra edge " << e.src << "->" << e.dst;
            EXPECT_EQ(e.type, it->second.first);
            EXPECT_DOUBLE_EQ(e.weight, it->second.second);
        }
    }
}

TEST(BuildDfg, SyntheticGraphsAreForwardAcyclic) {
    for (auto p : {Pattern::parallel_loop, Pattern::sequential_chain, Pattern::mixed}) {
        const auto g = build_dfg(generate_synthetic_trace(p, 8, 3));
        EXPECT_EQ(topological_order(g).size(), g.size());
        for (const auto& e : g.edges()) EXPECT_LT(g.node(e.src).seq, g.node(e.dst).seq);
    }
}

TEST(Graph, RejectsBackwardAndDuplicateEdges) {
    std::vector<DfgNode> nodes{{0, Opcode::arith, 1}, {1, Opcode::arith, 1}};
    EXPECT_THROW(DynamicDataflowGraph("g", nodes, {{1, 0, EdgeType::data, 8}}), SemanticError);
    EXPECT_THROW(DynamicDataflowGraph("g", nodes, {{0, 1, EdgeType::data, 8}, {0, 1, EdgeType::memory, 8}}),
                 SemanticError);
    EXPECT_THROW(DynamicDataflowGraph("g", nodes, {{0, 1, EdgeType::data, 0}}), SemanticError);
}

DynamicDataflowGraph chain(std::size_t n) {
    std::vector<DfgNode> nodes;
    std::vector<DfgEdge> edges;
    for (std::size_t i = 0; i < n; ++i) nodes.push_back({i, Opcode::arith, 1});
    for (NodeId i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, EdgeType::data, 8});
    return {"chain", nodes, edges};
}

TEST(GraphStats, ThreeNodeChain) {
    const auto s = graph_stats(chain(3));
    EXPECT_EQ(s.nodes, 3u);
    EXPECT_EQ(s.edges, 2u);
    EXPECT_EQ(s.diameter, 2u);
    EXPECT_DOUBLE_EQ(s.average_path_length, 4.0 / 3.0);
}

TEST(GraphStats, SingleNodeHasZeroDiameter) { EXPECT_EQ(graph_stats(chain(1)).diameter, 0u); }

TEST(GraphStats, StarHasDiameterTwo) {
    std::vector<DfgNode> nodes;
    std::vector<DfgEdge> edges;
    for (std::size_t i = 0; i < 5; ++i) nodes.push_back({i, Opcode::arith, 1});
    for (NodeId i = 1; i < 5; ++i) edges.push_back({0, i, EdgeType::data, 8});
    EXPECT_EQ(graph_stats(DynamicDataflowGraph("star", nodes, edges)).diameter, 2u);
}

TEST(GraphStats, EmptyGraphRejected) { EXPECT_THROW(graph_stats(DynamicDataflowGraph()), SemanticError); }

TEST(Graph, CriticalPathAndLevelWidth) {
    const auto g = build_dfg(parse_trace("trace t inputs r1\narith r2 r1 8 2\narith r3 r1 8 5\narith r4 r2,r3 8 1\n"));
    EXPECT_EQ(critical_path_latency(g), 6u);
    EXPECT_EQ(max_level_width(g), 2u);
}

TEST(Graph, InducedSubgraphRenumbers) {
    const auto g = chain(5);
    const std::vector<NodeId> keep{1, 2, 4};
    const auto sub = g.induced(keep);
    EXPECT_EQ(sub.size(), 3u);
    ASSERT_EQ(sub.edges().size(), 1u);
    EXPECT_EQ(sub.edges()[0].src, 0u);
    EXPECT_EQ(sub.edges()[0].dst, 1u);
}

TEST(GraphIo, RoundTripIsExact) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto g = build_dfg(random_trace(seed, 25));
        std::stringstream s;
        write_graph(g, s);
        EXPECT_EQ(read_graph(s), g);
    }
}

TEST(GraphIo, CountsMustMatchHeader) {
    std::istringstream in("dfg g 2 0\nnode 0 arith 1 0\n");
    EXPECT_THROW(read_graph(in), ParseError);
}

}  // namespace
}  // namespace pgl
