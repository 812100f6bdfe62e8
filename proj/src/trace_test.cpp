#include "pgl/trace.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "pgl/dfg.hpp"
#include "pgl/errors.hpp"

namespace pgl {
namespace {

TEST(ParseTrace, ArithLineMapsFields) {
    const auto t = parse_trace("trace t inputs r1,r2\narith r3 r1,r2 8 1\n");
    ASSERT_EQ(t.instructions.size(), 1u);
    const auto& i = t.instructions[0];
    EXPECT_EQ(i.opcode, Opcode::arith);
    EXPECT_EQ(i.dest, RegId{3});
    EXPECT_EQ(i.sources, (std::vector<RegId>{1, 2}));
    EXPECT_EQ(i.operand_bytes, 8u);
    EXPECT_EQ(i.latency, 1u);
}

TEST(ParseTrace, LoadCarriesAddress) {
    const auto t = parse_trace("load r2 @16 8 4\n");
    const auto& i = t.instructions.at(0);
    EXPECT_EQ(i.opcode, Opcode::load);
    EXPECT_EQ(i.dest, RegId{2});
    EXPECT_EQ(i.mem_addr, Address{16});
    EXPECT_EQ(i.latency, 4u);
}

TEST(ParseTrace, StoreWithDestinationIsRejected) {
    EXPECT_THROW(parse_trace("store r1 r1 @16\n"), ParseError);
}

TEST(ParseTrace, ErrorsCarryLineNumbers) {
    try {
        parse_trace("trace t inputs r0\n# comment\narith r1 r0\nbogus r2 r1\n");
        FAIL() << "expected a parse error";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(ParseTrace, MissingAddressIsSemantic) {
    EXPECT_THROW(parse_trace("load r2\n"), Error);
}

TEST(ParseTrace, UseBeforeDefinitionIsRejected) {
    EXPECT_THROW(parse_trace("trace t inputs r1\narith r2 r1\narith r3 r9\n"), SemanticError);
}

TEST(ParseTrace, EmptyTraceIsRejected) { EXPECT_THROW(parse_trace("# nothing\n"), ParseError); }

TEST(ParseTrace, DefaultLatencyApplied) {
    const auto t = parse_trace("load r2 @0\n");
    EXPECT_EQ(t.instructions[0].latency, default_latency(Opcode::load));
    EXPECT_EQ(t.instructions[0].operand_bytes, kDefaultOperandBytes);
}

TEST(Opcodes, RoundTripNames) {
    for (std::size_t k = 0; k < kOpcodeCount; ++k) {
        const auto op = static_cast<Opcode>(k);
        EXPECT_EQ(parse_opcode(to_string(op)), op);
    }
    EXPECT_FALSE(parse_opcode("fma"));
}

TEST(Synthetic, SequentialChainLinksEachToPredecessor) {
    const auto t = generate_synthetic_trace(Pattern::sequential_chain, 10, 7);
    ASSERT_EQ(t.instructions.size(), 10u);
    for (std::size_t k = 1; k < t.instructions.size(); ++k) {
        const auto& prev = t.instructions[k - 1];
        ASSERT_TRUE(prev.dest);
        const auto& srcs = t.instructions[k].sources;
        EXPECT_NE(std::find(srcs.begin(), srcs.end(), *prev.dest), srcs.end()) << "instruction " << k;
    }
}

TEST(Synthetic, ParallelLoopHasFanOutFromCommonAncestor) {
    const auto g = build_dfg(generate_synthetic_trace(Pattern::parallel_loop, 8, 7));
    // Count in-degree-1 nodes whose single parent is shared by at least 8 of them.
    std::map<NodeId, std::size_t> children;
    for (NodeId v = 0; v < g.size(); ++v)
        if (g.in_degree(v) == 1) ++children[g.edges()[g.in_edge_indices(v)[0]].src];
    std::size_t best = 0;
    for (auto& [p, c] : children) best = std::max(best, c);
    EXPECT_GE(best, 8u);
}

TEST(Synthetic, DeterministicAndRoundTrips) {
    for (auto p : {Pattern::parallel_loop, Pattern::sequential_chain, Pattern::mixed}) {
        for (std::uint64_t seed : {1u, 2u, 99u}) {
            const auto a = generate_synthetic_trace(p, 12, seed);
            const auto b = generate_synthetic_trace(p, 12, seed);
            EXPECT_EQ(render_trace(a), render_trace(b));
            EXPECT_EQ(parse_trace(render_trace(a)), a);
            EXPECT_NO_THROW(validate(a));
        }
    }
}

TEST(Synthetic, SizeBelowFourRejected) {
    EXPECT_THROW(generate_synthetic_trace(Pattern::mixed, 3, 1), InvalidArgument);
}

TEST(JoinTraces, ExactlyOneEdgeCrossesTheSeam) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto a = generate_synthetic_trace(static_cast<Pattern>(seed % 3), 8, seed);
        const auto b = generate_synthetic_trace(static_cast<Pattern>((seed + 1) % 3), 8, seed + 10);
        const auto joined = join_traces(a, b);
        EXPECT_NO_THROW(validate(joined));
        const auto g = build_dfg(joined);
        const auto na = build_dfg(a).size();
        std::size_t crossing = 0;
        for (const auto& e : g.edges())
            if ((e.src < na) != (e.dst < na)) {
                ++crossing;
                EXPECT_EQ(e.type, EdgeType::control);
            }
        EXPECT_EQ(crossing, 1u) << "seed " << seed;
    }
}

}  // namespace
}  // namespace pgl
