#include "pgl/fractal.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pgl/errors.hpp"

namespace pgl {
namespace {

DynamicDataflowGraph make_graph(std::size_t n, const std::vector<DfgEdge>& edges) {
    std::vector<DfgNode> nodes;
    for (std::size_t i = 0; i < n; ++i) nodes.push_back({i, Opcode::arith, 1});
    return {"g", nodes, edges};
}

DynamicDataflowGraph path(std::size_t n) {
    std::vector<DfgEdge> edges;
    for (NodeId i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, EdgeType::data, 8});
    return make_graph(n, edges);
}

std::vector<bool> reachable_from(const DynamicDataflowGraph& g, NodeId s) {
    std::vector<bool> seen(g.size(), false);
    std::vector<NodeId> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
        const auto v = stack.back();
        stack.pop_back();
        for (const auto& e : g.out_edges(v))
            if (!seen[e.dst]) seen[e.dst] = true, stack.push_back(e.dst);
    }
    return seen;
}

TEST(Transitions, ProportionalToWeight) {
    const auto equal = make_graph(3, {{0, 1, EdgeType::data, 8}, {0, 2, EdgeType::data, 8}});
    auto p = transition_probabilities(equal, 0);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_DOUBLE_EQ(p[0].probability, 0.5);
    EXPECT_DOUBLE_EQ(p[1].probability, 0.5);

    const auto skew = make_graph(3, {{0, 1, EdgeType::data, 12}, {0, 2, EdgeType::data, 4}});
    p = transition_probabilities(skew, 0);
    EXPECT_DOUBLE_EQ(p[0].probability, 0.75);
    EXPECT_DOUBLE_EQ(p[1].probability, 0.25);
    EXPECT_TRUE(transition_probabilities(skew, 2).empty());
}

TEST(RandomWalk, FollowsChainAndStopsAtSink) {
    const auto g = path(6);
    auto rng = make_rng(1, "walk");
    EXPECT_EQ(random_walk(g, 0, 3, rng), (std::vector<NodeId>{0, 1, 2, 3}));
    EXPECT_EQ(random_walk(g, 2, 50, rng), (std::vector<NodeId>{2, 3, 4, 5}));
    EXPECT_EQ(random_walk(g, 5, 10, rng), (std::vector<NodeId>{5}));
}

TEST(RandomWalk, EmpiricalFrequencyMatchesTransition) {
    const auto g = make_graph(3, {{0, 1, EdgeType::data, 12}, {0, 2, EdgeType::data, 4}});
    auto rng = make_rng(7, "walk");
    int to_one = 0;
    const int trials = 20000;
    for (int k = 0; k < trials; ++k) to_one += random_walk(g, 0, 1, rng).back() == 1;
    EXPECT_NEAR(to_one / double(trials), 0.75, 0.02);
}

TEST(WalkSubgraph, DiamondKeepsAllFourNodes) {
    const auto g = make_graph(5, {{0, 1, EdgeType::data, 8},
                                  {0, 2, EdgeType::data, 8},
                                  {1, 3, EdgeType::data, 8},
                                  {2, 3, EdgeType::data, 8},
                                  {2, 4, EdgeType::data, 8}});
    const auto sg = walk_subgraph(g, 0, 3);
    EXPECT_EQ(sg.size(), 4u);
    EXPECT_EQ(sg.edges().size(), 4u);
}

TEST(WalkSubgraph, SameEndpointsGiveSingleNode) {
    const auto sg = walk_subgraph(path(4), 2, 2);
    EXPECT_EQ(sg.size(), 1u);
    EXPECT_TRUE(sg.edges().empty());
}

TEST(WalkSubgraph, UnreachableTargetThrows) {
    EXPECT_THROW(walk_subgraph(path(4), 3, 1), ReachabilityError);
}

TEST(WalkSubgraph, MatchesReachabilityOracle) {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto g = build_dfg(generate_synthetic_trace(static_cast<Pattern>(seed % 3), 10, seed));
        auto rng = make_rng(seed, "pairs");
        for (int trial = 0; trial < 20; ++trial) {
            const auto from = static_cast<NodeId>(uniform_int(rng, 0, static_cast<std::int64_t>(g.size()) - 1));
            const auto fwd = reachable_from(g, from);
            std::vector<NodeId> targets;
            for (NodeId v = 0; v < g.size(); ++v)
                if (fwd[v]) targets.push_back(v);
            const auto to = targets[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(targets.size()) - 1))];
            std::size_t expected = 0;
            for (NodeId v = 0; v < g.size(); ++v) expected += fwd[v] && reachable_from(g, v)[to];
            EXPECT_EQ(walk_subgraph(g, from, to).size(), expected);
        }
    }
}

TEST(BoxCounts, PathCenterCounts) {
    const auto b = box_counts(path(5));
    EXPECT_EQ(b.diameter, 4u);
    EXPECT_DOUBLE_EQ(b.counts(2, 0), 1.0);
    EXPECT_DOUBLE_EQ(b.counts(2, 1), 3.0);
    EXPECT_DOUBLE_EQ(b.counts(2, 2), 5.0);
    EXPECT_DOUBLE_EQ(b.counts(0, 1), 2.0);
}

TEST(BoxCounts, StarHubCoversEverythingAtTwo) {
    std::vector<DfgEdge> edges;
    for (NodeId i = 1; i < 5; ++i) edges.push_back({0, i, EdgeType::data, 8});
    const auto b = box_counts(make_graph(5, edges));
    EXPECT_EQ(b.diameter, 2u);
    EXPECT_DOUBLE_EQ(b.counts(0, 1), 5.0);
    EXPECT_DOUBLE_EQ(b.counts(1, 1), 2.0);
}

TEST(BoxCounts, CutoffExcludesFarNodes) {
    // Weighted distance from node 0 to node 2 is 16, beyond a cutoff of 10.
    const auto b = box_counts(path(4), 10.0);
    EXPECT_DOUBLE_EQ(b.counts(0, 2), 2.0);
}

TEST(BoxCounts, DiameterBelowTwoIsDegenerate) {
    EXPECT_THROW(box_counts(path(2)), DegenerateGraph);
}

TEST(MassExponents, ExactPowerLawRecoversDimension) {
    // N_i(l) = l^2 on 16 nodes with diameter 4 gives tau(q) = 2(q-1), D(q) = 2.
    BoxCounts b;
    b.diameter = 4;
    b.nodes = 16;
    b.counts = RowMatrix(16, 4);
    for (int i = 0; i < 16; ++i)
        for (int l = 1; l <= 4; ++l) b.counts(i, l - 1) = l * l;
    const std::vector<double> qs{-3, 0, 2, 5};
    const auto taus = mass_exponents(b, qs);
    for (std::size_t k = 0; k < qs.size(); ++k) {
        EXPECT_NEAR(taus[k].tau, 2.0 * (qs[k] - 1.0), 1e-12);
        EXPECT_NEAR(taus[k].r_squared, 1.0, 1e-12);
    }
    for (double d : generalized_fractal_dimension(taus)) EXPECT_NEAR(d, 2.0, 1e-12);
}

TEST(MassExponents, DimensionIsTauOverQMinusOne) {
    const std::vector<MassExponent> taus{{3.0, 4.0, 1.0}, {-1.0, 1.0, 1.0}};
    const auto d = generalized_fractal_dimension(taus);
    EXPECT_DOUBLE_EQ(d[0], 2.0);
    EXPECT_DOUBLE_EQ(d[1], -0.5);
    const std::vector<MassExponent> bad{{1.0, 0.0, 1.0}};
    EXPECT_THROW(generalized_fractal_dimension(bad), InvalidArgument);
}

TEST(FitLine, ExactLine) {
    const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    const auto f = fit_line(x, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    const std::vector<double> same{1, 1};
    EXPECT_THROW(fit_line(same, same), DegenerateGraph);
}

TEST(QGrid, ExcludesOne) {
    const auto q = default_q_grid();
    EXPECT_EQ(q.size(), 20u);
    for (double v : q) EXPECT_NE(v, 1.0);
}

TEST(WalkParams, ValidationRejectsBadValues) {
    WalkParams p;
    p.walkers = 0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = WalkParams{};
    p.cutoff = 0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = WalkParams{};
    p.q_grid = {0.0, 1.0};
    EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(NodeFeatures, ShapeDeterminismAndRowIndependence) {
    const auto g = build_dfg(generate_synthetic_trace(Pattern::mixed, 10, 3));
    WalkParams p;
    p.walkers = 3;
    p.walk_len = 8;
    p.seed = 11;
    const auto f = node_features(g, p);
    EXPECT_EQ(f.rows(), g.size());
    EXPECT_EQ(f.cols(), 3 * p.q_grid.size());
    EXPECT_EQ(node_features(g, p), f);
    for (NodeId v : {NodeId{0}, NodeId{5}}) {
        const auto row = node_feature_row(g, v, p);
        for (std::size_t c = 0; c < row.size(); ++c) EXPECT_EQ(row[c], f.values(v, static_cast<Eigen::Index>(c)));
    }
    EXPECT_TRUE(f.values.allFinite());
}

TEST(NodeFeatures, SinkRowsAreZero) {
    const auto g = path(6);
    WalkParams p;
    p.walkers = 2;
    const auto f = node_features(g, p);
    EXPECT_TRUE(f.values.row(5).isZero());
}

TEST(NodeFeatures, RoundTripIsExact) {
    const auto g = build_dfg(generate_synthetic_trace(Pattern::parallel_loop, 6, 2));
    WalkParams p;
    p.walkers = 2;
    p.seed = 5;
    const auto f = node_features(g, p);
    std::stringstream s;
    write_features(f, s);
    EXPECT_EQ(read_features(s), f);
}

TEST(BaselineFeatures, DegreeAndWeight) {
    const auto g = make_graph(3, {{0, 1, EdgeType::data, 4}, {0, 2, EdgeType::data, 8}, {1, 2, EdgeType::data, 2}});
    const auto d = degree_features(g);
    EXPECT_EQ(d(0, 0), 0);
    EXPECT_EQ(d(0, 1), 2);
    EXPECT_EQ(d(2, 0), 2);
    const auto w = weight_features(g);
    EXPECT_EQ(w(0, 1), 12);
    EXPECT_EQ(w(2, 0), 10);
}

TEST(Standardizer, ZeroMeanUnitVarianceAndConstantColumns) {
    RowMatrix x(4, 2);
    x << 1, 5, 2, 5, 3, 5, 4, 5;
    const RowMatrix* blocks[] = {&x};
    const auto s = Standardizer::fit(blocks);
    const auto y = s.apply(x);
    EXPECT_NEAR(y.col(0).mean(), 0.0, 1e-12);
    EXPECT_NEAR(y.col(0).squaredNorm() / 4.0, 1.0, 1e-12);
    EXPECT_TRUE(y.col(1).isZero());
}

}  // namespace
}  // namespace pgl
