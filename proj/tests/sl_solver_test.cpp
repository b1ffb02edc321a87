#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "patchy/sl_solver.hpp"

namespace patchy {
namespace {

// Independent bilinear evaluation on a uniform 2D grid, used as the oracle
// for single node updates.
double bilinear_oracle(const NodeField<2>& f, const Point<2>& p) {
  const Grid<2>& g = f.grid;
  const double tx = (p[0] - g.lo()[0]) / g.spacing(0);
  const double ty = (p[1] - g.lo()[1]) / g.spacing(1);
  int i = static_cast<int>(std::floor(tx + 1e-9));
  int j = static_cast<int>(std::floor(ty + 1e-9));
  double u = std::max(0.0, tx - i);
  double v = std::max(0.0, ty - j);
  if (u < 1e-9) u = 0.0;
  if (v < 1e-9) v = 0.0;
  const double c00 = f[g.flat({i, j})];
  const double c10 = u > 0 ? f[g.flat({i + 1, j})] : 0.0;
  const double c01 = v > 0 ? f[g.flat({i, j + 1})] : 0.0;
  const double c11 = u > 0 && v > 0 ? f[g.flat({i + 1, j + 1})] : 0.0;
  return (1 - u) * (1 - v) * c00 + u * (1 - v) * c10 + (1 - u) * v * c01 + u * v * c11;
}

TEST(RelaxNodeTest, NeighborInOptimalDirection) {
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(101);  // k = 0.04
  const SolveContext<2> ctx(p, g);
  NodeField<2> f(g, 0.5);
  const std::size_t node = g.flat({80, 50});  // (1.2, 0)
  f[g.flat({79, 50})] = 0.30;                 // toward the target
  for (std::size_t n = 0; n < f.size(); ++n)
    if (!g.is_interior(n)) f[n] = kInfinity;

  double oracle = f[node];
  int oracle_m = -1;
  const double k = g.spacing(0);
  for (std::size_t m = 0; m < p.controls.size(); ++m) {
    const auto& a = p.controls[m];
    const Point<2> x = g.coord_of(node);
    const double v = bilinear_oracle(f, {x[0] + k * a[0], x[1] + k * a[1]}) + k;
    if (v < oracle) {
      oracle = v;
      oracle_m = static_cast<int>(m);
    }
  }
  EXPECT_NEAR(oracle, 0.34, 1e-12);
  EXPECT_EQ(oracle_m, 16);
  const RelaxResult r = relax_node(f, ctx, node);
  EXPECT_NEAR(r.value, 0.34, 1e-12);
  EXPECT_EQ(r.control, 16);
}

TEST(RelaxNodeTest, TargetAndObstacleNodes) {
  const auto p = preset<2>("eikonal2d-obstacles");
  const auto g = p.grid(101);
  const SolveContext<2> ctx(p, g);
  NodeField<2> f(g, 3.0);
  EXPECT_EQ(relax_node(f, ctx, g.flat({50, 50})).value, 0.0);
  const std::size_t obstacle = g.flat({25, 75});  // (-1, 1)
  ASSERT_TRUE(ctx.is_obstacle(obstacle));
  EXPECT_EQ(relax_node(f, ctx, obstacle).value, kInfinity);
}

TEST(RelaxNodeTest, ZeroSpeedKeepsValue) {
  const auto p = preset<2>("fan2d");
  const auto g = p.grid(41);  // k = 0.1; node (19, 20) is (-0.1, 0) on x1 + x2 + 0.1 = 0
  const SolveContext<2> ctx(p, g);
  NodeField<2> f = ctx.initial_field();
  const std::size_t node = g.flat({19, 20});
  const RelaxResult r = relax_node(f, ctx, node);
  EXPECT_EQ(r.value, kInfinity);
  EXPECT_EQ(r.control, FeedbackField::kNone);
}

TEST(RelaxNodeTest, StepRule) {
  std::mt19937 rng(3);
  for (const char* name : {"eikonal2d", "fan2d", "zermelo2d", "lqr2d", "lunar2d"}) {
    const auto p = preset<2>(name);
    const auto g = p.grid(61);
    const SolveContext<2> ctx(p, g);
    NodeField<2> zero(g, 0.0);
    const auto nodes = g.interior_nodes();
    std::uniform_int_distribution<std::size_t> pick(0, nodes.size() - 1);
    for (int s = 0; s < 200; ++s) {
      const std::size_t n = nodes[pick(rng)];
      const Point<2> x = g.coord_of(n);
      for (std::uint16_t m = 0; m < p.controls.size(); ++m) {
        const std::uint16_t one[1] = {m};
        WorkCounters w;
        const auto c = ctx.best_candidate(x, [&](std::size_t q) { return zero[q]; }, one, w);
        if (c.control_index < 0) continue;
        const double len = std::hypot(c.foot[0] - x[0], c.foot[1] - x[1]);
        EXPECT_NEAR(len, g.spacing(0), 1e-12 * g.spacing(0)) << name;
      }
    }
  }
}

TEST(RelaxNodeTest, MonotoneOperator) {
  std::mt19937 rng(11);
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(10);
  const SolveContext<2> ctx(p, g);
  std::uniform_real_distribution<double> val(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    NodeField<2> U = ctx.initial_field();
    NodeField<2> V = ctx.initial_field();
    for (std::size_t n : g.interior_nodes()) {
      if (ctx.is_target(n)) continue;
      U[n] = val(rng);
      V[n] = U[n] + val(rng);
    }
    for (std::size_t n : g.interior_nodes()) {
      EXPECT_LE(relax_node(U, ctx, n).value, relax_node(V, ctx, n).value + 1e-15);
    }
  }
}

TEST(SolveTest, EikonalAnalyticAccuracy) {
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(101);
  const SolveContext<2> ctx(p, g);
  NodeField<2> f = ctx.initial_field();
  const auto nodes = g.interior_nodes();
  const SweepStats st = solve(f, ctx, nodes, SolverConfig{});
  EXPECT_TRUE(st.converged);
  EXPECT_EQ(st.work.relaxations, static_cast<std::uint64_t>(st.sweeps) * nodes.size());
  double err = 0.0;
  for (std::size_t n : nodes) {
    ASSERT_FALSE(is_infinite(f[n]));
    const auto x = g.coord_of(n);
    err = std::max(err, std::abs(f[n] - std::max(0.0, std::hypot(x[0], x[1]) - 0.5)));
  }
  EXPECT_LE(err, 2 * g.spacing(0));
}

TEST(SolveTest, EmptyAndAllTargetNodeSets) {
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(51);
  const SolveContext<2> ctx(p, g);
  NodeField<2> f = ctx.initial_field();
  const NodeField<2> before = f;
  const SweepStats empty = solve(f, ctx, std::span<const std::size_t>{}, SolverConfig{});
  EXPECT_EQ(empty.sweeps, 0);
  EXPECT_EQ(f.values, before.values);

  NodeField<2> g2(g, 5.0);
  std::vector<std::size_t> targets;
  for (std::size_t n : g.interior_nodes())
    if (ctx.is_target(n)) targets.push_back(n);
  SolverConfig one;
  one.max_sweeps = 1;
  const SweepStats st = solve(g2, ctx, targets, one);
  EXPECT_EQ(st.sweeps, 1);
  for (std::size_t n : targets) EXPECT_EQ(g2[n], 0.0);
}

TEST(SolveTest, NonIncreasingIterates) {
  const auto p = preset<2>("zermelo2d");
  const auto g = p.grid(41);
  const SolveContext<2> ctx(p, g);
  NodeField<2> f = ctx.initial_field();
  const auto nodes = g.interior_nodes();
  SolverConfig one;
  one.max_sweeps = 1;
  for (int s = 0; s < 60; ++s) {
    const NodeField<2> prev = f;
    solve(f, ctx, nodes, one);
    for (std::size_t n : nodes) ASSERT_LE(f[n], prev[n]);
  }
}

TEST(SolveTest, SentinelLeaksArePruned) {
  const auto p = preset<2>("lqr2d");
  const auto g = p.grid(61);
  const SolveContext<2> ctx(p, g);
  NodeField<2> f = ctx.initial_field();
  const auto nodes = g.interior_nodes();
  const SweepStats st = solve(f, ctx, nodes, SolverConfig{});
  ASSERT_TRUE(st.converged);
  EXPECT_GT(st.pruned, 0u);
  double top = 0.0;
  for (std::size_t n : nodes)
    if (!is_infinite(f[n])) top = std::max(top, f[n]);
  // the largest finite exact value in the box is below 3; leaked values are far above
  EXPECT_LT(top, 3.0);
  EXPECT_FALSE(is_infinite(f[g.flat({45, 30})]));  // (0.5, 0)
  EXPECT_NEAR(f[g.flat({45, 30})], p.exact({0.5, 0.0}), 0.1);
}

TEST(SolveTest, SweepOrderDoesNotChangeFixedPoint) {
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(51);
  const SolveContext<2> ctx(p, g);
  const auto nodes = g.interior_nodes();
  SolverConfig cfg;
  NodeField<2> lex = ctx.initial_field();
  const SweepStats lex_stats = solve(lex, ctx, nodes, cfg);

  std::vector<double> key(g.extended_count(), kInfinity);
  for (std::size_t n : nodes) key[n] = p.exact(g.coord_of(n));
  cfg.order = SweepOrder::by_value;
  NodeField<2> byv = ctx.initial_field();
  SolveOptions opt;
  opt.order_key = &key;
  const SweepStats st = solve(byv, ctx, nodes, cfg, {}, opt);
  EXPECT_LE(st.sweeps, lex_stats.sweeps);
  for (std::size_t n : nodes) EXPECT_NEAR(lex[n], byv[n], 10 * cfg.tol);
}

TEST(FeedbackTest, ExactEikonalFieldPointsToTarget) {
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(101);
  const SolveContext<2> ctx(p, g);
  NodeField<2> exact(g, kInfinity);
  for (std::size_t n : g.interior_nodes()) exact[n] = p.exact(g.coord_of(n));
  const std::size_t far = g.flat({5, 90});
  exact[far] = kInfinity;
  const FeedbackField fb = extract_feedback(exact, ctx);
  const std::size_t node = g.flat({75, 50});  // (1, 0)
  ASSERT_EQ(fb[node], 16);
  EXPECT_NEAR(p.controls[16][0], -1.0, 1e-15);
  EXPECT_EQ(fb[far], FeedbackField::kNone);
  EXPECT_EQ(fb[g.flat({50, 50})], FeedbackField::kNone);
}

TEST(ReduceControlsTest, CircleCone) {
  const auto set = discretize_circle(32);
  const auto ids = reduce_controls(set, {1.0, 0.0, 0.0}, 4.0);
  const std::vector<std::size_t> expect = {0, 1, 2, 3, 4, 28, 29, 30, 31};
  EXPECT_EQ(ids, expect);
  // r = 1.5 keeps controls within 120 degrees: 10 on each side
  EXPECT_EQ(reduce_controls(set, set[0], 1.5).size(), 21u);
  EXPECT_EQ(reduce_controls(set, set[0], 1.0 + 1e-9).size(), 32u);
  EXPECT_THROW(reduce_controls(set, set[0], 1.0), ConfigError);
}

TEST(ReduceControlsTest, LatticeNotReduced) {
  const auto br = preset<3>("brockett3d");
  EXPECT_EQ(reduce_controls(br.controls, br.controls[0], 4.0).size(), 9u);
}

TEST(ReduceControlsTest, EikonalReducedArgminMatchesFull) {
  const auto p = preset<2>("eikonal2d");
  const auto g = p.grid(101);
  const SolveContext<2> ctx(p, g);
  NodeField<2> f = ctx.initial_field();
  const auto nodes = g.interior_nodes();
  solve(f, ctx, nodes, SolverConfig{});
  const FeedbackField fb = extract_feedback(f, ctx);
  const ControlReduction red = make_control_reduction(p.controls, 4.0, fb);
  std::size_t same = 0;
  std::size_t total = 0;
  for (std::size_t n : nodes) {
    if (fb[n] < 0) continue;
    ++total;
    WorkCounters w;
    const auto reduced = ctx.best_candidate(g.coord_of(n), [&](std::size_t c) { return f[c]; }, red.for_node(n), w);
    if (reduced.control_index == fb[n]) ++same;
  }
  ASSERT_GT(total, 0u);
  EXPECT_GE(static_cast<double>(same), 0.99 * total);
}

}  // namespace
}  // namespace patchy
