#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "patchy/patchy.hpp"

namespace patchy {
namespace {

// Flow pushing every state to the left edge x1 = -2.
Problem<2> leftward_problem() {
  Problem<2> p;
  p.name = "leftward";
  p.lo = {-2.0, -2.0};
  p.hi = {2.0, 2.0};
  p.controls.controls = {{-1.0, 0.0, 0.0}};
  p.controls.geometry = ControlGeometry::explicit_list;
  p.dynamics = [](const Point<2>&, const Control& a) { return Point<2>{a[0], a[1]}; };
  p.target.kind = TargetKind::slab;
  p.target.axis = 0;
  p.target.offset = -2.0;
  return p;
}

TEST(LiftTest, CoarseGuessAccuracy) {
  const auto p = preset<2>("eikonal2d");
  const SolveContext<2> coarse(p, p.grid(51));
  const SolveContext<2> fine(p, p.grid(101));
  PatchyConfig cfg;
  cfg.R = 4;
  RunStats stats;
  std::vector<std::string> warnings;
  const auto lift = coarse_solve_and_lift(coarse, fine, cfg, ExecutionStrategy::serial(), stats, warnings);
  EXPECT_TRUE(warnings.empty());
  EXPECT_EQ(lift.coarse_R, 4);
  double err = 0.0;
  for (std::size_t n : fine.grid().interior_nodes()) {
    ASSERT_FALSE(is_infinite(lift.lifted[n]));
    err = std::max(err, std::abs(lift.lifted[n] - p.exact(fine.grid().coord_of(n))));
  }
  EXPECT_LE(err, 2 * coarse.grid().spacing(0));
  EXPECT_GT(stats.phase_work["coarse"].relaxations, 0u);
}

TEST(LiftTest, SameGridReproducesCoarseValues) {
  const auto p = preset<2>("zermelo2d");
  const SolveContext<2> ctx(p, p.grid(41));
  PatchyConfig cfg;
  cfg.R = 1;
  cfg.coarse_nodes = cfg.fine_nodes = 41;
  RunStats stats;
  std::vector<std::string> warnings;
  const auto lift = coarse_solve_and_lift(ctx, ctx, cfg, {}, stats, warnings);
  const auto dd = solve_dd(ctx, 1, SolverConfig{});
  EXPECT_EQ(lift.lifted.values, dd.field.values);
}

TEST(LiftTest, UnreachableNodesSaturateAndAreMasked) {
  const auto fan = preset<2>("fan2d");
  const SolveContext<2> ctx(fan, fan.grid(41));  // x1 + x2 + 0.1 = 0 passes through nodes
  PatchyConfig cfg;
  cfg.R = 1;
  cfg.coarse_nodes = cfg.fine_nodes = 41;
  RunStats stats;
  std::vector<std::string> warnings;
  const auto lift = coarse_solve_and_lift(ctx, ctx, cfg, {}, stats, warnings);
  const auto mask = mask_unreachable(lift.lifted);
  const auto codes = classify_nodes(ctx, mask);
  const Grid<2>& g = ctx.grid();
  std::size_t on_line = 0;
  for (int i = 1; i < 40; ++i) {
    const std::size_t n = g.flat({i, 39 - i});
    if (ctx.is_target(n)) continue;
    ++on_line;
    EXPECT_EQ(lift.lifted[n], kInfinity);
    EXPECT_EQ(lift.feedback[n], FeedbackField::kNone);
    EXPECT_EQ(codes[n], code::kUnreachable);
  }
  EXPECT_GT(on_line, 30u);

  const auto eik = preset<2>("eikonal2d");
  const SolveContext<2> e(eik, eik.grid(41));
  const auto elift = coarse_solve_and_lift(e, e, cfg, {}, stats, warnings);
  const auto emask = mask_unreachable(elift.lifted);
  EXPECT_EQ(std::count(emask.begin(), emask.end(), 1), 0);

  const auto obs = preset<2>("eikonal2d-obstacles");
  const SolveContext<2> o(obs, obs.grid(41));
  const auto olift = coarse_solve_and_lift(o, o, cfg, {}, stats, warnings);
  const auto ocodes = classify_nodes(o, mask_unreachable(olift.lifted));
  EXPECT_EQ(ocodes[o.grid().flat({10, 30})], code::kObstacle);  // (-1, 1)
}

TEST(TransportTest, BandDownstreamOfPart) {
  const auto p = leftward_problem();
  const Grid<2> g = p.grid(21);
  const SolveContext<2> ctx(p, g);
  FeedbackField fb;
  fb.control.assign(g.extended_count(), FeedbackField::kNone);
  for (std::size_t n : g.interior_nodes())
    if (!ctx.is_target(n)) fb.control[n] = 0;
  std::vector<std::size_t> part;
  for (int j = 5; j <= 9; ++j) part.push_back(g.flat({0, j}));
  const auto plan = make_transport_plan(ctx, fb);
  TransportStats st;
  const ColorField phi = transport_color(plan, part, 1e-2, &st);
  EXPECT_TRUE(st.converged);
  for (std::size_t n : g.interior_nodes()) {
    const int j = g.multi(n)[1];
    EXPECT_EQ(phi[n], (j >= 5 && j <= 9) ? 1.0 : 0.0);
  }
}

TEST(TransportTest, ConvexCombinationOfCorners) {
  const Grid<2> g = Grid<2>::cube(0.0, 1.0, 3);
  TransportPlan<2> plan;
  plan.extended = g.extended_count();
  plan.sweep_limit = 10;
  const std::size_t a = g.flat({0, 0});
  const std::size_t b = g.flat({1, 0});
  const std::size_t x = g.flat({2, 2});
  plan.order = {x};
  plan.stencil.push_back(g.stencil({0.25, 0.0}));  // midway between a and b
  const std::size_t part[] = {a};
  const ColorField phi = transport_color(plan, part, 1e-2);
  EXPECT_DOUBLE_EQ(phi[x], 0.5);
  EXPECT_EQ(phi[b], 0.0);
}

TEST(TransportTest, SingleColorReachesEveryReachableNode) {
  const auto p = preset<2>("eikonal2d");
  const SolveContext<2> coarse(p, p.grid(51));
  const SolveContext<2> fine(p, p.grid(101));
  PatchyConfig cfg;
  cfg.R = 1;
  RunStats stats;
  std::vector<std::string> warnings;
  const auto lift = coarse_solve_and_lift(coarse, fine, cfg, {}, stats, warnings);
  const auto parts = partition_target(p, fine.grid(), 1);
  const auto plan = make_transport_plan(fine, lift.feedback);
  const ColorField phi = transport_color(plan, parts[0], cfg.color_tol);
  for (std::size_t n : fine.grid().interior_nodes()) {
    if (lift.feedback[n] < 0 && !fine.is_target(n)) continue;
    EXPECT_GE(phi[n], 1.0 - cfg.color_tol);
    EXPECT_LE(phi[n], 1.0 + 1e-12);
  }
}

TEST(AssembleTest, ArgmaxTiesAndRepair) {
  const Grid<2> g = Grid<2>::cube(0.0, 4.0, 5);
  const std::size_t n = g.extended_count();
  std::vector<std::int32_t> codes(n, code::kGhost);
  for (std::size_t q : g.interior_nodes()) codes[q] = code::kUncovered;

  ColorField phi0(n, 0.0);
  ColorField phi1(n, 0.0);
  ColorField phi2(n, 0.0);
  const std::size_t clear = g.flat({0, 0});
  const std::size_t tie = g.flat({4, 0});
  phi0[clear] = 0.8;
  phi1[clear] = 0.2;
  phi0[tie] = 0.5;
  phi1[tie] = 0.5;
  // node (2,2): neighbours (1,2) and (3,2) color 2, (2,1) color 1, (2,3) empty
  const std::size_t hole = g.flat({2, 2});
  phi2[g.flat({1, 2})] = 0.9;
  phi2[g.flat({3, 2})] = 0.9;
  phi1[g.flat({2, 1})] = 0.9;
  codes[g.flat({2, 3})] = code::kTarget;
  for (std::size_t q : g.interior_nodes()) {
    if (phi0[q] + phi1[q] + phi2[q] == 0.0 && q != hole && codes[q] == code::kUncovered)
      codes[q] = code::kUnreachable;
  }

  for (const bool reversed : {false, true}) {
    ColorAccumulator acc(n);
    if (reversed) {
      acc.add(2, phi2);
      acc.add(1, phi1);
      acc.add(0, phi0);
    } else {
      acc.add(0, phi0);
      acc.add(1, phi1);
      acc.add(2, phi2);
    }
    const auto map = assemble_patches(acc, codes, g, 3);
    EXPECT_EQ(map.color[clear], 0);
    EXPECT_EQ(map.color[tie], 0);
    EXPECT_EQ(map.color[hole], 2);
    EXPECT_EQ(map.repaired, 1u);
    EXPECT_TRUE(map.uncovered.empty());
    EXPECT_EQ(map.color[g.flat({2, 3})], code::kTarget);
    EXPECT_TRUE(map.boundary[hole]);      // touches color 1
    EXPECT_FALSE(map.boundary[clear]);    // only unreachable neighbours
  }
}

TEST(AssembleTest, IsolatedNodeStaysUncovered) {
  const Grid<2> g = Grid<2>::cube(0.0, 2.0, 3);
  std::vector<std::int32_t> codes(g.extended_count(), code::kGhost);
  for (std::size_t q : g.interior_nodes()) codes[q] = code::kUnreachable;
  const std::size_t centre = g.flat({1, 1});
  codes[centre] = code::kUncovered;
  const ColorAccumulator acc(g.extended_count());
  const auto map = assemble_patches(acc, codes, g, 2);
  ASSERT_EQ(map.uncovered.size(), 1u);
  EXPECT_EQ(map.patch_of(centre), 0);
  EXPECT_EQ(map.sizes().max, 1u);
  EXPECT_EQ(map.sizes().min, 0u);
}

TEST(PatchSolveTest, SinglePatchDirichletMatchesSingleDomain) {
  const auto p = preset<2>("zermelo2d");
  PatchyConfig cfg;
  cfg.R = 1;
  cfg.coarse_nodes = 41;
  cfg.fine_nodes = 81;
  cfg.bc = BoundaryMode::dirichlet;
  const auto res = run_patchy(p, cfg);
  const Grid<2> g = p.grid(81);
  const SolveContext<2> ctx(p, g);
  NodeField<2> ref = ctx.initial_field();
  const auto nodes = g.interior_nodes();
  solve(ref, ctx, nodes, SolverConfig{});
  for (std::size_t n : nodes) {
    ASSERT_EQ(is_infinite(ref[n]), is_infinite(res.field[n])) << n;
    if (!is_infinite(ref[n])) {
      EXPECT_NEAR(ref[n], res.field[n], 10 * cfg.tol);
    }
  }
}

TEST(PatchSolveTest, FootsLeavingPatchKeepInitialValue) {
  const auto p = preset<2>("eikonal2d");
  const Grid<2> g = p.grid(41);
  const SolveContext<2> ctx(p, g);
  PatchMap<2> map;
  map.grid = g;
  map.R = 2;
  map.color.assign(g.extended_count(), code::kGhost);
  map.nodes.assign(2, {});
  const std::size_t lone = g.flat({35, 20});  // (1.5, 0): far from the target
  for (std::size_t n : g.interior_nodes()) {
    map.color[n] = ctx.is_target(n) ? code::kTarget : (n == lone ? 1 : 0);
    if (map.color[n] >= 0) map.nodes[static_cast<std::size_t>(map.color[n])].push_back(n);
  }
  map.boundary.assign(g.extended_count(), 0);
  LiftResult<2> lift;
  lift.lifted = NodeField<2>(g, 0.0);
  for (std::size_t n : g.interior_nodes()) lift.lifted[n] = p.exact(g.coord_of(n));
  lift.feedback.control.assign(g.extended_count(), FeedbackField::kNone);
  std::vector<std::string> warnings;

  PatchyConfig cfg;
  cfg.R = 2;
  auto plain = solve_patches(ctx, map, lift, cfg, {}, warnings);
  EXPECT_EQ(plain.field[lone], kInfinity);
  cfg.addons.warm_start = true;
  auto seeded = solve_patches(ctx, map, lift, cfg, {}, warnings);
  EXPECT_EQ(seeded.field[lone], lift.lifted[lone]);
  cfg.addons.warm_start = false;
  cfg.bc = BoundaryMode::dirichlet;
  auto frozen = solve_patches(ctx, map, lift, cfg, {}, warnings);
  EXPECT_NEAR(frozen.field[lone], 1.0, 2 * g.spacing(0));
}

class PresetPatchyTest : public ::testing::TestWithParam<const char*> {};

TEST_P(PresetPatchyTest, ConservationCoverageAndPartition) {
  const auto p = preset<2>(GetParam());
  PatchyConfig cfg;
  cfg.R = (std::string(GetParam()) == "lqr2d" || std::string(GetParam()) == "lunar2d") ? 4 : 8;
  cfg.coarse_nodes = 31;
  cfg.fine_nodes = 61;
  const auto res = run_patchy(p, cfg);
  EXPECT_LE(res.max_color_sum, 1.0 + 1e-6);
  EXPECT_TRUE(res.map.uncovered.empty());
  std::set<std::size_t> seen;
  std::size_t listed = 0;
  for (const auto& nodes : res.map.nodes) {
    listed += nodes.size();
    seen.insert(nodes.begin(), nodes.end());
  }
  EXPECT_EQ(seen.size(), listed);
  std::size_t colored = 0;
  for (std::size_t n : res.map.grid.interior_nodes())
    if (res.map.color[n] >= 0) ++colored;
  EXPECT_EQ(colored, listed);
}

INSTANTIATE_TEST_SUITE_P(Presets, PresetPatchyTest,
                         ::testing::Values("eikonal2d", "fan2d", "zermelo2d", "lqr2d", "lunar2d",
                                           "eikonal2d-obstacles"));

TEST(PatchIndependenceTest, OrderAndWorkersDoNotMatter) {
  const auto p = preset<2>("eikonal2d");
  PatchyConfig cfg;
  cfg.R = 8;
  cfg.coarse_nodes = 31;
  cfg.fine_nodes = 61;
  const auto base = run_patchy(p, cfg);
  cfg.reverse_patch_order = true;
  const auto reversed = run_patchy(p, cfg);
  cfg.reverse_patch_order = false;
  const auto pooled = run_patchy(p, cfg, ExecutionStrategy::method2(4));
  const auto batched = run_patchy(p, cfg, ExecutionStrategy::method1(3));
  for (std::size_t n : base.map.grid.interior_nodes()) {
    EXPECT_EQ(base.field[n], reversed.field[n]);
    EXPECT_EQ(base.field[n], pooled.field[n]);
    if (is_infinite(base.field[n])) {
      EXPECT_TRUE(is_infinite(batched.field[n]));
    } else {
      EXPECT_NEAR(base.field[n], batched.field[n], 10 * cfg.tol);
    }
  }
  EXPECT_EQ(base.stats.work, pooled.stats.work);
}

TEST(NearBoundaryTest, ChebyshevBall) {
  const Grid<2> g = Grid<2>::cube(0.0, 10.0, 11);
  PatchMap<2> map;
  map.grid = g;
  map.color.assign(g.extended_count(), 0);
  map.boundary.assign(g.extended_count(), 0);
  map.boundary[g.flat({5, 5})] = 1;
  map.boundary[g.flat({0, 0})] = 1;
  const auto near = near_patch_boundary(map, 2);
  std::size_t count = 0;
  for (std::size_t n : g.interior_nodes()) count += near[n];
  EXPECT_EQ(count, 25u + 9u);
  EXPECT_TRUE(near[g.flat({7, 3})]);
  EXPECT_FALSE(near[g.flat({8, 5})]);
}

TEST(PatchyConfigTest, Validation) {
  PatchyConfig cfg;
  cfg.fine_nodes = 21;
  cfg.coarse_nodes = 41;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PatchyConfig{};
  cfg.R = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = PatchyConfig{};
  cfg.addons.reduction_factor = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(PatchyRunTest, NonFactorableRFallsBackForCoarseSolve) {
  const auto p = preset<2>("eikonal2d");
  PatchyConfig cfg;
  cfg.R = 3;
  cfg.coarse_nodes = 21;
  cfg.fine_nodes = 41;
  const auto res = run_patchy(p, cfg);
  EXPECT_EQ(res.coarse_R, 1);
  ASSERT_FALSE(res.warnings.empty());
  EXPECT_NE(res.warnings[0].find("R=3"), std::string::npos);
  EXPECT_EQ(res.map.nodes.size(), 3u);
}

}  // namespace
}  // namespace patchy
