#pragma once

// Patchy decomposition: a coarse solve gives a first guess of the value
// function and of the optimal feedback; the target is split into R parts and
// each part is transported backward along the coarse optimal flow to grow a
// patch. Patches are then solved on the fine grid independently of each
// other and merged.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "patchy/decomp.hpp"
#include "patchy/grid.hpp"
#include "patchy/problems.hpp"
#include "patchy/runtime.hpp"
#include "patchy/sl_solver.hpp"

namespace patchy {

/// Node codes of a patch map; patch colors are 0..R-1.
namespace code {
inline constexpr std::int32_t kUnreachable = -1;
inline constexpr std::int32_t kTarget = Restriction::kTargetColor;
inline constexpr std::int32_t kObstacle = -3;
inline constexpr std::int32_t kUncovered = -4;
inline constexpr std::int32_t kGhost = -5;
}  // namespace code

inline std::string code_name(std::int32_t c) {
  switch (c) {
    case code::kUnreachable: return "UNREACHABLE";
    case code::kTarget: return "TARGET";
    case code::kObstacle: return "OBSTACLE";
    case code::kUncovered: return "UNCOVERED";
    case code::kGhost: return "GHOST";
    default: return std::to_string(c);
  }
}

struct Addons {
  bool warm_start = false;                 // AO1
  bool causality = false;                  // AO2
  std::optional<double> reduction_factor;  // AO3

  bool any() const noexcept { return warm_start || causality || reduction_factor.has_value(); }
};

struct PatchyConfig {
  int R = 8;
  int coarse_nodes = 51;
  int fine_nodes = 101;
  BoundaryMode bc = BoundaryMode::state_constraint;
  Addons addons;
  double tol = 1e-6;
  int max_sweeps = 0;
  double color_tol = 1e-2;
  double unreachable_threshold = 0.5 * kInfinity;
  bool reverse_patch_order = false;

  void validate() const {
    if (R < 1) throw ConfigError("R must be at least 1");
    if (coarse_nodes < 2) throw ConfigError("coarse grid needs at least 2 nodes per axis");
    if (fine_nodes < coarse_nodes) throw ConfigError("fine grid must not be coarser than the coarse grid");
    if (!(color_tol > 0.0)) throw ConfigError("color_tol must be positive");
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (addons.reduction_factor && !(*addons.reduction_factor > 1.0))
      throw ConfigError("reduction factor must exceed 1");
  }

  SolverConfig solver() const {
    SolverConfig c;
    c.tol = tol;
    c.max_sweeps = max_sweeps;
    c.bc = bc;
    c.order = addons.causality ? SweepOrder::by_value : SweepOrder::lexicographic;
    c.reduction_factor = addons.reduction_factor;
    c.warm_start = addons.warm_start;
    return c;
  }
};

using ColorField = std::vector<double>;

struct PatchSizes {
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
};

template <std::size_t D>
struct PatchMap {
  Grid<D> grid;
  int R = 0;
  std::vector<std::int32_t> color;               // per extended node
  std::vector<std::vector<std::size_t>> nodes;   // per patch, lexicographic
  std::vector<std::size_t> uncovered;            // solved with patch 0
  std::vector<std::uint8_t> boundary;            // patch-boundary flag per node
  std::size_t relaxed = 0;                       // colored by argmax with max < 1/2
  std::size_t repaired = 0;                      // colored by neighbour majority

  /// Patch a node is solved in, or a negative code.
  std::int32_t patch_of(std::size_t n) const noexcept {
    const std::int32_t c = color[n];
    return c == code::kUncovered ? 0 : c;
  }
  std::size_t count(std::int32_t c) const noexcept {
    std::size_t k = 0;
    for (std::size_t n = 0; n < color.size(); ++n)
      if (color[n] == c) ++k;
    return k;
  }
  PatchSizes sizes() const {
    PatchSizes s;
    if (nodes.empty()) return s;
    s.min = std::numeric_limits<std::size_t>::max();
    std::size_t total = 0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const std::size_t size = nodes[j].size() + (j == 0 ? uncovered.size() : 0);
      s.min = std::min(s.min, size);
      s.max = std::max(s.max, size);
      total += size;
    }
    s.mean = static_cast<double>(total) / static_cast<double>(nodes.size());
    return s;
  }
};

template <std::size_t D>
struct LiftResult {
  NodeField<D> lifted;     // U_P^(0) on the fine grid
  FeedbackField feedback;  // coarse-optimal control at fine nodes
  SweepStats coarse;
  int coarse_R = 1;
};

/// Coarse solve with a static R-box decomposition, interpolation to the fine
/// grid and feedback extraction. Where some but not all weighted coarse
/// corners hold the sentinel, the interpolant is renormalized over the finite
/// ones so fine nodes next to obstacles keep a guess.
template <std::size_t D>
LiftResult<D> coarse_solve_and_lift(const SolveContext<D>& coarse, const SolveContext<D>& fine, const PatchyConfig& cfg,
                                    const ExecutionStrategy& exec, RunStats& stats,
                                    std::vector<std::string>& warnings) {
  LiftResult<D> out;
  SolverConfig sc;
  sc.tol = cfg.tol;
  sc.max_sweeps = cfg.max_sweeps;
  NodeField<D> coarse_field;
  {
    PhaseTimer timer(stats, "coarse");
    int parts = cfg.R;
    try {
      (void)decomposition_splits<D>(parts);
    } catch (const ConfigError&) {
      warnings.push_back("coarse solve: R=" + std::to_string(cfg.R) + " has no box split, using one subdomain");
      parts = 1;
    }
    auto dd = solve_dd(coarse, parts, sc, exec);
    out.coarse = dd.stats;
    out.coarse_R = parts;
    coarse_field = std::move(dd.field);
    stats.work += dd.stats.work;
    stats.phase_work["coarse"] += dd.stats.work;
    stats.sweeps["coarse"] += dd.stats.sweeps;
    if (!dd.stats.converged) warnings.push_back("coarse solve did not converge");
  }
  {
    PhaseTimer timer(stats, "lift");
    const Grid<D>& cg = coarse.grid();
    const Grid<D>& fg = fine.grid();
    out.lifted = NodeField<D>(fg, kInfinity);
    for (std::size_t n : fg.interior_nodes()) {
      const NodeClass cls = fine.node_class(n);
      if (cls == NodeClass::target) {
        out.lifted[n] = 0.0;
        continue;
      }
      if (cls != NodeClass::free) continue;
      const CellStencil<D> st = cg.stencil(fg.coord_of(n));
      double acc = 0.0;
      double wsum = 0.0;
      for (std::size_t c = 0; c < CellStencil<D>::kCorners; ++c) {
        const double w = st.weights[c];
        if (w == 0.0) continue;
        const double v = coarse_field[st.nodes[c]];
        if (is_infinite(v)) continue;
        acc += w * v;
        wsum += w;
      }
      if (wsum > 0.0) out.lifted[n] = acc / wsum;
    }
    WorkCounters fw;
    out.feedback = extract_feedback(out.lifted, fine, &fw);
  }
  return out;
}

/// Nodes whose lifted value reaches the threshold.
template <std::size_t D>
std::vector<std::uint8_t> mask_unreachable(const NodeField<D>& lifted, double threshold = 0.5 * kInfinity) {
  std::vector<std::uint8_t> mask(lifted.size(), 0);
  for (std::size_t n : lifted.grid.interior_nodes())
    if (lifted[n] >= threshold) mask[n] = 1;
  return mask;
}

/// Initial codes: TARGET, OBSTACLE, UNREACHABLE, GHOST, and UNCOVERED for the
/// nodes still to be colored.
template <std::size_t D>
std::vector<std::int32_t> classify_nodes(const SolveContext<D>& ctx, const std::vector<std::uint8_t>& mask) {
  std::vector<std::int32_t> c(ctx.grid().extended_count(), code::kGhost);
  for (std::size_t n : ctx.grid().interior_nodes()) {
    switch (ctx.node_class(n)) {
      case NodeClass::target: c[n] = code::kTarget; break;
      case NodeClass::obstacle: c[n] = code::kObstacle; break;
      default: c[n] = mask[n] ? code::kUnreachable : code::kUncovered; break;
    }
  }
  return c;
}

/// Foot stencils of the transport equation, shared by every color.
template <std::size_t D>
struct TransportPlan {
  std::vector<std::size_t> order;          // free nodes with a feedback control, sweep order
  std::vector<CellStencil<D>> stencil;     // aligned with order
  std::vector<std::size_t> targets;        // every target node
  std::size_t extended = 0;
  int sweep_limit = 0;
};

template <std::size_t D>
TransportPlan<D> make_transport_plan(const SolveContext<D>& ctx, const FeedbackField& feedback,
                                     const std::vector<double>* order_key = nullptr) {
  TransportPlan<D> plan;
  const Grid<D>& g = ctx.grid();
  plan.extended = g.extended_count();
  plan.sweep_limit = 10 * g.max_nodes();
  for (std::size_t n : g.interior_nodes()) {
    if (ctx.is_target(n)) plan.targets.push_back(n);
    if (ctx.node_class(n) == NodeClass::free && feedback[n] >= 0) plan.order.push_back(n);
  }
  if (order_key)
    std::stable_sort(plan.order.begin(), plan.order.end(),
                     [&](std::size_t a, std::size_t b) { return (*order_key)[a] < (*order_key)[b]; });
  const auto& problem = ctx.problem();
  plan.stencil.reserve(plan.order.size());
  for (std::size_t n : plan.order) {
    const Point<D> x = g.coord_of(n);
    const Point<D> f = problem.dynamics(x, problem.controls[static_cast<std::size_t>(feedback[n])]);
    const double h = ctx.step() / detail::norm(f);
    Point<D> foot;
    for (std::size_t a = 0; a < D; ++a) foot[a] = x[a] + h * f[a];
    plan.stencil.push_back(g.stencil(foot));
  }
  return plan;
}

struct TransportStats {
  int sweeps = 0;
  bool converged = true;
  std::uint64_t evals = 0;
};

/// Membership fraction of color j: 1 on the part, 0 on the other target nodes,
/// Gauss-Seidel on phi_i = I[phi](foot_i) until the largest change is <= tol.
template <std::size_t D>
ColorField transport_color(const TransportPlan<D>& plan, std::span<const std::size_t> part, double color_tol,
                           TransportStats* stats = nullptr) {
  ColorField phi(plan.extended, 0.0);
  for (std::size_t n : part) phi[n] = 1.0;
  TransportStats st;
  st.converged = false;
  while (st.sweeps < plan.sweep_limit) {
    double change = 0.0;
    for (std::size_t s = 0; s < plan.order.size(); ++s) {
      const CellStencil<D>& c = plan.stencil[s];
      double v = 0.0;
      for (std::size_t q = 0; q < CellStencil<D>::kCorners; ++q) v += c.weights[q] * phi[c.nodes[q]];
      const std::size_t n = plan.order[s];
      change = std::max(change, std::abs(v - phi[n]));
      phi[n] = v;
    }
    st.evals += plan.order.size();
    ++st.sweeps;
    if (change <= color_tol) {
      st.converged = true;
      break;
    }
  }
  if (stats) *stats = st;
  return phi;
}

/// Running argmax over color fields plus the sum used as a conservation check.
struct ColorAccumulator {
  std::vector<double> best;
  std::vector<std::int32_t> color;
  std::vector<double> sum;

  explicit ColorAccumulator(std::size_t n = 0) : best(n, 0.0), color(n, -1), sum(n, 0.0) {}

  /// Ties keep the lowest color whatever the order colors arrive in.
  void add(std::int32_t j, const ColorField& phi) {
    for (std::size_t n = 0; n < phi.size(); ++n) {
      const double v = phi[n];
      sum[n] += v;
      if (v <= 0.0) continue;
      if (v > best[n] || (v == best[n] && (color[n] < 0 || j < color[n]))) {
        best[n] = v;
        color[n] = j;
      }
    }
  }
};

/// Colors from the accumulated maxima, neighbour-majority repair of nodes no
/// color reached, and the patch-boundary flags.
template <std::size_t D>
PatchMap<D> assemble_patches(const ColorAccumulator& acc, std::vector<std::int32_t> codes, const Grid<D>& grid,
                             int R) {
  PatchMap<D> map;
  map.grid = grid;
  map.R = R;
  const auto interior = grid.interior_nodes();
  for (std::size_t n : interior) {
    if (codes[n] != code::kUncovered) continue;
    if (acc.best[n] > 0.0 && acc.color[n] >= 0) {
      codes[n] = acc.color[n];
      if (acc.best[n] < 0.5) ++map.relaxed;
    }
  }

  std::vector<std::size_t> pending;
  for (std::size_t n : interior)
    if (codes[n] == code::kUncovered) pending.push_back(n);
  std::vector<int> votes(static_cast<std::size_t>(R), 0);
  std::vector<std::pair<std::size_t, std::int32_t>> updates;
  while (!pending.empty()) {
    updates.clear();
    for (std::size_t n : pending) {
      std::fill(votes.begin(), votes.end(), 0);
      bool any = false;
      grid.for_each_face_neighbor(n, [&](std::size_t q) {
        if (codes[q] >= 0) {
          ++votes[static_cast<std::size_t>(codes[q])];
          any = true;
        }
      });
      if (!any) continue;
      const auto top = std::max_element(votes.begin(), votes.end());
      updates.push_back({n, static_cast<std::int32_t>(top - votes.begin())});
    }
    if (updates.empty()) break;
    for (const auto& [n, c] : updates) codes[n] = c;
    map.repaired += updates.size();
    std::erase_if(pending, [&](std::size_t n) { return codes[n] != code::kUncovered; });
  }

  map.color = std::move(codes);
  map.nodes.assign(static_cast<std::size_t>(R), {});
  for (std::size_t n : interior) {
    const std::int32_t c = map.color[n];
    if (c >= 0)
      map.nodes[static_cast<std::size_t>(c)].push_back(n);
    else if (c == code::kUncovered)
      map.uncovered.push_back(n);
  }
  map.boundary.assign(map.color.size(), 0);
  for (std::size_t n : interior) {
    const std::int32_t p = map.patch_of(n);
    if (p < 0) continue;
    grid.for_each_face_neighbor(n, [&](std::size_t q) {
      const std::int32_t o = map.patch_of(q);
      if (o >= 0 && o != p) map.boundary[n] = 1;
    });
  }
  return map;
}

/// Nodes within L-infinity distance `radius` (in cells) of a patch-boundary node.
template <std::size_t D>
std::vector<std::uint8_t> near_patch_boundary(const PatchMap<D>& map, int radius) {
  const Grid<D>& g = map.grid;
  std::vector<std::uint8_t> near(map.color.size(), 0);
  for (std::size_t n : g.interior_nodes()) {
    if (!map.boundary[n]) continue;
    const NodeIndex<D> c = g.multi(n);
    NodeIndex<D> lo{};
    NodeIndex<D> hi{};
    for (std::size_t a = 0; a < D; ++a) {
      lo[a] = std::max(0, c[a] - radius);
      hi[a] = std::min(g.nodes(a) - 1, c[a] + radius);
    }
    NodeIndex<D> i = lo;
    while (true) {
      near[g.flat(i)] = 1;
      std::size_t a = 0;
      for (; a < D; ++a) {
        if (++i[a] <= hi[a]) break;
        i[a] = lo[a];
      }
      if (a == D) break;
    }
  }
  return near;
}

template <std::size_t D>
struct PatchSolveResult {
  NodeField<D> field;
  std::vector<SweepStats> per_patch;
  WorkCounters work;
};

/// Independent fine solves, one per patch, written into one shared field.
/// A patch writes only its own nodes and reads only its own nodes and the
/// target; every other corner comes from U_P^(0) (Dirichlet) or is the
/// sentinel (state constraints), so patches never observe each other.
template <std::size_t D>
PatchSolveResult<D> solve_patches(const SolveContext<D>& ctx, const PatchMap<D>& map, const LiftResult<D>& lift,
                                  const PatchyConfig& cfg, const ExecutionStrategy& exec,
                                  std::vector<std::string>& warnings, RunStats* stats = nullptr) {
  const SolverConfig sc = cfg.solver();
  const Grid<D>& g = ctx.grid();
  const auto R = static_cast<std::size_t>(map.R);
  PatchSolveResult<D> out{NodeField<D>(g, kInfinity), std::vector<SweepStats>(R), {}};
  std::vector<double>& U = out.field.values;

  std::vector<std::vector<std::size_t>> own(R);
  for (std::size_t j = 0; j < R; ++j) {
    own[j] = map.nodes[j];
    if (j == 0 && !map.uncovered.empty()) {
      own[j].insert(own[j].end(), map.uncovered.begin(), map.uncovered.end());
      std::sort(own[j].begin(), own[j].end());
    }
  }
  for (std::size_t n : g.interior_nodes()) {
    const std::int32_t c = map.color[n];
    if (c == code::kTarget) U[n] = 0.0;
    else if (map.patch_of(n) >= 0 && sc.warm_start) U[n] = lift.lifted[n];
  }

  std::optional<ControlReduction> reduction;
  if (sc.reduction_factor)
    reduction = make_control_reduction(ctx.problem().controls, *sc.reduction_factor, lift.feedback);

  auto run_one = [&](std::size_t j, const ExecutionStrategy& inner) {
    if (own[j].empty()) return;
    Restriction restrict_to;
    restrict_to.color = map.color.data();
    restrict_to.own = static_cast<std::int32_t>(j);
    if (j == 0) restrict_to.also_own = code::kUncovered;
    if (sc.bc == BoundaryMode::dirichlet) restrict_to.frozen = lift.lifted.values.data();
    SolveOptions opt;
    opt.restriction = &restrict_to;
    opt.reduction = reduction ? &*reduction : nullptr;
    opt.order_key = &lift.lifted.values;
    out.per_patch[j] = solve(out.field, ctx, own[j], sc, inner, opt);
  };

  std::vector<std::size_t> order(R);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (cfg.reverse_patch_order) std::reverse(order.begin(), order.end());
  if (exec.kind == StrategyKind::method2) {
    run_patch_pool(R, exec.task_workers(), [&](std::size_t j) { run_one(j, ExecutionStrategy::serial()); }, order);
  } else {
    for (std::size_t j : order) run_one(j, exec);
  }

  for (std::size_t j = 0; j < R; ++j) {
    out.work += out.per_patch[j].work;
    if (!own[j].empty() && !out.per_patch[j].converged)
      warnings.push_back("patch " + std::to_string(j) + " did not converge");
  }
  std::optional<PhaseTimer> timer;
  if (stats) timer.emplace(*stats, "merge");
  for (std::size_t n : g.interior_nodes()) {
    const std::int32_t c = map.color[n];
    if (c == code::kTarget) U[n] = 0.0;
    else if (c == code::kUnreachable || c == code::kObstacle) U[n] = kInfinity;
  }
  return out;
}

template <std::size_t D>
struct PatchyResult {
  NodeField<D> field;  // U_P
  NodeField<D> lifted;
  FeedbackField feedback;
  PatchMap<D> map;
  std::vector<SweepStats> per_patch;
  RunStats stats;
  std::vector<std::string> warnings;
  double max_color_sum = 0.0;
  int coarse_R = 1;
};

template <std::size_t D>
PatchyResult<D> run_patchy(const Problem<D>& problem, const PatchyConfig& cfg, const ExecutionStrategy& exec = {}) {
  cfg.validate();
  PatchyResult<D> res;
  const Grid<D> cg = problem.grid(cfg.coarse_nodes);
  const Grid<D> fg = problem.grid(cfg.fine_nodes);
  const SolveContext<D> coarse(problem, cg);
  const SolveContext<D> fine(problem, fg);
  const auto parts = partition_target(problem, fg, cfg.R);

  LiftResult<D> lift = coarse_solve_and_lift(coarse, fine, cfg, exec, res.stats, res.warnings);
  res.coarse_R = lift.coarse_R;

  {
    PhaseTimer timer(res.stats, "transport");
    const auto mask = mask_unreachable(lift.lifted, cfg.unreachable_threshold);
    auto codes = classify_nodes(fine, mask);
    const auto plan =
        make_transport_plan(fine, lift.feedback, cfg.addons.causality ? &lift.lifted.values : nullptr);
    ColorAccumulator acc(fg.extended_count());
    std::mutex merge;
    std::vector<TransportStats> tstats(parts.size());
    run_patch_pool(parts.size(), exec.task_workers(), [&](std::size_t j) {
      ColorField phi = transport_color(plan, parts[j], cfg.color_tol, &tstats[j]);
      std::scoped_lock lock(merge);
      acc.add(static_cast<std::int32_t>(j), phi);
    });
    for (std::size_t j = 0; j < tstats.size(); ++j) {
      res.stats.transport_evals += tstats[j].evals;
      res.stats.sweeps["transport"] += tstats[j].sweeps;
      if (!tstats[j].converged) res.warnings.push_back("color " + std::to_string(j) + " transport did not converge");
    }
    for (std::size_t n : fg.interior_nodes()) res.max_color_sum = std::max(res.max_color_sum, acc.sum[n]);
    res.map = assemble_patches(acc, std::move(codes), fg, cfg.R);
    if (!res.map.uncovered.empty())
      res.warnings.push_back(std::to_string(res.map.uncovered.size()) + " nodes left UNCOVERED, solved in patch 0");
  }

  {
    PhaseTimer timer(res.stats, "patch_solve");
    auto solved = solve_patches(fine, res.map, lift, cfg, exec, res.warnings, &res.stats);
    res.field = std::move(solved.field);
    res.per_patch = std::move(solved.per_patch);
    res.stats.work += solved.work;
    res.stats.phase_work["patch_solve"] += solved.work;
    int sweeps = 0;
    for (const auto& s : res.per_patch) sweeps += s.sweeps;
    res.stats.sweeps["patch_solve"] += sweeps;
  }
  res.lifted = std::move(lift.lifted);
  res.feedback = std::move(lift.feedback);
  return res;
}

}  // namespace patchy
