#pragma once

// Semi-Lagrangian fixed-point operator for minimum-time / infinite-horizon
// HJB equations, Gauss-Seidel value iteration over node sets and discrete
// feedback extraction.
//
//   U_i = min_a { I[U](x_i + h_{i,a} f(x_i,a)) + h_{i,a} l(x_i,a) },
//   |h_{i,a} f(x_i,a)| = k,
//
// with U = 0 on the target, +inf (the sentinel) on obstacles and ghost nodes.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchy/grid.hpp"
#include "patchy/problems.hpp"
#include "patchy/runtime.hpp"

namespace patchy {

enum class BoundaryMode { state_constraint, dirichlet };
enum class SweepOrder { lexicographic, by_value };

inline std::string to_string(BoundaryMode m) { return m == BoundaryMode::dirichlet ? "dirichlet" : "sc"; }

struct SolverConfig {
  double tol = 1e-6;
  int max_sweeps = 0;  // 0: 10 * max nodes per axis
  BoundaryMode bc = BoundaryMode::state_constraint;
  SweepOrder order = SweepOrder::lexicographic;
  std::optional<double> reduction_factor;  // AO3
  bool warm_start = false;                 // AO1

  template <std::size_t D>
  int sweep_limit(const Grid<D>& g) const {
    return max_sweeps > 0 ? max_sweeps : 10 * g.max_nodes();
  }
  void validate() const {
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (max_sweeps < 0) throw ConfigError("max_sweeps must be at least 1");
    if (reduction_factor && !(*reduction_factor > 1.0)) throw ConfigError("reduction factor must exceed 1");
  }
};

template <std::size_t D>
struct CandidateEvaluation {
  int control_index = -1;
  double step_h = 0.0;
  Point<D> foot{};
  double value = kInfinity;
};

/// Per-node optimal control index, kNone where undefined.
struct FeedbackField {
  static constexpr std::int32_t kNone = -1;
  std::vector<std::int32_t> control;
  std::int32_t operator[](std::size_t node) const noexcept { return control[node]; }
};

struct SweepStats {
  int sweeps = 0;
  WorkCounters work;
  bool converged = true;
  double last_change = 0.0;
  std::size_t pruned = 0;  // nodes reset by the sentinel leak check
};

struct RelaxResult {
  double value = kInfinity;
  std::int32_t control = FeedbackField::kNone;
};

enum class NodeClass : std::uint8_t { free, target, obstacle, ghost };

/// Threshold under which |f(x,a)| counts as zero speed: 1e-12 times the
/// largest speed seen at sampled nodes over all controls.
template <std::size_t D>
double speed_threshold(const Problem<D>& problem, const Grid<D>& grid) {
  const std::vector<std::size_t> nodes = grid.interior_nodes();
  const std::size_t stride = std::max<std::size_t>(1, nodes.size() / 4096);
  double top = 0.0;
  for (std::size_t s = 0; s < nodes.size(); s += stride) {
    const Point<D> x = grid.coord_of(nodes[s]);
    for (const Control& a : problem.controls.controls) top = std::max(top, detail::norm(problem.dynamics(x, a)));
  }
  return 1e-12 * top;
}

/// Reader result for a corner that rejects the candidate outright: ghost and
/// obstacle nodes, and corners outside the active set. A free node that still
/// holds the sentinel is read as the number kInfinity instead, so values
/// flow into cells whose other corners are not yet computed.
inline constexpr double kBlocked = std::numeric_limits<double>::infinity();

/// Immutable per-(problem, grid) data shared by every solve on that grid.
template <std::size_t D>
class SolveContext {
 public:
  SolveContext(const Problem<D>& problem, const Grid<D>& grid)
      : problem_(&problem), grid_(grid), step_(grid.min_spacing()), eps_f_(speed_threshold(problem, grid)) {
    classes_.assign(grid.extended_count(), NodeClass::ghost);
    grid.for_each_interior([&](const NodeIndex<D>& i) {
      const Point<D> x = grid.coord(i);
      const std::size_t n = grid.flat(i);
      if (problem.is_obstacle(x))
        classes_[n] = NodeClass::obstacle;
      else if (problem.target.contains(x, step_))
        classes_[n] = NodeClass::target;
      else
        classes_[n] = NodeClass::free;
    });
  }

  const Problem<D>& problem() const noexcept { return *problem_; }
  const Grid<D>& grid() const noexcept { return grid_; }
  double step() const noexcept { return step_; }
  double speed_epsilon() const noexcept { return eps_f_; }
  NodeClass node_class(std::size_t n) const noexcept { return classes_[n]; }
  bool is_target(std::size_t n) const noexcept { return classes_[n] == NodeClass::target; }
  bool is_obstacle(std::size_t n) const noexcept { return classes_[n] == NodeClass::obstacle; }
  bool blocks(std::size_t n) const noexcept {
    return classes_[n] == NodeClass::ghost || classes_[n] == NodeClass::obstacle;
  }

  /// Field at iteration 0: 0 on target nodes, sentinel elsewhere.
  NodeField<D> initial_field() const {
    NodeField<D> f(grid_, kInfinity);
    for (std::size_t n = 0; n < classes_.size(); ++n)
      if (classes_[n] == NodeClass::target) f[n] = 0.0;
    return f;
  }

  /// Minimizing candidate at an arbitrary point, over `indices` (all controls
  /// when empty). `read(node)` returns a corner value or kBlocked. Degenerate
  /// (zero-speed) candidates, candidates with a weighted blocked corner and
  /// candidates whose value reaches sentinel/2 are skipped; ties resolve to
  /// the first index visited.
  template <class Reader>
  CandidateEvaluation<D> best_candidate(const Point<D>& x, Reader&& read, std::span<const std::uint16_t> indices,
                                        WorkCounters& work) const {
    CandidateEvaluation<D> best;
    const auto& controls = problem_->controls.controls;
    const std::size_t count = indices.empty() ? controls.size() : indices.size();
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t m = indices.empty() ? s : indices[s];
      const Control& a = controls[m];
      const Point<D> f = problem_->dynamics(x, a);
      const double speed = detail::norm(f);
      if (speed < eps_f_ || speed == 0.0) continue;
      const double h = step_ / speed;
      Point<D> foot;
      for (std::size_t d = 0; d < D; ++d) foot[d] = x[d] + h * f[d];
      ++work.candidate_evals;
      const CellStencil<D> st = grid_.stencil(foot);
      double v = 0.0;
      bool blocked = false;
      for (std::size_t c = 0; c < CellStencil<D>::kCorners; ++c) {
        if (st.weights[c] == 0.0) continue;
        const double corner = read(st.nodes[c]);
        if (corner == kBlocked) {
          blocked = true;
          break;
        }
        v += st.weights[c] * corner;
      }
      if (blocked || is_infinite(v)) continue;
      v += h * problem_->cost(x, a);
      if (v < best.value) {
        best.control_index = static_cast<int>(m);
        best.step_h = h;
        best.foot = foot;
        best.value = v;
      }
    }
    return best;
  }

 private:
  const Problem<D>* problem_;
  Grid<D> grid_;
  double step_;
  double eps_f_;
  std::vector<NodeClass> classes_;
};

/// Restricts what a node update may read. Corners whose color is neither
/// `own` nor kTargetColor are replaced by `frozen` (Dirichlet data) or block
/// the candidate when `frozen` is null (state constraints).
struct Restriction {
  static constexpr std::int32_t kTargetColor = -2;
  const std::int32_t* color = nullptr;
  std::int32_t own = 0;
  std::int32_t also_own = std::numeric_limits<std::int32_t>::min();
  const double* frozen = nullptr;

  bool active(std::size_t n) const noexcept {
    const std::int32_t c = color[n];
    return c == own || c == kTargetColor || c == also_own;
  }
};

/// AO3: per coarse-optimal control, the indices of the reduced control set.
struct ControlReduction {
  const std::int32_t* a_star = nullptr;                 // per node, kNone allowed
  std::vector<std::vector<std::uint16_t>> by_control;  // by_control[m] = A_r around control m

  std::span<const std::uint16_t> for_node(std::size_t n) const noexcept {
    const std::int32_t m = a_star[n];
    if (m < 0) return {};
    return by_control[static_cast<std::size_t>(m)];
  }
};

/// A_r = { a : a . a_star >= cos(pi / r) }. Lattice and explicit sets are
/// returned unreduced.
inline std::vector<std::size_t> reduce_controls(const ControlSet& set, const Control& a_star, double r) {
  std::vector<std::size_t> out;
  if (!set.is_unit()) {
    out.resize(set.size());
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  if (!(r > 1.0)) throw ConfigError("reduction factor must exceed 1");
  const double threshold = std::cos(std::numbers::pi / r) - 1e-12;
  for (std::size_t m = 0; m < set.size(); ++m) {
    const Control& a = set[m];
    const double dot = a[0] * a_star[0] + a[1] * a_star[1] + a[2] * a_star[2];
    if (dot >= threshold) out.push_back(m);
  }
  return out;
}

inline ControlReduction make_control_reduction(const ControlSet& set, double r, const FeedbackField& a_star) {
  ControlReduction red;
  red.a_star = a_star.control.data();
  red.by_control.reserve(set.size());
  for (std::size_t m = 0; m < set.size(); ++m) {
    std::vector<std::uint16_t> ids;
    for (std::size_t i : reduce_controls(set, set[m], r)) ids.push_back(static_cast<std::uint16_t>(i));
    red.by_control.push_back(std::move(ids));
  }
  return red;
}

struct SolveOptions {
  const Restriction* restriction = nullptr;
  const ControlReduction* reduction = nullptr;
  const std::vector<double>* order_key = nullptr;  // AO2 key; the field itself when null
};

namespace detail {

inline double load(const double* values, std::size_t n) noexcept {
  return std::atomic_ref<double>(const_cast<double&>(values[n])).load(std::memory_order_relaxed);
}
inline void store(double* values, std::size_t n, double v) noexcept {
  std::atomic_ref<double>(values[n]).store(v, std::memory_order_relaxed);
}

template <std::size_t D>
auto free_reader(const SolveContext<D>& ctx, const double* values) {
  return [&ctx, values](std::size_t c) { return ctx.blocks(c) ? kBlocked : load(values, c); };
}

template <std::size_t D>
auto restricted_reader(const SolveContext<D>& ctx, const double* values, const Restriction& r) {
  return [&ctx, values, &r](std::size_t c) {
    if (ctx.blocks(c)) return kBlocked;
    if (r.active(c)) return load(values, c);
    if (!r.frozen || is_infinite(r.frozen[c])) return kBlocked;
    return r.frozen[c];
  };
}

template <std::size_t D>
RelaxResult relax(const SolveContext<D>& ctx, double* values, std::size_t node, const SolveOptions& opt,
                  bool monotone, WorkCounters& work) {
  ++work.relaxations;
  const NodeClass cls = ctx.node_class(node);
  if (cls == NodeClass::target) return {0.0, FeedbackField::kNone};
  if (cls != NodeClass::free) return {kInfinity, FeedbackField::kNone};
  const double current = load(values, node);
  const Point<D> x = ctx.grid().coord_of(node);
  const std::span<const std::uint16_t> ids = opt.reduction ? opt.reduction->for_node(node) : std::span<const std::uint16_t>{};
  CandidateEvaluation<D> best;
  if (opt.restriction)
    best = ctx.best_candidate(x, restricted_reader(ctx, values, *opt.restriction), ids, work);
  else
    best = ctx.best_candidate(x, free_reader(ctx, values), ids, work);
  if (best.control_index < 0) return {current, FeedbackField::kNone};
  const double v = monotone ? std::min(current, best.value) : best.value;
  return {v, best.control_index};
}

/// Resets to the sentinel every node of a converged field whose value owes
/// more than `tol` to sentinel-valued free corners, directly or through other
/// nodes. Such values are finite only because the sentinel was read as a
/// number. The sentinel share c solves c_i = sum_w w c_corner along the
/// optimal candidates, with c = 1 on sentinel corners. Returns the number of
/// nodes reset.
template <std::size_t D>
std::size_t prune_sentinel_leaks(const SolveContext<D>& ctx, double* values, std::span<const std::size_t> nodes,
                                 const SolveOptions& opt, double tol, int max_passes) {
  const Grid<D>& grid = ctx.grid();
  const Restriction* r = opt.restriction;
  std::vector<CellStencil<D>> deps(nodes.size());
  std::vector<std::uint8_t> has_dep(nodes.size(), 0);
  WorkCounters unused;
  for (std::size_t s = 0; s < nodes.size(); ++s) {
    const std::size_t n = nodes[s];
    if (ctx.node_class(n) != NodeClass::free || is_infinite(values[n])) continue;
    const auto ids = opt.reduction ? opt.reduction->for_node(n) : std::span<const std::uint16_t>{};
    const Point<D> x = grid.coord_of(n);
    const auto best = r ? ctx.best_candidate(x, restricted_reader(ctx, values, *r), ids, unused)
                        : ctx.best_candidate(x, free_reader(ctx, values), ids, unused);
    if (best.control_index < 0) continue;
    deps[s] = grid.stencil(best.foot);
    has_dep[s] = 1;
  }
  std::vector<double> share(grid.extended_count(), 0.0);
  auto corner_share = [&](std::size_t c) {
    if (ctx.node_class(c) != NodeClass::free || (r && !r->active(c))) return 0.0;
    return is_infinite(values[c]) ? 1.0 : share[c];
  };
  const double limit = tol / kInfinity;
  for (int pass = 0; pass < max_passes; ++pass) {
    double change = 0.0;
    for (std::size_t s = 0; s < nodes.size(); ++s) {
      if (!has_dep[s]) continue;
      const CellStencil<D>& st = deps[s];
      double c = 0.0;
      for (std::size_t k = 0; k < CellStencil<D>::kCorners; ++k)
        if (st.weights[k] != 0.0) c += st.weights[k] * corner_share(st.nodes[k]);
      change = std::max(change, c - share[nodes[s]]);
      share[nodes[s]] = c;
    }
    if (change <= 1e-3 * limit) break;
  }
  std::size_t count = 0;
  for (std::size_t n : nodes)
    if (share[n] > limit) {
      values[n] = kInfinity;
      ++count;
    }
  return count;
}

}  // namespace detail

/// One update of node `node` against `field`; corners outside `active` block
/// the candidate. Keeps the current value when no admissible candidate
/// improves it.
template <std::size_t D, class Active>
RelaxResult relax_node(const NodeField<D>& field, const SolveContext<D>& ctx, std::size_t node, Active&& active,
                       WorkCounters* work = nullptr) {
  WorkCounters local;
  WorkCounters& w = work ? *work : local;
  ++w.relaxations;
  const NodeClass cls = ctx.node_class(node);
  if (cls == NodeClass::target) return {0.0, FeedbackField::kNone};
  if (cls != NodeClass::free) return {kInfinity, FeedbackField::kNone};
  const double current = field[node];
  const auto best = ctx.best_candidate(
      ctx.grid().coord_of(node),
      [&](std::size_t c) { return ctx.blocks(c) || !active(c) ? kBlocked : field[c]; }, {}, w);
  if (best.control_index < 0) return {current, FeedbackField::kNone};
  return {std::min(current, best.value), best.control_index};
}

template <std::size_t D>
RelaxResult relax_node(const NodeField<D>& field, const SolveContext<D>& ctx, std::size_t node) {
  return relax_node(field, ctx, node, [](std::size_t) { return true; });
}

/// Gauss-Seidel value iteration over `nodes` until the largest change of a
/// sweep is <= tol or the sweep limit is hit. A converged field is then
/// passed through the sentinel leak check. With method1 each worker owns a
/// contiguous batch of the (ordered) node list; updates inside a batch are
/// visible immediately, across batches they may be one sweep stale.
template <std::size_t D>
SweepStats solve(NodeField<D>& field, const SolveContext<D>& ctx, std::span<const std::size_t> nodes,
                 const SolverConfig& cfg, const ExecutionStrategy& exec = {}, const SolveOptions& opt = {}) {
  cfg.validate();
  SweepStats stats;
  if (nodes.empty()) return stats;

  std::vector<std::size_t> ordered;
  if (cfg.order == SweepOrder::by_value) {
    const std::vector<double>& key = opt.order_key ? *opt.order_key : field.values;
    ordered.assign(nodes.begin(), nodes.end());
    std::stable_sort(ordered.begin(), ordered.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
    nodes = ordered;
  }

  const int limit = cfg.sweep_limit(ctx.grid());
  const bool monotone = !cfg.warm_start;
  double* values = field.values.data();
  const auto batches = make_batches(nodes, exec.sweep_workers());

  auto relax = [&](std::size_t node, WorkCounters& work) {
    const double before = detail::load(values, node);
    const RelaxResult r = detail::relax(ctx, values, node, opt, monotone, work);
    detail::store(values, node, r.value);
    return std::abs(r.value - before);
  };
  auto after = [&](double change) {
    ++stats.sweeps;
    stats.last_change = change;
    if (change <= cfg.tol) {
      stats.converged = true;
      return false;
    }
    if (stats.sweeps >= limit) {
      stats.converged = false;
      return false;
    }
    return true;
  };
  stats.work = run_parallel_sweeps(std::span<const std::span<const std::size_t>>(batches), exec.sweep_workers(),
                                   relax, after);
  if (stats.converged) stats.pruned = detail::prune_sentinel_leaks(ctx, values, nodes, opt, cfg.tol, limit);
  return stats;
}

/// Discrete feedback: the argmin control of the scheme's candidate functional
/// at every node, reading all corners. kNone on target, obstacle and
/// sentinel-valued nodes and where every control is degenerate.
template <std::size_t D>
FeedbackField extract_feedback(const NodeField<D>& field, const SolveContext<D>& ctx, WorkCounters* work = nullptr) {
  FeedbackField fb;
  fb.control.assign(field.size(), FeedbackField::kNone);
  WorkCounters local;
  for (std::size_t n : ctx.grid().interior_nodes()) {
    if (ctx.node_class(n) != NodeClass::free || is_infinite(field[n])) continue;
    const auto best = ctx.best_candidate(
        ctx.grid().coord_of(n), [&](std::size_t c) { return ctx.blocks(c) ? kBlocked : field[c]; }, {}, local);
    fb.control[n] = best.control_index;
  }
  if (work) *work += local;
  return fb;
}

}  // namespace patchy
