#pragma once

// Error metrics between value fields and optimal trajectory extraction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "patchy/grid.hpp"
#include "patchy/sl_solver.hpp"

namespace patchy {

enum class ErrorAgainst { dd_reference, exact };

inline std::string to_string(ErrorAgainst a) { return a == ErrorAgainst::exact ? "exact" : "dd_reference"; }

/// E = U - V over interior nodes finite in both fields. E1 divides by the
/// compared count, E1_allnodes by all interior nodes.
struct ErrorReport {
  double E1 = 0.0;
  double E1_allnodes = 0.0;
  double Einf = 0.0;
  std::size_t compared_count = 0;
  std::size_t excluded_count = 0;
  ErrorAgainst against = ErrorAgainst::dd_reference;

  friend bool operator==(const ErrorReport&, const ErrorReport&) = default;
};

/// Metrics of an explicit difference vector; every entry is compared.
inline ErrorReport error_metrics(std::span<const double> diff) {
  ErrorReport r;
  double sum = 0.0;
  for (double e : diff) {
    sum += std::abs(e);
    r.Einf = std::max(r.Einf, std::abs(e));
  }
  r.compared_count = diff.size();
  r.E1 = diff.empty() ? 0.0 : sum / static_cast<double>(diff.size());
  r.E1_allnodes = r.E1;
  return r;
}

template <std::size_t D>
ErrorReport compare_fields(const NodeField<D>& u, const NodeField<D>& v, ErrorAgainst against) {
  if (!(u.grid == v.grid)) throw ConfigError("compared fields live on different grids");
  ErrorReport r;
  r.against = against;
  double sum = 0.0;
  u.grid.for_each_interior([&](const NodeIndex<D>& i) {
    const std::size_t n = u.grid.flat(i);
    if (is_infinite(u[n]) || is_infinite(v[n])) {
      ++r.excluded_count;
      return;
    }
    const double e = std::abs(u[n] - v[n]);
    sum += e;
    r.Einf = std::max(r.Einf, e);
    ++r.compared_count;
  });
  if (r.compared_count > 0) r.E1 = sum / static_cast<double>(r.compared_count);
  r.E1_allnodes = sum / static_cast<double>(u.grid.interior_count());
  return r;
}

/// Exact solution sampled at interior nodes; obstacle nodes hold the sentinel.
template <std::size_t D>
NodeField<D> exact_field(const SolveContext<D>& ctx) {
  const Problem<D>& p = ctx.problem();
  if (!p.exact) throw ConfigError("problem '" + p.name + "' has no exact solution");
  NodeField<D> f(ctx.grid(), kInfinity);
  for (std::size_t n : ctx.grid().interior_nodes())
    if (!ctx.is_obstacle(n)) f[n] = p.exact(ctx.grid().coord_of(n));
  return f;
}

enum class TrajectoryEnd { reached_target, left_domain, step_limit, stalled };

inline std::string to_string(TrajectoryEnd e) {
  switch (e) {
    case TrajectoryEnd::reached_target: return "reached_target";
    case TrajectoryEnd::left_domain: return "left_domain";
    case TrajectoryEnd::step_limit: return "step_limit";
    case TrajectoryEnd::stalled: return "stalled";
  }
  return "stalled";
}

template <std::size_t D>
struct Trajectory {
  std::vector<Point<D>> points;
  TrajectoryEnd end = TrajectoryEnd::stalled;

  std::size_t steps() const noexcept { return points.empty() ? 0 : points.size() - 1; }
};

/// Follows the discrete feedback of `value` from `start`, one step of length
/// k per iteration. The control at a point is the argmin of the same
/// candidate functional the scheme minimizes, evaluated off the grid.
template <std::size_t D>
Trajectory<D> trace_trajectory(const NodeField<D>& value, const SolveContext<D>& ctx, const Point<D>& start,
                               int max_steps = 0) {
  const Grid<D>& grid = ctx.grid();
  const Problem<D>& p = ctx.problem();
  if (!grid.in_domain(start)) throw DomainError("trajectory start lies outside the domain");
  if (p.is_obstacle(start)) throw DomainError("trajectory start lies inside an obstacle");
  if (max_steps <= 0) max_steps = 10 * grid.max_nodes();

  Trajectory<D> t;
  t.points.push_back(start);
  const double* values = value.values.data();
  WorkCounters unused;
  Point<D> x = start;
  for (int s = 0;; ++s) {
    if (p.is_target(x, ctx.step())) {
      t.end = TrajectoryEnd::reached_target;
      return t;
    }
    if (s == max_steps) {
      t.end = TrajectoryEnd::step_limit;
      return t;
    }
    const auto best = ctx.best_candidate(x, detail::free_reader(ctx, values), {}, unused);
    if (best.control_index < 0) {
      t.end = TrajectoryEnd::stalled;
      return t;
    }
    x = best.foot;
    t.points.push_back(x);
    if (!grid.in_domain(x) || p.is_obstacle(x)) {
      t.end = TrajectoryEnd::left_domain;
      return t;
    }
  }
}

}  // namespace patchy
