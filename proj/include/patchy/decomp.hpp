#pragma once

// Classical overlapping domain decomposition on static rectangular boxes.
// Each outer iteration applies one Gauss-Seidel sweep of the scheme inside
// every subdomain on a private copy of the field, then couples overlapping
// nodes by taking the minimum over the owning subdomains.

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "patchy/grid.hpp"
#include "patchy/runtime.hpp"
#include "patchy/sl_solver.hpp"

namespace patchy {

template <std::size_t D>
struct IndexBox {
  NodeIndex<D> lo{};  // inclusive
  NodeIndex<D> hi{};  // inclusive

  std::size_t count() const noexcept {
    std::size_t n = 1;
    for (std::size_t a = 0; a < D; ++a) n *= static_cast<std::size_t>(hi[a] - lo[a] + 1);
    return n;
  }
  bool contains(const NodeIndex<D>& i) const noexcept {
    for (std::size_t a = 0; a < D; ++a)
      if (i[a] < lo[a] || i[a] > hi[a]) return false;
    return true;
  }
};

template <std::size_t D>
struct StaticDecomposition {
  std::array<int, D> splits{};
  int overlap_cells = 1;
  std::vector<IndexBox<D>> boxes;
  std::vector<std::vector<std::size_t>> nodes;  // interior nodes of each box, lexicographic
  std::vector<std::vector<std::size_t>> halo;   // box nodes plus one surrounding layer

  std::size_t size() const noexcept { return boxes.size(); }
};

/// Per-axis box counts for R subdomains: 2D 1x1, 2x1, 2x2, 4x2, 4x4;
/// 3D 1x1x1, 2x1x1, 2x2x1, 2x2x2, 4x2x2.
template <std::size_t D>
std::array<int, D> decomposition_splits(int parts) {
  static const std::map<int, std::array<int, 3>> table2 = {
      {1, {1, 1, 1}}, {2, {2, 1, 1}}, {4, {2, 2, 1}}, {8, {4, 2, 1}}, {16, {4, 4, 1}}};
  static const std::map<int, std::array<int, 3>> table3 = {
      {1, {1, 1, 1}}, {2, {2, 1, 1}}, {4, {2, 2, 1}}, {8, {2, 2, 2}}, {16, {4, 2, 2}}};
  const auto& table = D == 2 ? table2 : table3;
  const auto it = table.find(parts);
  if (it == table.end())
    throw ConfigError("R=" + std::to_string(parts) + " cannot be split into boxes (use 1, 2, 4, 8 or 16)");
  std::array<int, D> out{};
  for (std::size_t a = 0; a < D; ++a) out[a] = it->second[a];
  return out;
}

template <std::size_t D>
StaticDecomposition<D> make_static_decomposition(const Grid<D>& grid, int parts, int overlap_cells = 1) {
  if (overlap_cells < 1) throw ConfigError("subdomain overlap must be at least one cell");
  StaticDecomposition<D> dec;
  dec.splits = decomposition_splits<D>(parts);
  dec.overlap_cells = overlap_cells;

  std::array<std::vector<std::pair<int, int>>, D> ranges;
  for (std::size_t a = 0; a < D; ++a) {
    const int m = grid.nodes(a);
    const int p = dec.splits[a];
    if (p > m / 2) throw ConfigError("grid too small for the requested decomposition");
    for (int q = 0; q < p; ++q) {
      int s = q * m / p;
      int e = (q + 1) * m / p - 1;
      if (q > 0) s -= overlap_cells;
      if (q < p - 1) e += overlap_cells;
      ranges[a].push_back({std::max(0, s), std::min(m - 1, e)});
    }
  }

  std::array<int, D> q{};
  const int total = parts;
  for (int b = 0; b < total; ++b) {
    int rest = b;
    for (std::size_t a = 0; a < D; ++a) {
      q[a] = rest % dec.splits[a];
      rest /= dec.splits[a];
    }
    IndexBox<D> box;
    for (std::size_t a = 0; a < D; ++a) {
      box.lo[a] = ranges[a][static_cast<std::size_t>(q[a])].first;
      box.hi[a] = ranges[a][static_cast<std::size_t>(q[a])].second;
    }
    std::vector<std::size_t> own;
    std::vector<std::size_t> halo;
    own.reserve(box.count());
    IndexBox<D> grown = box;
    for (std::size_t a = 0; a < D; ++a) {
      grown.lo[a] -= 1;
      grown.hi[a] += 1;
    }
    grid.for_each_interior([&](const NodeIndex<D>& i) {
      if (box.contains(i)) own.push_back(grid.flat(i));
    });
    // ghost nodes included: the halo may reach them
    NodeIndex<D> i{};
    auto visit = [&](auto&& self, std::size_t axis) -> void {
      if (axis == D) {
        halo.push_back(grid.flat(i));
        return;
      }
      const std::size_t a = D - 1 - axis;
      for (i[a] = grown.lo[a]; i[a] <= grown.hi[a]; ++i[a]) self(self, axis + 1);
    };
    visit(visit, 0);
    dec.boxes.push_back(box);
    dec.nodes.push_back(std::move(own));
    dec.halo.push_back(std::move(halo));
  }
  return dec;
}

template <std::size_t D>
struct DdResult {
  NodeField<D> field;
  SweepStats stats;  // stats.sweeps counts outer iterations
};

/// Domain decomposition fixed point U_DD. Subdomains of one outer iteration
/// may run on different workers; the coupling runs after all of them finish.
template <std::size_t D>
DdResult<D> solve_dd(const SolveContext<D>& ctx, const StaticDecomposition<D>& dec, const SolverConfig& cfg,
                     const ExecutionStrategy& exec = {}) {
  cfg.validate();
  const Grid<D>& grid = ctx.grid();
  DdResult<D> out{ctx.initial_field(), {}};
  std::vector<double>& U = out.field.values;
  const std::size_t R = dec.size();
  std::vector<std::vector<double>> local(R, std::vector<double>(U.size(), kInfinity));
  std::vector<WorkCounters> work(R);
  std::vector<double> next(U.size(), kInfinity);
  const std::vector<std::size_t> interior = grid.interior_nodes();
  const int limit = cfg.sweep_limit(grid);
  const SolveOptions opt{};

  out.stats.converged = false;
  while (out.stats.sweeps < limit) {
    run_patch_pool(R, exec.task_workers(), [&](std::size_t j) {
      std::vector<double>& mine = local[j];
      for (std::size_t n : dec.halo[j]) mine[n] = U[n];
      double* values = mine.data();
      for (std::size_t n : dec.nodes[j]) values[n] = detail::relax(ctx, values, n, opt, true, work[j]).value;
    });
    for (std::size_t n : interior) next[n] = kInfinity;
    for (std::size_t j = 0; j < R; ++j)
      for (std::size_t n : dec.nodes[j]) next[n] = std::min(next[n], local[j][n]);
    double change = 0.0;
    for (std::size_t n : interior) {
      change = std::max(change, std::abs(next[n] - U[n]));
      U[n] = next[n];
    }
    ++out.stats.sweeps;
    out.stats.last_change = change;
    if (change <= cfg.tol) {
      out.stats.converged = true;
      break;
    }
  }
  for (const auto& w : work) out.stats.work += w;
  if (out.stats.converged) out.stats.pruned = detail::prune_sentinel_leaks(ctx, U.data(), interior, opt, cfg.tol, limit);
  return out;
}

template <std::size_t D>
DdResult<D> solve_dd(const SolveContext<D>& ctx, int parts, const SolverConfig& cfg, const ExecutionStrategy& exec = {},
                     int overlap_cells = 1) {
  return solve_dd(ctx, make_static_decomposition(ctx.grid(), parts, overlap_cells), cfg, exec);
}

}  // namespace patchy
