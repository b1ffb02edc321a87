// Patchy solve of the Eikonal problem with obstacles: prints the patch map
// as characters, the error against a classical decomposition and one
// optimal trajectory.

#include <cstdio>
#include <string>

#include "patchy/decomp.hpp"
#include "patchy/metrics.hpp"
#include "patchy/patchy.hpp"

int main(int argc, char** argv) {
  using namespace patchy;
  const int fine = argc > 1 ? std::stoi(argv[1]) : 81;
  const auto problem = preset<2>("eikonal2d-obstacles");

  PatchyConfig cfg;
  cfg.R = 8;
  cfg.coarse_nodes = (fine + 1) / 2;
  cfg.fine_nodes = fine;
  const PatchyResult<2> res = run_patchy(problem, cfg);

  const Grid<2>& g = res.map.grid;
  const int step = std::max(1, fine / 40);
  for (int j = g.nodes(1) - 1; j >= 0; j -= step) {
    std::string row;
    for (int i = 0; i < g.nodes(0); i += step) {
      const std::int32_t c = res.map.color[g.flat({i, j})];
      if (c >= 0)
        row += static_cast<char>('a' + c % 26);
      else if (c == code::kTarget)
        row += '*';
      else if (c == code::kObstacle)
        row += '#';
      else
        row += '.';
    }
    std::printf("%s\n", row.c_str());
  }

  const SolveContext<2> ctx(problem, g);
  const auto dd = solve_dd(ctx, 4, cfg.solver());
  const ErrorReport e = compare_fields(res.field, dd.field, ErrorAgainst::dd_reference);
  std::printf("patches %d, relaxations patchy %llu vs dd %llu\n", cfg.R,
              static_cast<unsigned long long>(res.stats.work.relaxations),
              static_cast<unsigned long long>(dd.stats.work.relaxations));
  std::printf("E1 %.5f  Einf %.4f  (%zu nodes compared)\n", e.E1, e.Einf, e.compared_count);

  const Trajectory<2> t = trace_trajectory(res.field, ctx, {-1.8, 1.8});
  std::printf("trajectory from (-1.8, 1.8): %s after %zu steps, ends at (%.3f, %.3f)\n", to_string(t.end).c_str(),
              t.steps(), t.points.back()[0], t.points.back()[1]);
  for (const auto& w : res.warnings) std::printf("warning: %s\n", w.c_str());
  return 0;
}
