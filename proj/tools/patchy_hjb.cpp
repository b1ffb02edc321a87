// Command-line driver: single, dd and patchy solves, error studies and
// exports. Exit codes: 0 ok, 2 configuration error, 3 IO error.

#include <CLI11.hpp>

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "patchy/experiment.hpp"

namespace {

std::vector<double> parse_point(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw patchy::ConfigError("--trace: '" + item + "' is not a number");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patchy and classical domain decomposition for minimum-time HJB equations"};
  std::string config_path;
  std::string problem, method, bc, addons, strategy, export_dir, trace, formats;
  int coarse = 0, fine = 0, patches = 0, controls = 0, workers = 0, dd_parts = 0, max_sweeps = 0;
  double tol = 0.0, reduction = 0.0;
  std::uint64_t seed = 0;
  bool quiet = false;

  app.add_option("--config", config_path, "JSON config; flags override its keys");
  app.add_option("--problem", problem, "eikonal2d fan2d zermelo2d lqr2d lunar2d eikonal2d-obstacles eikonal3d fan3d brockett3d");
  app.add_option("--coarse-nodes", coarse, "coarse nodes per axis (default 51)");
  app.add_option("--fine-nodes", fine, "fine nodes per axis (default 101)");
  app.add_option("--patches", patches, "number of patches R (default: preset)");
  app.add_option("--dd-parts", dd_parts, "subdomains of the dd reference (default: R)");
  app.add_option("--controls", controls, "control count (default: preset)");
  app.add_option("--tol", tol, "sweep tolerance (default 1e-6)");
  app.add_option("--max-sweeps", max_sweeps, "sweep limit (default 10 x nodes per axis)");
  app.add_option("--method", method, "single, dd, patchy or both (default patchy)");
  app.add_option("--bc", bc, "patch boundary condition: sc or dirichlet (default sc)");
  app.add_option("--addons", addons, "comma list of a1, a2, a3");
  app.add_option("--reduction-factor", reduction, "a3 cone factor r > 1 (default 4)");
  app.add_option("--workers", workers, "worker threads (default 1)");
  app.add_option("--strategy", strategy, "serial, m1 or m2 (default serial)");
  app.add_option("--export-dir", export_dir, "directory for fields, patch map and report.json");
  app.add_option("--export-formats", formats, "comma list of csv, vtk (default both)");
  app.add_option("--trace", trace, "trajectory start x1,...,xd");
  app.add_option("--seed", seed, "reserved; every algorithm is deterministic");
  app.add_flag("--quiet", quiet, "print only the JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    patchy::ExperimentConfig cfg = config_path.empty() ? patchy::ExperimentConfig{} : patchy::load_config(config_path);
    if (!problem.empty()) cfg.problem = problem;
    if (app.count("--coarse-nodes")) cfg.coarse_nodes = coarse;
    if (app.count("--fine-nodes")) cfg.fine_nodes = fine;
    if (app.count("--patches")) cfg.patches = patches;
    if (app.count("--dd-parts")) cfg.dd_parts = dd_parts;
    if (app.count("--controls")) cfg.controls = controls;
    if (app.count("--tol")) cfg.tol = tol;
    if (app.count("--max-sweeps")) cfg.max_sweeps = max_sweeps;
    if (!method.empty()) cfg.method = patchy::parse_method(method);
    if (!bc.empty()) cfg.bc = patchy::parse_boundary(bc);
    if (app.count("--addons")) cfg.addons = patchy::parse_addons(addons);
    if (app.count("--reduction-factor")) cfg.reduction_factor = reduction;
    if (app.count("--workers")) cfg.workers = workers;
    if (!strategy.empty()) cfg.strategy = patchy::parse_strategy(strategy);
    if (app.count("--export-dir")) cfg.export_dir = export_dir;
    if (app.count("--export-formats")) {
      cfg.export_formats.clear();
      std::istringstream in(formats);
      for (std::string f; std::getline(in, f, ',');) cfg.export_formats.push_back(f);
    }
    if (app.count("--trace")) cfg.trace = parse_point(trace);
    if (app.count("--seed")) cfg.seed = seed;

    const patchy::RunReport report = patchy::run_experiment(cfg, quiet ? nullptr : &std::cerr);
    if (quiet)
      std::cout << nlohmann::json(report).dump(2) << '\n';
    else
      patchy::print_summary(report, std::cout);
    return 0;
  } catch (const patchy::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const patchy::DomainError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const patchy::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
