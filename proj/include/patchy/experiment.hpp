#pragma once

// Experiment configuration, run report and the single/dd/patchy pipelines
// driven by the command-line tool.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "patchy/decomp.hpp"
#include "patchy/io.hpp"
#include "patchy/metrics.hpp"
#include "patchy/patchy.hpp"
#include "patchy/problems.hpp"

namespace patchy {

enum class Method { single, dd, patchy, both };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::single: return "single";
    case Method::dd: return "dd";
    case Method::patchy: return "patchy";
    case Method::both: return "both";
  }
  return "patchy";
}

inline Method parse_method(const std::string& s) {
  if (s == "single") return Method::single;
  if (s == "dd") return Method::dd;
  if (s == "patchy") return Method::patchy;
  if (s == "both") return Method::both;
  throw ConfigError("unknown method '" + s + "' (expected single, dd, patchy or both)");
}

inline BoundaryMode parse_boundary(const std::string& s) {
  if (s == "sc" || s == "state_constraint") return BoundaryMode::state_constraint;
  if (s == "dirichlet") return BoundaryMode::dirichlet;
  throw ConfigError("unknown boundary condition '" + s + "' (expected sc or dirichlet)");
}

/// Comma separated subset of a1 (warm start), a2 (causality), a3 (control
/// reduction); empty or "none" selects nothing.
inline std::vector<std::string> parse_addons(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty() || s == "none") return out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item != "a1" && item != "a2" && item != "a3")
      throw ConfigError("unknown add-on '" + item + "' (expected a1, a2 or a3)");
    if (std::find(out.begin(), out.end(), item) == out.end()) out.push_back(item);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Every field has a default; JSON keys carry the same names.
struct ExperimentConfig {
  std::string problem = "eikonal2d";
  int coarse_nodes = 51;
  int fine_nodes = 101;
  int patches = 0;   // 0: preset default
  int dd_parts = 0;  // 0: same as patches when that splits into boxes, else 4
  int controls = 0;  // 0: preset default
  double tol = 1e-6;
  int max_sweeps = 0;
  Method method = Method::patchy;
  BoundaryMode bc = BoundaryMode::state_constraint;
  std::vector<std::string> addons;
  double reduction_factor = 4.0;
  double color_tol = 1e-2;
  int workers = 1;
  StrategyKind strategy = StrategyKind::serial;
  std::string export_dir;
  std::vector<std::string> export_formats = {"csv", "vtk"};
  std::vector<double> trace;
  int trace_steps = 0;
  std::uint64_t seed = 0;  // reserved, every algorithm is deterministic

  void validate() const {
    const int dim = preset_dimension(problem);
    if (coarse_nodes < 2 || fine_nodes < 2) throw ConfigError("grids need at least 2 nodes per axis");
    if (patches < 0 || dd_parts < 0) throw ConfigError("patch counts must be non-negative");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (!(tol > 0.0)) throw ConfigError("tol must be positive");
    if (!trace.empty() && static_cast<int>(trace.size()) != dim)
      throw ConfigError("--trace needs " + std::to_string(dim) + " coordinates");
    for (const std::string& f : export_formats) parse_format(f);
    parse_addons([&] {
      std::string s;
      for (const auto& a : addons) s += (s.empty() ? "" : ",") + a;
      return s;
    }());
  }
  bool has(const std::string& addon) const {
    return std::find(addons.begin(), addons.end(), addon) != addons.end();
  }
};

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known = {
      "problem", "coarse_nodes", "fine_nodes", "patches", "dd_parts", "controls", "tol", "max_sweeps",
      "method", "bc", "addons", "reduction_factor", "color_tol", "workers", "strategy", "export_dir",
      "export_formats", "trace", "trace_steps", "seed"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
  try {
    c.problem = j.value("problem", c.problem);
    c.coarse_nodes = j.value("coarse_nodes", c.coarse_nodes);
    c.fine_nodes = j.value("fine_nodes", c.fine_nodes);
    c.patches = j.value("patches", c.patches);
    c.dd_parts = j.value("dd_parts", c.dd_parts);
    c.controls = j.value("controls", c.controls);
    c.tol = j.value("tol", c.tol);
    c.max_sweeps = j.value("max_sweeps", c.max_sweeps);
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("bc")) c.bc = parse_boundary(j.at("bc").get<std::string>());
    if (j.contains("addons")) {
      const auto& a = j.at("addons");
      std::string s;
      if (a.is_string()) {
        s = a.get<std::string>();
      } else {
        for (const auto& item : a) s += (s.empty() ? "" : ",") + item.get<std::string>();
      }
      c.addons = parse_addons(s);
    }
    c.reduction_factor = j.value("reduction_factor", c.reduction_factor);
    c.color_tol = j.value("color_tol", c.color_tol);
    c.workers = j.value("workers", c.workers);
    if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
    c.export_dir = j.value("export_dir", c.export_dir);
    c.export_formats = j.value("export_formats", c.export_formats);
    c.trace = j.value("trace", c.trace);
    c.trace_steps = j.value("trace_steps", c.trace_steps);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return j.get<ExperimentConfig>();
}

struct TrajectorySummary {
  std::string end;
  std::size_t steps = 0;
  std::vector<double> last;

  friend bool operator==(const TrajectorySummary&, const TrajectorySummary&) = default;
};

struct RunReport {
  std::string problem;
  int dims = 2;
  int coarse_nodes = 0;
  int fine_nodes = 0;
  int R = 0;
  int Nc = 0;
  std::string bc;
  std::vector<std::string> addons;
  double tol = 0.0;
  int workers = 1;
  std::string strategy;
  std::string method;
  std::map<std::string, double> phases;  // wall ms
  WorkCounters counters;                 // the pipeline under study (patchy when run)
  std::optional<WorkCounters> dd_counters;
  std::optional<ErrorReport> vs_dd;
  std::optional<ErrorReport> vs_exact;
  std::optional<TrajectorySummary> trajectory;
  std::vector<std::string> warnings;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

inline void to_json(nlohmann::json& j, const WorkCounters& w) {
  j = {{"relaxations", w.relaxations}, {"candidate_evals", w.candidate_evals}};
}
inline void from_json(const nlohmann::json& j, WorkCounters& w) {
  w.relaxations = j.at("relaxations").get<std::uint64_t>();
  w.candidate_evals = j.at("candidate_evals").get<std::uint64_t>();
}

inline void to_json(nlohmann::json& j, const ErrorReport& e) {
  j = {{"E1", e.E1},
       {"E1_compared", e.E1},
       {"E1_allnodes", e.E1_allnodes},
       {"Einf", e.Einf},
       {"compared", e.compared_count},
       {"excluded", e.excluded_count},
       {"against", to_string(e.against)}};
}
inline void from_json(const nlohmann::json& j, ErrorReport& e) {
  e.E1 = j.at("E1").get<double>();
  e.E1_allnodes = j.at("E1_allnodes").get<double>();
  e.Einf = j.at("Einf").get<double>();
  e.compared_count = j.at("compared").get<std::size_t>();
  e.excluded_count = j.at("excluded").get<std::size_t>();
  e.against = j.at("against").get<std::string>() == "exact" ? ErrorAgainst::exact : ErrorAgainst::dd_reference;
}

inline void to_json(nlohmann::json& j, const TrajectorySummary& t) {
  j = {{"end", t.end}, {"steps", t.steps}, {"last", t.last}};
}
inline void from_json(const nlohmann::json& j, TrajectorySummary& t) {
  t.end = j.at("end").get<std::string>();
  t.steps = j.at("steps").get<std::size_t>();
  t.last = j.at("last").get<std::vector<double>>();
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"problem", r.problem},   {"dims", r.dims},         {"coarse_nodes", r.coarse_nodes},
       {"fine_nodes", r.fine_nodes}, {"R", r.R},           {"Nc", r.Nc},
       {"bc", r.bc},             {"addons", r.addons},     {"tol", r.tol},
       {"workers", r.workers},   {"strategy", r.strategy}, {"method", r.method},
       {"phases", r.phases},     {"counters", r.counters}, {"warnings", r.warnings}};
  nlohmann::json errors = nlohmann::json::object();
  if (r.vs_dd) errors["vs_dd"] = *r.vs_dd;
  if (r.vs_exact) errors["vs_exact"] = *r.vs_exact;
  j["errors"] = errors;
  if (r.dd_counters) j["dd_counters"] = *r.dd_counters;
  if (r.trajectory) j["trajectory"] = *r.trajectory;
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  r.problem = j.at("problem").get<std::string>();
  r.dims = j.at("dims").get<int>();
  r.coarse_nodes = j.at("coarse_nodes").get<int>();
  r.fine_nodes = j.at("fine_nodes").get<int>();
  r.R = j.at("R").get<int>();
  r.Nc = j.at("Nc").get<int>();
  r.bc = j.at("bc").get<std::string>();
  r.addons = j.at("addons").get<std::vector<std::string>>();
  r.tol = j.at("tol").get<double>();
  r.workers = j.at("workers").get<int>();
  r.strategy = j.at("strategy").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.phases = j.at("phases").get<std::map<std::string, double>>();
  r.counters = j.at("counters").get<WorkCounters>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  const auto& errors = j.at("errors");
  r.vs_dd = errors.contains("vs_dd") ? std::optional(errors.at("vs_dd").get<ErrorReport>()) : std::nullopt;
  r.vs_exact = errors.contains("vs_exact") ? std::optional(errors.at("vs_exact").get<ErrorReport>()) : std::nullopt;
  r.dd_counters = j.contains("dd_counters") ? std::optional(j.at("dd_counters").get<WorkCounters>()) : std::nullopt;
  r.trajectory =
      j.contains("trajectory") ? std::optional(j.at("trajectory").get<TrajectorySummary>()) : std::nullopt;
}

namespace detail {

inline bool box_splittable(int parts) { return parts == 1 || parts == 2 || parts == 4 || parts == 8 || parts == 16; }

template <std::size_t D>
void export_value(const ExperimentConfig& cfg, const NodeField<D>& f, const std::string& stem) {
  for (const std::string& fmt : cfg.export_formats)
    export_field(f, std::filesystem::path(cfg.export_dir) / (stem + "." + fmt), parse_format(fmt), stem);
}

template <std::size_t D>
RunReport run_experiment_dim(const ExperimentConfig& cfg, std::ostream* log) {
  PresetOptions popt;
  popt.controls = cfg.controls;
  const Problem<D> problem = preset<D>(cfg.problem, popt);
  const int R = cfg.patches > 0 ? cfg.patches : problem.default_patches;
  const ExecutionStrategy exec{cfg.strategy, cfg.workers};

  RunReport rep;
  rep.problem = cfg.problem;
  rep.dims = static_cast<int>(D);
  rep.coarse_nodes = cfg.coarse_nodes;
  rep.fine_nodes = cfg.fine_nodes;
  rep.R = R;
  rep.Nc = static_cast<int>(problem.controls.size());
  rep.bc = to_string(cfg.bc);
  rep.addons = cfg.addons;
  rep.tol = cfg.tol;
  rep.workers = cfg.workers;
  rep.strategy = to_string(cfg.strategy);
  rep.method = to_string(cfg.method);

  if (!cfg.export_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.export_dir, ec);
    if (ec) throw IoError("cannot create export directory '" + cfg.export_dir + "': " + ec.message());
  }

  const Grid<D> fg = problem.grid(cfg.fine_nodes);
  const SolveContext<D> fine(problem, fg);
  SolverConfig scfg;
  scfg.tol = cfg.tol;
  scfg.max_sweeps = cfg.max_sweeps;
  scfg.bc = cfg.bc;

  std::optional<NodeField<D>> main_field;
  std::optional<NodeField<D>> dd_field;
  RunStats timing;

  if (cfg.method == Method::single) {
    PhaseTimer timer(timing, "single");
    NodeField<D> f = fine.initial_field();
    const auto nodes = fg.interior_nodes();
    const SweepStats st = solve(f, fine, nodes, scfg, exec);
    rep.counters = st.work;
    if (!st.converged) rep.warnings.push_back("single solve hit the sweep limit");
    main_field = std::move(f);
  }

  if (cfg.method == Method::patchy || cfg.method == Method::both) {
    PatchyConfig pcfg;
    pcfg.R = R;
    pcfg.coarse_nodes = cfg.coarse_nodes;
    pcfg.fine_nodes = cfg.fine_nodes;
    pcfg.bc = cfg.bc;
    pcfg.tol = cfg.tol;
    pcfg.max_sweeps = cfg.max_sweeps;
    pcfg.color_tol = cfg.color_tol;
    pcfg.addons.warm_start = cfg.has("a1");
    pcfg.addons.causality = cfg.has("a2");
    if (cfg.has("a3")) pcfg.addons.reduction_factor = cfg.reduction_factor;
    PatchyResult<D> res = run_patchy(problem, pcfg, exec);
    rep.counters = res.stats.work;
    for (const auto& [phase, ms] : res.stats.wall_ms) timing.wall_ms[phase] += ms;
    rep.warnings.insert(rep.warnings.end(), res.warnings.begin(), res.warnings.end());
    if (!cfg.export_dir.empty()) {
      export_value(cfg, res.field, "patchy_value");
      export_value(cfg, res.lifted, "lifted_value");
      for (const std::string& fmt : cfg.export_formats)
        export_patch_map(res.map, std::filesystem::path(cfg.export_dir) / ("patch_map." + fmt), parse_format(fmt));
    }
    if (log) {
      const PatchSizes s = res.map.sizes();
      *log << "patches: " << res.map.R << " sizes min/mean/max " << s.min << '/' << s.mean << '/' << s.max
           << ", relaxed " << res.map.relaxed << ", repaired " << res.map.repaired << ", uncovered "
           << res.map.uncovered.size() << '\n';
    }
    main_field = std::move(res.field);
  }

  if (cfg.method == Method::dd || cfg.method == Method::both) {
    int parts = cfg.dd_parts > 0 ? cfg.dd_parts : R;
    if (cfg.dd_parts == 0 && !box_splittable(parts)) {
      rep.warnings.push_back("dd: R=" + std::to_string(parts) + " has no box split, using 4 subdomains");
      parts = 4;
    }
    PhaseTimer timer(timing, "dd");
    DdResult<D> dd = solve_dd(fine, parts, scfg, exec);
    if (!dd.stats.converged) rep.warnings.push_back("dd solve hit the iteration limit");
    if (cfg.method == Method::dd) {
      rep.counters = dd.stats.work;
      main_field = dd.field;
    } else {
      rep.dd_counters = dd.stats.work;
    }
    dd_field = std::move(dd.field);
  }

  if (cfg.method == Method::both) rep.vs_dd = compare_fields(*main_field, *dd_field, ErrorAgainst::dd_reference);
  if (problem.exact) rep.vs_exact = compare_fields(*main_field, exact_field(fine), ErrorAgainst::exact);
  if (!cfg.export_dir.empty()) {
    if (cfg.method == Method::single) export_value(cfg, *main_field, "single_value");
    if (dd_field) export_value(cfg, *dd_field, "dd_value");
  }

  if (!cfg.trace.empty()) {
    Point<D> start{};
    for (std::size_t a = 0; a < D; ++a) start[a] = cfg.trace[a];
    const Trajectory<D> t = trace_trajectory(*main_field, fine, start, cfg.trace_steps);
    TrajectorySummary ts;
    ts.end = to_string(t.end);
    ts.steps = t.steps();
    ts.last.assign(t.points.back().begin(), t.points.back().end());
    rep.trajectory = ts;
    if (!cfg.export_dir.empty()) export_trajectory_csv(t, std::filesystem::path(cfg.export_dir) / "trajectory.csv");
  }

  rep.phases = timing.wall_ms;
  if (!cfg.export_dir.empty()) {
    const auto path = std::filesystem::path(cfg.export_dir) / "report.json";
    std::ofstream out(path);
    out << nlohmann::json(rep).dump(2) << '\n';
    if (!out) throw IoError("cannot write '" + path.string() + "'");
  }
  return rep;
}

}  // namespace detail

/// Runs the configured pipeline(s) and returns the report; progress and the
/// summary go to `log` when given.
inline RunReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  return preset_dimension(cfg.problem) == 2 ? detail::run_experiment_dim<2>(cfg, log)
                                            : detail::run_experiment_dim<3>(cfg, log);
}

inline void print_summary(const RunReport& r, std::ostream& out) {
  out << r.problem << " (" << r.dims << "D), method " << r.method << ", grid " << r.coarse_nodes << " -> "
      << r.fine_nodes << ", R=" << r.R << ", Nc=" << r.Nc << ", bc " << r.bc << ", strategy " << r.strategy
      << " x" << r.workers << '\n';
  out << "relaxations " << r.counters.relaxations << ", candidate evaluations " << r.counters.candidate_evals << '\n';
  if (r.dd_counters)
    out << "dd relaxations " << r.dd_counters->relaxations << ", candidate evaluations "
        << r.dd_counters->candidate_evals << '\n';
  auto err = [&](const char* name, const ErrorReport& e) {
    out << name << ": E1 " << e.E1 << " (all nodes " << e.E1_allnodes << "), Einf " << e.Einf << ", compared "
        << e.compared_count << ", excluded " << e.excluded_count << '\n';
  };
  if (r.vs_dd) err("error vs dd", *r.vs_dd);
  if (r.vs_exact) err("error vs exact", *r.vs_exact);
  for (const auto& [phase, ms] : r.phases) out << "phase " << phase << ": " << ms << " ms\n";
  if (r.trajectory) out << "trajectory: " << r.trajectory->end << " after " << r.trajectory->steps << " steps\n";
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
}

}  // namespace patchy
