#pragma once

// Catalog of control problems: dynamics, discrete control sets, targets,
// obstacles, running costs and known exact value functions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "patchy/errors.hpp"
#include "patchy/grid.hpp"

namespace patchy {

/// Controls live in R^m with m <= 3; unused trailing entries are zero.
using Control = std::array<double, 3>;

enum class ControlGeometry { unit_circle, unit_sphere_geodesic, box_lattice, explicit_list };

struct ControlSet {
  std::vector<Control> controls;
  int dim = 2;
  ControlGeometry geometry = ControlGeometry::explicit_list;

  std::size_t size() const noexcept { return controls.size(); }
  const Control& operator[](std::size_t i) const noexcept { return controls[i]; }
  bool is_unit() const noexcept {
    return geometry == ControlGeometry::unit_circle ||
           geometry == ControlGeometry::unit_sphere_geodesic;
  }
  friend bool operator==(const ControlSet&, const ControlSet&) = default;
};

/// a_m = (cos 2*pi*m/N, sin 2*pi*m/N), m = 0..N-1.
inline ControlSet discretize_circle(int count) {
  if (count < 2) throw ConfigError("a circle discretization needs at least 2 controls");
  ControlSet set;
  set.dim = 2;
  set.geometry = ControlGeometry::unit_circle;
  set.controls.reserve(static_cast<std::size_t>(count));
  for (int m = 0; m < count; ++m) {
    const double theta = 2.0 * std::numbers::pi * m / count;
    set.controls.push_back({std::cos(theta), std::sin(theta), 0.0});
  }
  return set;
}

/// Vertices of an icosahedron refined `level` times by edge bisection, each
/// new vertex projected onto the unit sphere (12, 42, 162, 642 vertices).
/// Order: the 12 icosahedron vertices, then midpoints in creation order.
inline ControlSet discretize_sphere_geodesic(int level) {
  if (level < 0 || level > 3) throw ConfigError("geodesic level must be in 0..3");
  using V = std::array<double, 3>;
  auto normalize = [](V v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return V{v[0] / n, v[1] / n, v[2] / n};
  };
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<V> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
                          {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
                          {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v = normalize(v);
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const V& p = verts[static_cast<std::size_t>(a)];
      const V& q = verts[static_cast<std::size_t>(b)];
      verts.push_back(normalize({p[0] + q[0], p[1] + q[1], p[2] + q[2]}));
      const int id = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> refined;
    refined.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]);
      const int bc = mid(f[1], f[2]);
      const int ca = mid(f[2], f[0]);
      refined.push_back({f[0], ab, ca});
      refined.push_back({f[1], bc, ab});
      refined.push_back({f[2], ca, bc});
      refined.push_back({ab, bc, ca});
    }
    faces = std::move(refined);
  }
  ControlSet set;
  set.dim = 3;
  set.geometry = ControlGeometry::unit_sphere_geodesic;
  set.controls.assign(verts.begin(), verts.end());
  return set;
}

/// Vertex count -> geodesic level, or -1.
inline int geodesic_level_for(int count) {
  for (int l = 0; l <= 3; ++l)
    if (count == 10 * (1 << (2 * l)) + 2) return l;
  return -1;
}

/// Uniformly spaced scalars in [lo, hi].
inline ControlSet discretize_interval(double lo, double hi, int count) {
  if (count < 2) throw ConfigError("an interval discretization needs at least 2 controls");
  ControlSet set;
  set.dim = 1;
  set.geometry = ControlGeometry::explicit_list;
  for (int m = 0; m < count; ++m) set.controls.push_back({lo + (hi - lo) * m / (count - 1), 0.0, 0.0});
  return set;
}

enum class TargetKind { ball, slab, explicit_set };

template <std::size_t D>
struct TargetSpec {
  TargetKind kind = TargetKind::ball;
  Point<D> center{};
  double radius = 0.0;
  // slab: |x[axis] - offset| <= max(half_width, k/2); zero half-width means
  // "the grid nodes on the hyperplane".
  std::size_t axis = 0;
  double offset = 0.0;
  double half_width = 0.0;
  std::function<bool(const Point<D>&)> predicate;

  bool contains(const Point<D>& x, double spacing) const {
    switch (kind) {
      case TargetKind::ball: {
        double s = 0.0;
        for (std::size_t a = 0; a < D; ++a) s += (x[a] - center[a]) * (x[a] - center[a]);
        return std::sqrt(s) <= radius + 1e-12 * (1.0 + radius);
      }
      case TargetKind::slab:
        return std::abs(x[axis] - offset) <= std::max(half_width, 0.5 * spacing * (1.0 + 1e-9));
      case TargetKind::explicit_set:
        return predicate && predicate(x);
    }
    return false;
  }
};

template <std::size_t D>
struct Problem {
  using Dynamics = std::function<Point<D>(const Point<D>&, const Control&)>;
  using Cost = std::function<double(const Point<D>&, const Control&)>;

  std::string name;
  Point<D> lo{};
  Point<D> hi{};
  ControlSet controls;
  Dynamics dynamics;
  Cost running_cost;  // empty: minimum time, cost identically 1
  TargetSpec<D> target;
  std::function<bool(const Point<D>&)> obstacle;
  std::function<double(const Point<D>&)> exact;
  int default_patches = 8;

  bool minimum_time() const noexcept { return !running_cost; }
  double cost(const Point<D>& x, const Control& a) const { return running_cost ? running_cost(x, a) : 1.0; }
  bool is_obstacle(const Point<D>& x) const { return obstacle && obstacle(x); }
  bool is_target(const Point<D>& x, double spacing) const {
    return !is_obstacle(x) && target.contains(x, spacing);
  }
  Grid<D> grid(int nodes_per_axis) const {
    std::array<int, D> m{};
    m.fill(nodes_per_axis);
    return Grid<D>(lo, hi, m);
  }
};

struct PresetOptions {
  int controls = 0;              // 0: preset default (32 on a circle, 162 on the sphere, 101 for LQR)
  double lunar_epsilon = 0.25;   // target radius of the Lunar Landing problem
};

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"eikonal2d", "fan2d",      "zermelo2d",
                                                 "eikonal3d", "fan3d",      "brockett3d",
                                                 "lqr2d",     "lunar2d",    "eikonal2d-obstacles"};
  return names;
}

/// Dimension of a preset; throws ConfigError for unknown names.
inline int preset_dimension(const std::string& name) {
  if (name == "eikonal3d" || name == "fan3d" || name == "brockett3d") return 3;
  if (name == "eikonal2d" || name == "fan2d" || name == "zermelo2d" || name == "lqr2d" ||
      name == "lunar2d" || name == "eikonal2d-obstacles")
    return 2;
  throw ConfigError("unknown problem '" + name + "'");
}

namespace detail {

template <std::size_t D>
double norm(const Point<D>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline ControlSet sphere_controls(int count) {
  const int level = geodesic_level_for(count == 0 ? 162 : count);
  if (level < 0) throw ConfigError("sphere controls must be one of 12, 42, 162, 642");
  return discretize_sphere_geodesic(level);
}

template <std::size_t D>
TargetSpec<D> ball(double radius) {
  TargetSpec<D> t;
  t.kind = TargetKind::ball;
  t.radius = radius;
  return t;
}

template <std::size_t D>
TargetSpec<D> plane_x1() {
  TargetSpec<D> t;
  t.kind = TargetKind::slab;
  t.axis = 0;
  return t;
}

inline Problem<2> preset2d(const std::string& name, const PresetOptions& opt) {
  Problem<2> p;
  p.name = name;
  p.lo = {-2.0, -2.0};
  p.hi = {2.0, 2.0};
  const int nc = opt.controls == 0 ? 32 : opt.controls;
  if (name == "eikonal2d" || name == "eikonal2d-obstacles") {
    p.controls = discretize_circle(nc);
    p.dynamics = [](const Point<2>&, const Control& a) { return Point<2>{a[0], a[1]}; };
    p.target = ball<2>(0.5);
    p.exact = [](const Point<2>& x) { return std::max(0.0, norm(x) - 0.5); };
    if (name == "eikonal2d-obstacles") {
      p.exact = nullptr;
      p.obstacle = [](const Point<2>& x) {
        const double dx = x[0] + 1.0;
        const double dy = x[1] - 1.0;
        const bool circle = dx * dx + dy * dy <= 0.3 * 0.3;
        const bool rect = x[0] >= 0.6 && x[0] <= 1.4 && x[1] >= -1.0 && x[1] <= -0.6;
        return circle || rect;
      };
    }
  } else if (name == "fan2d") {
    p.controls = discretize_circle(nc);
    p.dynamics = [](const Point<2>& x, const Control& a) {
      const double s = std::abs(x[0] + x[1] + 0.1);
      return Point<2>{s * a[0], s * a[1]};
    };
    p.target = plane_x1<2>();
  } else if (name == "zermelo2d") {
    p.controls = discretize_circle(nc);
    p.dynamics = [](const Point<2>&, const Control& a) {
      return Point<2>{2.1 * a[0] + 2.0, 2.1 * a[1]};
    };
    p.target = ball<2>(0.5);
  } else if (name == "lqr2d") {
    p.lo = {-1.0, -1.0};
    p.hi = {1.0, 1.0};
    p.controls = discretize_interval(-3.0, 3.0, opt.controls == 0 ? 101 : opt.controls);
    p.dynamics = [](const Point<2>& x, const Control& a) { return Point<2>{x[1], a[0]}; };
    p.running_cost = [](const Point<2>& x, const Control& a) {
      return 0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.5 * a[0] * a[0];
    };
    p.target = ball<2>(0.05);
    p.exact = [](const Point<2>& x) {
      const double s3 = std::sqrt(3.0);
      return 0.5 * (s3 * x[0] * x[0] + 2.0 * x[0] * x[1] + s3 * x[1] * x[1]);
    };
    p.default_patches = 4;
  } else if (name == "lunar2d") {
    p.controls.dim = 1;
    p.controls.geometry = ControlGeometry::explicit_list;
    p.controls.controls = {{-1.0, 0.0, 0.0}, {1.0, 0.0, 0.0}};
    p.dynamics = [](const Point<2>& x, const Control& a) { return Point<2>{x[1], a[0]}; };
    p.target = ball<2>(opt.lunar_epsilon);
    p.default_patches = 4;
  } else {
    throw ConfigError("unknown two-dimensional problem '" + name + "'");
  }
  return p;
}

inline Problem<3> preset3d(const std::string& name, const PresetOptions& opt) {
  Problem<3> p;
  p.name = name;
  p.lo = {-2.0, -2.0, -2.0};
  p.hi = {2.0, 2.0, 2.0};
  if (name == "eikonal3d") {
    p.controls = sphere_controls(opt.controls);
    p.dynamics = [](const Point<3>&, const Control& a) { return Point<3>{a[0], a[1], a[2]}; };
    p.target = ball<3>(0.5);
    p.exact = [](const Point<3>& x) { return std::max(0.0, norm(x) - 0.5); };
  } else if (name == "fan3d") {
    p.controls = sphere_controls(opt.controls);
    p.dynamics = [](const Point<3>& x, const Control& a) {
      const double s = std::abs(x[0] + x[1] + x[2] + 0.1);
      return Point<3>{s * a[0], s * a[1], s * a[2]};
    };
    p.target = plane_x1<3>();
  } else if (name == "brockett3d") {
    // {-5,0,5}^2, second component fastest.
    p.controls.dim = 2;
    p.controls.geometry = ControlGeometry::box_lattice;
    for (double a1 : {-5.0, 0.0, 5.0})
      for (double a2 : {-5.0, 0.0, 5.0}) p.controls.controls.push_back({a1, a2, 0.0});
    p.dynamics = [](const Point<3>& x, const Control& a) {
      return Point<3>{a[0], a[1], x[0] * a[1] - x[1] * a[0]};
    };
    p.target = ball<3>(0.25);
  } else {
    throw ConfigError("unknown three-dimensional problem '" + name + "'");
  }
  return p;
}

}  // namespace detail

/// Preset problem by name. The dimension must match the preset.
template <std::size_t D>
Problem<D> preset(const std::string& name, const PresetOptions& opt = {}) {
  if (preset_dimension(name) != static_cast<int>(D))
    throw ConfigError("problem '" + name + "' is not " + std::to_string(D) + "-dimensional");
  if constexpr (D == 2)
    return detail::preset2d(name, opt);
  else
    return detail::preset3d(name, opt);
}

/// Splits the interior target nodes into R non-empty parts.
///   ball: equal angular sectors about the center (3D: longitude about x3),
///         sector m covers [2*pi*m/R, 2*pi*(m+1)/R) measured by atan2 in [0, 2*pi);
///   other: equal-width slabs along the first axis the target extends along.
/// Parts list nodes in lexicographic order.
template <std::size_t D>
std::vector<std::vector<std::size_t>> partition_target(const Problem<D>& problem, const Grid<D>& grid, int parts) {
  if (parts < 1) throw ConfigError("the number of patches must be at least 1");
  const double k = grid.min_spacing();
  std::vector<std::size_t> nodes;
  for (std::size_t n : grid.interior_nodes())
    if (problem.is_target(grid.coord_of(n), k)) nodes.push_back(n);

  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(parts));
  const auto R = static_cast<std::size_t>(parts);
  if (problem.target.kind == TargetKind::ball) {
    const Point<D>& c = problem.target.center;
    const double sector = 2.0 * std::numbers::pi / parts;
    for (std::size_t n : nodes) {
      const Point<D> x = grid.coord_of(n);
      double angle = std::atan2(x[1] - c[1], x[0] - c[0]);
      if (angle < 0.0) angle += 2.0 * std::numbers::pi;
      auto part = static_cast<std::size_t>(std::floor(angle / sector));
      out[std::min(part, R - 1)].push_back(n);
    }
  } else {
    std::size_t axis = 0;
    if (problem.target.kind == TargetKind::slab) axis = problem.target.axis == 0 ? 1 : 0;
    double lo = 0.0;
    double hi = 0.0;
    bool first = true;
    for (std::size_t n : nodes) {
      const double v = grid.coord_of(n)[axis];
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
    const double width = (hi - lo) / parts;
    for (std::size_t n : nodes) {
      const double v = grid.coord_of(n)[axis];
      std::size_t part = width > 0.0 ? static_cast<std::size_t>(std::floor((v - lo) / width)) : 0;
      out[std::min(part, R - 1)].push_back(n);
    }
  }
  for (const auto& part : out)
    if (part.empty()) throw ConfigError("target too small for R=" + std::to_string(parts));
  return out;
}

}  // namespace patchy
