#pragma once

// Structured rectangular grids in 2 and 3 dimensions with a ghost layer,
// node fields and multilinear interpolation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "patchy/errors.hpp"

namespace patchy {

/// Finite stand-in for +infinity in node fields.
inline constexpr double kInfinity = 1e9;

/// True when a value should be read as "+infinity / no information".
constexpr bool is_infinite(double v) noexcept { return v >= 0.5 * kInfinity; }

template <std::size_t D>
using Point = std::array<double, D>;

template <std::size_t D>
using NodeIndex = std::array<int, D>;

template <std::size_t D>
struct CellLocation {
  NodeIndex<D> cell;   // lower corner, interior-relative (ghost nodes are -1 and M)
  Point<D> local;      // normalized coordinates in [0,1]^D
};

/// The 2^D corners of a cell together with their multilinear weights.
template <std::size_t D>
struct CellStencil {
  static constexpr std::size_t kCorners = std::size_t{1} << D;
  std::array<std::size_t, kCorners> nodes;
  std::array<double, kCorners> weights;
};

template <std::size_t D>
class Grid {
  static_assert(D == 2 || D == 3, "grids are two- or three-dimensional");

 public:
  static constexpr std::size_t kDim = D;

  Grid() = default;

  Grid(Point<D> lo, Point<D> hi, std::array<int, D> nodes, int ghost_width = 1)
      : lo_(lo), hi_(hi), nodes_(nodes), ghost_(ghost_width) {
    if (ghost_ < 1) throw ConfigError("ghost width must be at least 1");
    std::size_t stride = 1;
    for (std::size_t a = 0; a < D; ++a) {
      if (nodes_[a] < 2) throw ConfigError("a grid needs at least 2 nodes per axis");
      if (!(hi_[a] > lo_[a])) throw ConfigError("grid bounds must satisfy lo < hi");
      spacing_[a] = (hi_[a] - lo_[a]) / (nodes_[a] - 1);
      inv_spacing_[a] = 1.0 / spacing_[a];
      stride_[a] = stride;
      stride *= static_cast<std::size_t>(extent(a));
    }
    extended_count_ = stride;
  }

  /// Same bounds and node count on every axis.
  static Grid cube(double lo, double hi, int nodes, int ghost_width = 1) {
    Point<D> l{};
    Point<D> h{};
    std::array<int, D> m{};
    l.fill(lo);
    h.fill(hi);
    m.fill(nodes);
    return Grid(l, h, m, ghost_width);
  }

  const Point<D>& lo() const noexcept { return lo_; }
  const Point<D>& hi() const noexcept { return hi_; }
  int nodes(std::size_t axis) const noexcept { return nodes_[axis]; }
  const std::array<int, D>& nodes() const noexcept { return nodes_; }
  double spacing(std::size_t axis) const noexcept { return spacing_[axis]; }
  double min_spacing() const noexcept { return *std::min_element(spacing_.begin(), spacing_.end()); }
  int max_nodes() const noexcept { return *std::max_element(nodes_.begin(), nodes_.end()); }
  int ghost_width() const noexcept { return ghost_; }
  int extent(std::size_t axis) const noexcept { return nodes_[axis] + 2 * ghost_; }
  std::size_t stride(std::size_t axis) const noexcept { return stride_[axis]; }

  std::size_t interior_count() const noexcept {
    std::size_t n = 1;
    for (int m : nodes_) n *= static_cast<std::size_t>(m);
    return n;
  }
  std::size_t extended_count() const noexcept { return extended_count_; }

  std::size_t flat(const NodeIndex<D>& i) const noexcept {
    std::size_t f = 0;
    for (std::size_t a = 0; a < D; ++a) f += static_cast<std::size_t>(i[a] + ghost_) * stride_[a];
    return f;
  }

  NodeIndex<D> multi(std::size_t flat) const noexcept {
    NodeIndex<D> i{};
    for (std::size_t a = 0; a < D; ++a) {
      const auto e = static_cast<std::size_t>(extent(a));
      i[a] = static_cast<int>(flat % e) - ghost_;
      flat /= e;
    }
    return i;
  }

  Point<D> coord(const NodeIndex<D>& i) const noexcept {
    Point<D> x{};
    for (std::size_t a = 0; a < D; ++a) x[a] = lo_[a] + i[a] * spacing_[a];
    return x;
  }
  Point<D> coord_of(std::size_t flat) const noexcept { return coord(multi(flat)); }

  bool is_interior(const NodeIndex<D>& i) const noexcept {
    for (std::size_t a = 0; a < D; ++a)
      if (i[a] < 0 || i[a] >= nodes_[a]) return false;
    return true;
  }
  bool is_interior(std::size_t flat) const noexcept { return is_interior(multi(flat)); }

  /// Point inside the closed physical box.
  bool in_domain(const Point<D>& p, double slack = 1e-12) const noexcept {
    for (std::size_t a = 0; a < D; ++a)
      if (p[a] < lo_[a] - slack * spacing_[a] || p[a] > hi_[a] + slack * spacing_[a]) return false;
    return true;
  }

  /// Interior nodes in lexicographic order, first axis fastest.
  std::vector<std::size_t> interior_nodes() const {
    std::vector<std::size_t> out;
    out.reserve(interior_count());
    for_each_interior([&](const NodeIndex<D>& idx) { out.push_back(flat(idx)); });
    return out;
  }

  template <class Fn>
  void for_each_interior(Fn&& fn) const {
    NodeIndex<D> i{};
    visit_interior(fn, i);
  }

  /// Face neighbours (2D of them at most) that lie inside the interior.
  template <class Fn>
  void for_each_face_neighbor(std::size_t node, Fn&& fn) const {
    const NodeIndex<D> i = multi(node);
    for (std::size_t a = 0; a < D; ++a) {
      if (i[a] > 0) fn(node - stride_[a]);
      if (i[a] + 1 < nodes_[a]) fn(node + stride_[a]);
    }
  }

  /// Cell containing the point; a point on a cell face belongs to the cell
  /// whose lower corner lies on that face, except on the top boundary of the
  /// ghost-extended box.
  CellLocation<D> locate_cell(const Point<D>& p) const {
    CellLocation<D> loc{};
    for (std::size_t a = 0; a < D; ++a) {
      const double t = (p[a] - lo_[a]) * inv_spacing_[a];
      const double tmin = -ghost_;
      const double tmax = nodes_[a] - 1 + ghost_;
      if (!(t >= tmin - kSnap && t <= tmax + kSnap)) [[unlikely]]
        outside(a);
      // truncation of a positive shift is floor; t >= -ghost - kSnap here
      int ci = static_cast<int>(t + (ghost_ + 1)) - (ghost_ + 1);
      double frac = t - ci;
      if (frac > 1.0 - kSnap) {
        ci += 1;
        frac = 0.0;
      } else if (frac < kSnap) {
        frac = 0.0;
      }
      if (ci >= nodes_[a] - 1 + ghost_) {
        ci = nodes_[a] - 2 + ghost_;
        frac = 1.0;
      } else if (ci < -ghost_) {
        ci = -ghost_;
        frac = 0.0;
      }
      loc.cell[a] = ci;
      loc.local[a] = frac;
    }
    return loc;
  }

  CellStencil<D> stencil(const Point<D>& p) const {
    const CellLocation<D> loc = locate_cell(p);
    CellStencil<D> st{};
    st.nodes[0] = flat(loc.cell);
    st.weights[0] = 1.0;
    // corner c has bit a set when it sits on the upper side along axis a
    for (std::size_t a = 0; a < D; ++a) {
      const std::size_t half = std::size_t{1} << a;
      const double u = loc.local[a];
      for (std::size_t c = 0; c < half; ++c) {
        st.nodes[c + half] = st.nodes[c] + stride_[a];
        st.weights[c + half] = st.weights[c] * u;
        st.weights[c] *= 1.0 - u;
      }
    }
    return st;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.lo_ == b.lo_ && a.hi_ == b.hi_ && a.nodes_ == b.nodes_ && a.ghost_ == b.ghost_;
  }

 private:
  // Relative tolerance (in cells) under which a coordinate is snapped onto a
  // grid line, so feet landing on nodes get exactly one non-zero weight.
  static constexpr double kSnap = 1e-10;

  [[noreturn, gnu::noinline]] static void outside(std::size_t axis) {
    throw DomainError("point outside the ghost-extended grid on axis " + std::to_string(axis));
  }

  template <class Fn>
  void visit_interior(Fn& fn, NodeIndex<D>& i) const {
    if constexpr (D == 2) {
      for (i[1] = 0; i[1] < nodes_[1]; ++i[1])
        for (i[0] = 0; i[0] < nodes_[0]; ++i[0]) fn(i);
    } else {
      for (i[2] = 0; i[2] < nodes_[2]; ++i[2])
        for (i[1] = 0; i[1] < nodes_[1]; ++i[1])
          for (i[0] = 0; i[0] < nodes_[0]; ++i[0]) fn(i);
    }
  }

  Point<D> lo_{};
  Point<D> hi_{};
  std::array<int, D> nodes_{};
  Point<D> spacing_{};
  Point<D> inv_spacing_{};
  std::array<std::size_t, D> stride_{};
  std::size_t extended_count_ = 0;
  int ghost_ = 1;
};

/// One scalar per node of the ghost-extended grid.
template <std::size_t D>
struct NodeField {
  Grid<D> grid;
  std::vector<double> values;

  NodeField() = default;
  explicit NodeField(const Grid<D>& g, double init = kInfinity)
      : grid(g), values(g.extended_count(), init) {}

  double& operator[](std::size_t node) noexcept { return values[node]; }
  double operator[](std::size_t node) const noexcept { return values[node]; }
  std::size_t size() const noexcept { return values.size(); }
};

/// Multilinear interpolation reading corner values through `read(node)`.
/// Corners with zero weight are never read. If any weighted corner holds the
/// sentinel the result saturates to kInfinity.
template <std::size_t D, class Reader>
double interpolate_with(const Grid<D>& grid, const Point<D>& p, Reader&& read) {
  const CellStencil<D> st = grid.stencil(p);
  double acc = 0.0;
  for (std::size_t c = 0; c < CellStencil<D>::kCorners; ++c) {
    const double w = st.weights[c];
    if (w == 0.0) continue;
    const double v = read(st.nodes[c]);
    if (is_infinite(v)) return kInfinity;
    acc += w * v;
  }
  return acc;
}

template <std::size_t D>
double interpolate(const NodeField<D>& field, const Point<D>& p) {
  return interpolate_with(field.grid, p, [&](std::size_t n) { return field.values[n]; });
}

}  // namespace patchy
