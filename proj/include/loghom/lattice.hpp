#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "loghom/errors.hpp"

namespace loghom {

using Coord = std::array<int, 3>;

/// Periodic cubic lattice with n_per_side sites per axis. Sites are numbered
/// row-major: the last axis varies fastest.
struct LatticeGrid {
  int dim = 2;
  int n_per_side = 64;
  double side_length = 64.0;

  LatticeGrid() = default;
  LatticeGrid(int d, int n, double length) : dim(d), n_per_side(n), side_length(length) { validate(); }

  void validate() const {
    require(dim >= 1 && dim <= 3, ErrorKind::InvalidArgument, "dim must be 1, 2 or 3");
    require(n_per_side >= 2 && (n_per_side & (n_per_side - 1)) == 0, ErrorKind::InvalidArgument,
            "n_per_side must be a power of two >= 2");
    require(side_length > 0.0 && std::isfinite(side_length), ErrorKind::InvalidArgument,
            "side_length must be positive");
  }

  double spacing() const { return side_length / n_per_side; }
  double cell_volume() const { return std::pow(spacing(), dim); }

  std::size_t sites() const {
    std::size_t s = 1;
    for (int j = 0; j < dim; ++j) s *= static_cast<std::size_t>(n_per_side);
    return s;
  }

  /// Index offset between a site and its neighbour along `axis`.
  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int j = axis + 1; j < dim; ++j) s *= static_cast<std::size_t>(n_per_side);
    return s;
  }

  Coord coords(std::size_t site) const {
    Coord c{0, 0, 0};
    for (int j = dim - 1; j >= 0; --j) {
      c[j] = static_cast<int>(site % n_per_side);
      site /= n_per_side;
    }
    return c;
  }

  int wrap(int i) const {
    const int m = i % n_per_side;
    return m < 0 ? m + n_per_side : m;
  }

  std::size_t site(const Coord& c) const {
    std::size_t s = 0;
    for (int j = 0; j < dim; ++j) s = s * n_per_side + static_cast<std::size_t>(wrap(c[j]));
    return s;
  }

  std::size_t shift(std::size_t site_index, int axis, int delta) const {
    Coord c = coords(site_index);
    c[axis] += delta;
    return site(c);
  }

  /// Minimal-image offset of lattice index difference along one axis, in [-n/2, n/2).
  int min_image(int delta) const {
    int m = wrap(delta);
    if (m >= n_per_side / 2) m -= n_per_side;
    return m;
  }

  /// Periodic Euclidean distance between two sites in length units.
  double distance(std::size_t a, std::size_t b) const {
    const Coord ca = coords(a);
    const Coord cb = coords(b);
    double s = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double d = min_image(ca[j] - cb[j]);
      s += d * d;
    }
    return std::sqrt(s) * spacing();
  }

  /// Distance of a site from the origin site 0.
  double distance_to_origin(std::size_t site_index) const { return distance(site_index, 0); }

  friend bool operator==(const LatticeGrid& a, const LatticeGrid& b) {
    return a.dim == b.dim && a.n_per_side == b.n_per_side && a.side_length == b.side_length;
  }
};

inline void require_same_grid(const LatticeGrid& a, const LatticeGrid& b, const char* where) {
  require(a == b, ErrorKind::GridMismatch, where);
}

struct FieldMeta {
  std::uint64_t seed = 0;
  std::string method;
  std::uint64_t parent_hash = 0;
};

/// Real values on a periodic lattice, `components` values per site. Storage
/// is component-major: component c occupies values[c*N, (c+1)*N).
///
/// For fields that live on edges (gradients, fluxes) component j sits on the
/// edge from x to x + spacing*e_j.
struct LatticeField {
  LatticeGrid grid;
  int components = 1;
  std::vector<double> values;
  FieldMeta meta;

  LatticeField() = default;
  LatticeField(const LatticeGrid& g, int comps, double fill = 0.0)
      : grid(g), components(comps), values(g.sites() * static_cast<std::size_t>(comps), fill) {
    require(comps >= 1, ErrorKind::InvalidArgument, "components must be >= 1");
  }

  std::size_t sites() const { return grid.sites(); }

  std::span<double> component(int c) {
    return {values.data() + static_cast<std::size_t>(c) * sites(), sites()};
  }
  std::span<const double> component(int c) const {
    return {values.data() + static_cast<std::size_t>(c) * sites(), sites()};
  }

  double& at(std::size_t site, int c = 0) { return values[static_cast<std::size_t>(c) * sites() + site]; }
  double at(std::size_t site, int c = 0) const { return values[static_cast<std::size_t>(c) * sites() + site]; }

  double mean(int c = 0) const {
    double s = 0.0;
    for (double v : component(c)) s += v;
    return s / static_cast<double>(sites());
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

inline LatticeField scalar_field(const LatticeGrid& g, double fill = 0.0) { return LatticeField(g, 1, fill); }

/// Integer offsets (in lattice units) of the sites in the closed ball of the
/// given physical radius, each periodic site listed once.
inline std::vector<Coord> ball_offsets(const LatticeGrid& g, double radius) {
  const double r_sites = radius / g.spacing();
  const int reach = std::min(static_cast<int>(std::floor(r_sites + 1e-12)), g.n_per_side / 2);
  const int lo = -reach;
  const int hi = std::min(reach, g.n_per_side / 2 - 1);
  const double r2 = r_sites * r_sites * (1.0 + 1e-12);
  std::vector<Coord> out;
  for (int i = lo; i <= hi; ++i) {
    const int jlo = g.dim > 1 ? lo : 0;
    const int jhi = g.dim > 1 ? hi : 0;
    for (int j = jlo; j <= jhi; ++j) {
      const int klo = g.dim > 2 ? lo : 0;
      const int khi = g.dim > 2 ? hi : 0;
      for (int k = klo; k <= khi; ++k) {
        const double d2 = double(i) * i + double(j) * j + double(k) * k;
        if (d2 <= r2) out.push_back({i, j, k});
      }
    }
  }
  return out;
}

/// Site indices of the ball of radius `radius` centred at `center`.
inline std::vector<std::size_t> ball_sites(const LatticeGrid& g, std::size_t center, double radius) {
  const Coord c = g.coords(center);
  std::vector<std::size_t> out;
  for (const Coord& o : ball_offsets(g, radius)) {
    out.push_back(g.site({c[0] + o[0], c[1] + o[1], c[2] + o[2]}));
  }
  return out;
}

/// Volume of the Euclidean unit ball in dimension d.
inline double unit_ball_volume(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return std::numbers::pi;
    default: return 4.0 * std::numbers::pi / 3.0;
  }
}

}  // namespace loghom
