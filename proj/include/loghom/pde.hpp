#pragma once

// Discrete periodic divergence-form operators on the staggered lattice.
//
// Scalars live on sites; gradients, fluxes and the coefficient live on edges.
// D_j u(x) = (u(x + h e_j) - u(x)) / h sits on the edge from x to x + h e_j and
// div F(x) = sum_j (F_j(x) - F_j(x - h e_j)) / h, so that -div is the adjoint of D.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "loghom/errors.hpp"
#include "loghom/fft.hpp"
#include "loghom/lattice.hpp"

namespace loghom {

enum class EdgeRule { Geometric, Harmonic };

inline const char* to_string(EdgeRule r) { return r == EdgeRule::Geometric ? "geometric" : "harmonic"; }

inline EdgeRule parse_edge_rule(const std::string& s) {
  if (s == "geometric") return EdgeRule::Geometric;
  if (s == "harmonic") return EdgeRule::Harmonic;
  throw Error(ErrorKind::ConfigError, "unknown edge rule '" + s + "'");
}

/// Coefficient on every edge; values[axis * N + site] is the edge from site to site + e_axis.
struct EdgeCoefficient {
  LatticeGrid grid;
  std::vector<double> values;

  EdgeCoefficient() = default;
  explicit EdgeCoefficient(const LatticeGrid& g, double fill = 1.0)
      : grid(g), values(g.sites() * static_cast<std::size_t>(g.dim), fill) {}

  double at(std::size_t site, int axis) const { return values[static_cast<std::size_t>(axis) * grid.sites() + site]; }
  double& at(std::size_t site, int axis) { return values[static_cast<std::size_t>(axis) * grid.sites() + site]; }
  std::span<const double> axis(int j) const { return {values.data() + static_cast<std::size_t>(j) * grid.sites(), grid.sites()}; }
};

/// Visit every edge along `axis` as (site, neighbour) with periodic wrap, in site order.
template <class Fn>
inline void for_each_edge(const LatticeGrid& g, int axis, Fn&& fn) {
  const std::size_t n = static_cast<std::size_t>(g.n_per_side);
  const std::size_t s = g.stride(axis);
  const std::size_t block = n * s;
  const std::size_t total = g.sites();
  for (std::size_t o = 0; o < total; o += block) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t base = o + c * s;
      const std::size_t nb = (c + 1 == n) ? o : base + s;
      for (std::size_t t = 0; t < s; ++t) fn(base + t, nb + t);
    }
  }
}

inline EdgeCoefficient edge_coefficients(const LatticeField& a, EdgeRule rule = EdgeRule::Geometric) {
  require(a.components == 1, ErrorKind::InvalidArgument, "edge_coefficients expects a scalar field");
  EdgeCoefficient e(a.grid);
  const std::size_t N = a.sites();
  for (int j = 0; j < a.grid.dim; ++j) {
    double* out = e.values.data() + static_cast<std::size_t>(j) * N;
    const double* av = a.values.data();
    if (rule == EdgeRule::Geometric) {
      for_each_edge(a.grid, j, [&](std::size_t x, std::size_t y) { out[x] = std::sqrt(av[x] * av[y]); });
    } else {
      for_each_edge(a.grid, j, [&](std::size_t x, std::size_t y) { out[x] = 2.0 / (1.0 / av[x] + 1.0 / av[y]); });
    }
  }
  return e;
}

/// Forward-difference gradient: an edge field with `dim` components.
inline LatticeField gradient(const LatticeField& u, int comp = 0) {
  const LatticeGrid& g = u.grid;
  LatticeField du(g, g.dim);
  const double inv_h = 1.0 / g.spacing();
  const auto uv = u.component(comp);
  for (int j = 0; j < g.dim; ++j) {
    auto out = du.component(j);
    for_each_edge(g, j, [&](std::size_t x, std::size_t y) { out[x] = (uv[y] - uv[x]) * inv_h; });
  }
  return du;
}

/// Backward-difference divergence of an edge field.
inline LatticeField divergence(const LatticeField& F) {
  const LatticeGrid& g = F.grid;
  require(F.components == g.dim, ErrorKind::InvalidArgument, "divergence expects dim components");
  LatticeField out(g, 1);
  const double inv_h = 1.0 / g.spacing();
  auto ov = out.component(0);
  for (int j = 0; j < g.dim; ++j) {
    const auto f = F.component(j);
    for_each_edge(g, j, [&](std::size_t x, std::size_t y) {
      ov[x] += f[x] * inv_h;
      ov[y] -= f[x] * inv_h;
    });
  }
  return out;
}

/// Average of the two edges adjacent to each site along each axis.
inline LatticeField cell_centered(const LatticeField& F) {
  const LatticeGrid& g = F.grid;
  LatticeField out(g, F.components);
  for (int c = 0; c < F.components; ++c) {
    const int axis = c % g.dim;
    const auto f = F.component(c);
    auto o = out.component(c);
    for_each_edge(g, axis, [&](std::size_t x, std::size_t y) {
      o[x] += 0.5 * f[x];
      o[y] += 0.5 * f[x];
    });
  }
  return out;
}

namespace detail {

inline void apply_operator_raw(const EdgeCoefficient& aE, const double* u, double* out) {
  const LatticeGrid& g = aE.grid;
  const std::size_t N = g.sites();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  std::fill(out, out + N, 0.0);
  for (int j = 0; j < g.dim; ++j) {
    const double* a = aE.values.data() + static_cast<std::size_t>(j) * N;
    for_each_edge(g, j, [&](std::size_t x, std::size_t y) {
      const double f = a[x] * (u[y] - u[x]) * inv_h2;
      out[x] -= f;
      out[y] += f;
    });
  }
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void remove_mean(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

}  // namespace detail

/// -div(aE D u), the 2*dim+1-point stencil with periodic wrap.
inline LatticeField apply_operator(const EdgeCoefficient& aE, const LatticeField& u) {
  require_same_grid(aE.grid, u.grid, "apply_operator: coefficient and field grids differ");
  require(u.components == 1, ErrorKind::InvalidArgument, "apply_operator expects a scalar field");
  LatticeField out(u.grid, 1);
  detail::apply_operator_raw(aE, u.values.data(), out.values.data());
  return out;
}

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  std::optional<double> truncation_M;
  std::vector<double> residual_history;
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 0;  // 0 selects 50 * n_per_side
  bool keep_history = false;
};

struct SolveResult {
  LatticeField u;
  SolveReport report;
};

/// Jacobi-preconditioned conjugate gradients for A u = b on mean-zero
/// functions, A = -div(aE D .). The residual is measured in the
/// preconditioned norm sqrt(r . M^{-1} r), relative to that of b.
inline SolveResult solve_operator(const EdgeCoefficient& aE, std::vector<double> b, const SolveOptions& opt = {}) {
  const LatticeGrid& g = aE.grid;
  const std::size_t N = g.sites();
  require(b.size() == N, ErrorKind::GridMismatch, "solve_operator: right-hand side size");
  for (double v : aE.values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::SingularCoefficient, "edge coefficient must be positive and finite");
    }
  }
  const int max_iter = opt.max_iter > 0 ? opt.max_iter : 50 * g.n_per_side;

  std::vector<double> inv_diag(N, 0.0);
  {
    const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
    for (int j = 0; j < g.dim; ++j) {
      const auto a = aE.axis(j);
      for_each_edge(g, j, [&](std::size_t x, std::size_t y) {
        inv_diag[x] += a[x] * inv_h2;
        inv_diag[y] += a[x] * inv_h2;
      });
    }
    for (double& d : inv_diag) d = 1.0 / d;
  }

  SolveResult res{LatticeField(g, 1), {}};
  std::vector<double>& x = res.u.values;
  detail::remove_mean(b);
  std::vector<double> r = b, z(N), p(N), Ap(N);
  auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t i = 0; i < N; ++i) out[i] = inv_diag[i] * in[i];
    detail::remove_mean(out);
  };
  precondition(r, z);
  const double rz0 = detail::dot(r, z);
  SolveReport& rep = res.report;
  if (!(rz0 > 0.0)) {
    rep.converged = true;
    return res;
  }
  const double tol2 = opt.tol * opt.tol;
  double rz = rz0;
  p = z;
  int it = 0;
  for (int restart = 0; restart < 4; ++restart) {
    while (it < max_iter && rz > tol2 * rz0) {
      detail::apply_operator_raw(aE, p.data(), Ap.data());
      const double alpha = rz / detail::dot(p, Ap);
      for (std::size_t i = 0; i < N; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * Ap[i];
      }
      precondition(r, z);
      const double rz_new = detail::dot(r, z);
      const double beta = rz_new / rz;
      rz = rz_new;
      for (std::size_t i = 0; i < N; ++i) p[i] = z[i] + beta * p[i];
      ++it;
      if (opt.keep_history) rep.residual_history.push_back(std::sqrt(std::max(rz, 0.0) / rz0));
    }
    // recompute the true residual; restart if the recursion drifted
    detail::apply_operator_raw(aE, x.data(), Ap.data());
    for (std::size_t i = 0; i < N; ++i) r[i] = b[i] - Ap[i];
    detail::remove_mean(r);
    precondition(r, z);
    rz = detail::dot(r, z);
    p = z;
    if (rz <= tol2 * rz0 || it >= max_iter) break;
  }
  detail::remove_mean(x);
  rep.iterations = it;
  rep.relative_residual = std::sqrt(std::max(rz, 0.0) / rz0);
  rep.converged = rep.relative_residual <= opt.tol;
  if (!rep.converged) {
    std::vector<double> hist = rep.residual_history;
    if (hist.empty()) hist.push_back(rep.relative_residual);
    throw NoConvergence(it, std::move(hist));
  }
  return res;
}

/// Solve -div aE (D u + g) = div h for mean-zero u. `g` and `h` are edge
/// fields with `dim` components; either may be absent.
inline SolveResult solve_divform(const EdgeCoefficient& aE, const LatticeField* g, const LatticeField* h,
                                 const SolveOptions& opt = {}) {
  const LatticeGrid& grid = aE.grid;
  LatticeField F(grid, grid.dim);
  if (g) {
    require_same_grid(grid, g->grid, "solve_divform: g grid");
    require(g->components == grid.dim, ErrorKind::InvalidArgument, "g must have dim components");
    for (int j = 0; j < grid.dim; ++j) {
      const auto a = aE.axis(j);
      const auto gv = g->component(j);
      auto f = F.component(j);
      for (std::size_t s = 0; s < grid.sites(); ++s) f[s] += a[s] * gv[s];
    }
  }
  if (h) {
    require_same_grid(grid, h->grid, "solve_divform: h grid");
    require(h->components == grid.dim, ErrorKind::InvalidArgument, "h must have dim components");
    for (std::size_t i = 0; i < F.values.size(); ++i) F.values[i] += h->values[i];
  }
  LatticeField b = divergence(F);
  return solve_operator(aE, std::move(b.values), opt);
}

/// Mean-zero u with -Delta u = rhs - mean(rhs), exactly in Fourier space.
inline LatticeField solve_poisson_spectral(const LatticeField& rhs) {
  const LatticeGrid& g = rhs.grid;
  require(rhs.components == 1, ErrorKind::InvalidArgument, "solve_poisson_spectral expects a scalar field");
  std::vector<Complex> spec = rfft(g, rhs.component(0));
  for_each_half_mode(g, [&](std::size_t k, const Coord& m) {
    const double sym = laplacian_symbol(g, m);
    spec[k] = (m[0] == 0 && m[1] == 0 && m[2] == 0) ? Complex(0.0) : spec[k] / sym;
  });
  LatticeField u(g, 1);
  u.values = irfft(g, spec);
  return u;
}

/// Mean-zero u with -div(A D u) = div F for a constant symmetric matrix A,
/// solved spectrally with symbol s^* A s, s_j the forward-difference symbol.
inline LatticeField solve_constant_coefficient(const Eigen::MatrixXd& A, const LatticeField& F) {
  const LatticeGrid& g = F.grid;
  require(A.rows() == g.dim && A.cols() == g.dim, ErrorKind::InvalidArgument, "matrix size must equal dim");
  require(F.components == g.dim, ErrorKind::InvalidArgument, "F must have dim components");
  std::vector<std::vector<Complex>> Fh;
  for (int j = 0; j < g.dim; ++j) Fh.push_back(rfft(g, F.component(j)));
  std::vector<Complex> out(half_spectrum_size(g));
  for_each_half_mode(g, [&](std::size_t k, const Coord& m) {
    if (m[0] == 0 && m[1] == 0 && m[2] == 0) return;
    Complex s[3];
    for (int j = 0; j < g.dim; ++j) s[j] = forward_difference_symbol(g, m, j);
    double sym = 0.0;
    Complex num(0.0);
    for (int j = 0; j < g.dim; ++j) {
      num += std::conj(s[j]) * Fh[j][k];
      for (int l = 0; l < g.dim; ++l) sym += A(j, l) * (std::conj(s[j]) * s[l]).real();
    }
    out[k] = -num / sym;
  });
  LatticeField u(g, 1);
  u.values = irfft(g, out);
  return u;
}

}  // namespace loghom
