#pragma once

// Quantitative two-scale expansion on the torus, in lattice coordinates.
//
// With window 1/eps the macroscopic problem -div a(./eps) grad u_eps = div f
// becomes -div a grad U = div f(eps .) on the lattice, u_eps(x) = eps U(x/eps),
// and the expansion S_eps ubar + eps phi_i(./eps) S_eps(d_i ubar) becomes
// eps (S_1 Ubar + phi_i S_1(D_i Ubar)).

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "loghom/ball.hpp"
#include "loghom/correctors.hpp"
#include "loghom/errors.hpp"
#include "loghom/fluctuations.hpp"
#include "loghom/pde.hpp"
#include "loghom/stats.hpp"

namespace loghom {

/// Per-site ball average of every component over radius `radius` (length units).
inline LatticeField local_average(const LatticeField& v, double radius) {
  require(radius >= v.grid.spacing() * (1.0 - 1e-12), ErrorKind::InvalidArgument,
          "averaging ball must cover at least one lattice cell");
  return ball_average_field(v, radius);
}

/// S Ubar + phi_i S(D_i Ubar), with S the ball average of the given radius and
/// D_i Ubar cell centred.
inline LatticeField two_scale_expansion(const LatticeField& ubar, const CorrectorSet& cs, double radius = 1.0) {
  require_same_grid(ubar.grid, cs.grid, "two_scale_expansion: ubar grid");
  require(ubar.components == 1, ErrorKind::InvalidArgument, "ubar must be scalar");
  const int d = cs.grid.dim;
  LatticeField out = local_average(ubar, radius);
  const LatticeField grad = local_average(cell_centered(gradient(ubar)), radius);
  auto o = out.component(0);
  for (int i = 0; i < d; ++i) {
    const auto phi = cs.phi[static_cast<std::size_t>(i)].component(0);
    const auto gi = grad.component(i);
    for (std::size_t s = 0; s < o.size(); ++s) o[s] += phi[s] * gi[s];
  }
  return out;
}

/// Site energy density of a|D w|^2: each edge energy split between its endpoints.
inline std::vector<double> edge_energy_density(const EdgeCoefficient& aE, const LatticeField& w) {
  const LatticeGrid& g = aE.grid;
  const LatticeField dw = gradient(w);
  std::vector<double> out(g.sites(), 0.0);
  for (int j = 0; j < g.dim; ++j) {
    const auto a = aE.axis(j);
    const auto gj = dw.component(j);
    for_each_edge(g, j, [&](std::size_t x, std::size_t y) {
      const double e = 0.5 * a[x] * gj[x] * gj[x];
      out[x] += e;
      out[y] += e;
    });
  }
  return out;
}

/// Sites within side_length/4 of the origin along every axis (periodic).
inline bool in_middle_half(const LatticeGrid& g, std::size_t s) {
  const Coord c = g.coords(s);
  for (int j = 0; j < g.dim; ++j) {
    if (std::abs(g.min_image(c[j])) * g.spacing() >= g.side_length / 4.0) return false;
  }
  return true;
}

/// Smallest forcing window, in lattice cells, for the two-scale comparison.
inline constexpr double kTwoScaleMinWindowCells = 4.0;

struct TwoScaleSample {
  double eps = 0.0;
  double error2 = 0.0;           // eps^d sum_{middle half} h^d avg_{B_1} a|D(U - U2s)|^2
  double energy_residual = 0.0;  // |int a|DU|^2 + int f.DU| / int a|DU|^2
  SolveReport report;
};

/// One replica and one eps: forcing f = chi(eps .) e_dir centred at the origin.
inline TwoScaleSample two_scale_sample(const CorrectorSet& cs, const Eigen::MatrixXd& ahom, double eps, int dir = 0,
                                       const SolveOptions& opt = {}) {
  const LatticeGrid& g = cs.grid;
  const LatticeField f = bump_vector_field(g, eps, dir, kTwoScaleMinWindowCells);
  require(1.0 / eps <= g.side_length / 4.0 * (1.0 + 1e-12), ErrorKind::ScaleMismatch,
          "forcing support must lie in the middle quarter of the torus");
  SolveResult U = solve_divform(cs.edges, nullptr, &f, opt);
  const LatticeField ubar = solve_constant_coefficient(ahom, f);
  const LatticeField u2s = two_scale_expansion(ubar, cs, 1.0);
  LatticeField diff(g, 1);
  for (std::size_t s = 0; s < g.sites(); ++s) diff.values[s] = U.u.values[s] - u2s.values[s];
  const auto dens = ball_average_all(g, edge_energy_density(cs.edges, diff), 1.0);
  double acc = 0.0;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    if (in_middle_half(g, s)) acc += dens[s];
  }
  TwoScaleSample out;
  out.eps = eps;
  out.error2 = std::pow(eps, g.dim) * g.cell_volume() * acc;
  double energy = 0.0;
  for (double v : edge_energy_density(cs.edges, U.u)) energy += v;
  const LatticeField du = gradient(U.u);
  double work = 0.0;
  for (std::size_t i = 0; i < f.values.size(); ++i) work += f.values[i] * du.values[i];
  out.energy_residual = energy > 0.0 ? std::abs(energy + work) / energy : std::abs(work);
  out.report = U.report;
  return out;
}

struct TwoScaleFit {
  std::vector<double> eps;
  std::vector<double> error;         // sqrt(E[error2])
  std::vector<double> error_stderr;
  ScalingFit power;                  // log error against log eps
  ScalingFit log_corrected;          // log(error / mu_d(1/eps)) against log eps
};

/// Pooled errors per eps level (errors2[level][replica]) and the two model fits.
inline TwoScaleFit expansion_error_fit(int d, const std::vector<double>& eps,
                                       const std::vector<std::vector<double>>& errors2) {
  require(eps.size() >= 3 && eps.size() == errors2.size(), ErrorKind::InvalidArgument,
          "two-scale fit needs >= 3 eps levels");
  TwoScaleFit out;
  out.eps = eps;
  std::vector<double> corrected;
  for (std::size_t l = 0; l < eps.size(); ++l) {
    const double m = stats::mean(errors2[l]);
    const double e = std::sqrt(m);
    out.error.push_back(e);
    out.error_stderr.push_back(m > 0.0 ? 0.5 * stats::stderr_of_mean(errors2[l]) / e : 0.0);
    corrected.push_back(e / mu_d(d, 1.0 / eps[l]));
  }
  out.power = fit_scaling(eps, out.error);
  out.log_corrected = fit_scaling(eps, corrected);
  return out;
}

}  // namespace loghom
