#pragma once

// Random regularity radii of a coefficient sample and the stretched log^2
// tail fits used to characterize their stochastic integrability.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "loghom/ball.hpp"
#include "loghom/correctors.hpp"
#include "loghom/errors.hpp"
#include "loghom/lattice.hpp"
#include "loghom/stats.hpp"

namespace loghom {

enum class RadiusKind { Diamond, Star };

inline const char* to_string(RadiusKind k) { return k == RadiusKind::Diamond ? "diamond" : "star"; }

struct RadiusParams {
  int p_diamond = 3;
  double comparison = 2.0;  // C_d for the diamond radius, C for the star radius
  int dyadic_base = 2;
};

/// Per-site radius (length units). For the star radius the field may live on
/// a coarsened grid of centres: fine site of coarse site s is
/// fine_grid.site(coarse coords * stride).
struct RadiusField {
  LatticeGrid grid;
  int stride = 1;
  std::vector<double> values;
  std::vector<std::uint8_t> saturated;  // before the envelope
  RadiusKind kind = RadiusKind::Diamond;
  RadiusParams params;

  std::size_t saturated_count() const {
    return static_cast<std::size_t>(std::count(saturated.begin(), saturated.end(), std::uint8_t{1}));
  }
};

/// Lipschitz slope of every radius envelope.
inline constexpr double kEnvelopeSlope = 1.0 / 8.0;

/// Exponent of the reverse Hoelder inequality, 2d(d+1)/(d^2+d+2).
inline double reverse_holder_exponent(int d) { return 2.0 * d * (d + 1) / static_cast<double>(d * d + d + 2); }

/// The comparison constant solving (1 - 1/C_d) 2^d = 9^{-d}/2.
inline double appendix_comparison_constant(int d) {
  return 1.0 / (1.0 - std::pow(9.0, -d) / std::pow(2.0, d + 1));
}

namespace detail {

/// 1-d squared distance transform on a periodic line (lower envelope of parabolas).
inline void edt_line(const std::vector<double>& f, std::vector<double>& out) {
  const int n = static_cast<int>(f.size());
  const int m = 3 * n;
  std::vector<int> v(static_cast<std::size_t>(m));
  std::vector<double> z(static_cast<std::size_t>(m) + 1);
  auto F = [&](int q) { return f[static_cast<std::size_t>(q % n)]; };
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < m; ++q) {
    if (!std::isfinite(F(q))) continue;
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      const double s = ((F(q) + double(q) * q) - (F(p) + double(p) * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    if (k == 0) {
      z[0] = -inf;
    } else {
      const int p = v[static_cast<std::size_t>(k - 1)];
      z[static_cast<std::size_t>(k)] = ((F(q) + double(q) * q) - (F(p) + double(p) * p)) / (2.0 * (q - p));
    }
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  out.assign(static_cast<std::size_t>(n), inf);
  if (k < 0) return;
  int j = 0;
  for (int q = n; q < 2 * n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(q - n)] = double(q - p) * (q - p) + F(p);
  }
}

/// Periodic squared Euclidean distance (lattice units) to the marked sites.
inline std::vector<double> squared_distance_transform(const LatticeGrid& g, const std::vector<std::uint8_t>& mark) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(g.sites());
  for (std::size_t s = 0; s < d.size(); ++s) d[s] = mark[s] ? 0.0 : inf;
  const std::size_t n = static_cast<std::size_t>(g.n_per_side);
  std::vector<double> line(n), out;
  for (int axis = 0; axis < g.dim; ++axis) {
    const std::size_t st = g.stride(axis);
    const std::size_t block = n * st;
    for (std::size_t o = 0; o < g.sites(); o += block) {
      for (std::size_t t = 0; t < st; ++t) {
        for (std::size_t c = 0; c < n; ++c) line[c] = d[o + c * st + t];
        edt_line(line, out);
        for (std::size_t c = 0; c < n; ++c) d[o + c * st + t] = out[c];
      }
    }
  }
  return d;
}

}  // namespace detail

/// Smallest field with Lipschitz constant `slope` (periodic Euclidean
/// distance) lying above `v`: env(x) = max_y v(y) - slope |x - y|.
inline std::vector<double> lipschitz_envelope(const LatticeGrid& g, const std::vector<double>& v,
                                              double slope = kEnvelopeSlope) {
  require(v.size() == g.sites(), ErrorKind::GridMismatch, "lipschitz_envelope size");
  std::vector<double> levels(v);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<double> env(v);
  const double h = g.spacing();
  if (levels.size() <= 64) {
    std::vector<std::uint8_t> mark(g.sites());
    for (std::size_t l = 1; l < levels.size(); ++l) {
      for (std::size_t s = 0; s < v.size(); ++s) mark[s] = v[s] == levels[l];
      const auto d2 = detail::squared_distance_transform(g, mark);
      for (std::size_t s = 0; s < v.size(); ++s) env[s] = std::max(env[s], levels[l] - slope * std::sqrt(d2[s]) * h);
    }
    return env;
  }
  // Many distinct values: direct maximization inside the window beyond which
  // no site can raise another above its own value.
  const double window = (levels.back() - levels.front()) / slope;
  const auto offsets = ball_offsets(g, std::min(window, g.side_length));
  for (std::size_t x = 0; x < v.size(); ++x) {
    const Coord c = g.coords(x);
    double best = v[x];
    for (const Coord& o : offsets) {
      const std::size_t y = g.site({c[0] + o[0], c[1] + o[1], c[2] + o[2]});
      const double dist = std::sqrt(double(o[0]) * o[0] + double(o[1]) * o[1] + double(o[2]) * o[2]) * h;
      best = std::max(best, v[y] - slope * dist);
    }
    env[x] = best;
  }
  return env;
}

/// Dyadic radii 1, 2, 4, ... not exceeding `rho_max`.
inline std::vector<double> dyadic_radii(double rho_max) {
  std::vector<double> out;
  for (double r = 1.0; r <= rho_max * (1.0 + 1e-12); r *= 2.0) out.push_back(r);
  return out;
}

/// Exact moment E[a^p + a^{-p}] = 2 exp(C(0) p^2 / 2) of the log-normal coefficient.
inline double lognormal_moment_sum(double amplitude, double p) { return 2.0 * std::exp(0.5 * amplitude * p * p); }

/// Smallest dyadic threshold t such that `ok(rho)` holds for every dyadic
/// rho in [t, rho_max]; returns -1 if it fails at rho_max.
template <class Ok>
double dyadic_threshold(const std::vector<double>& radii, Ok&& ok) {
  double t = -1.0;
  for (auto it = radii.rbegin(); it != radii.rend(); ++it) {
    if (!ok(*it, static_cast<std::size_t>(radii.rend() - it - 1))) break;
    t = *it;
  }
  return t;
}

/// r_diamond: per site, the smallest dyadic r >= 1 from which ball averages of
/// a^p + a^{-p} (p = d+1) stay within [E/C_d, C_d E] for all dyadic radii up
/// to side_length/4, followed by the 1/8-Lipschitz envelope.
inline RadiusField compute_r_diamond(const LatticeField& a, double moment_sum, double comparison = 2.0) {
  const LatticeGrid& g = a.grid;
  require(a.components == 1, ErrorKind::InvalidArgument, "coefficient must be scalar");
  require(comparison > 1.0, ErrorKind::InvalidArgument, "comparison constant must exceed 1");
  const int p = g.dim + 1;
  std::vector<double> X(g.sites());
  for (std::size_t s = 0; s < X.size(); ++s) X[s] = std::pow(a.values[s], p) + std::pow(a.values[s], -p);
  const auto radii = dyadic_radii(max_ball_radius(g));
  std::vector<std::vector<double>> avg;
  for (double r : radii) avg.push_back(ball_average_all(g, X, r));
  RadiusField out;
  out.grid = g;
  out.kind = RadiusKind::Diamond;
  out.params = {p, comparison, 2};
  out.values.resize(g.sites());
  out.saturated.assign(g.sites(), 0);
  const double lo = moment_sum / comparison, hi = moment_sum * comparison;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    const double t = dyadic_threshold(radii, [&](double, std::size_t i) { return avg[i][s] >= lo && avg[i][s] <= hi; });
    if (t < 0.0) {
      out.values[s] = max_ball_radius(g);
      out.saturated[s] = 1;
    } else {
      out.values[s] = t;
    }
  }
  out.values = lipschitz_envelope(g, out.values);
  return out;
}

/// r_club(R) = (R^{-eps/2} sup_{B_R(center)} (a + 1/a))^2.
inline double compute_r_club(const LatticeField& a, double R, double eps, std::size_t center = 0) {
  require(eps > 0.0 && eps <= 1.0, ErrorKind::InvalidArgument, "eps must lie in (0, 1]");
  require(R >= 1.0, ErrorKind::InvalidArgument, "R must be >= 1");
  require_ball_fits(a.grid, R);
  double sup = 0.0;
  for (std::size_t x : ball_sites(a.grid, center, R)) sup = std::max(sup, a.values[x] + 1.0 / a.values[x]);
  const double v = std::pow(R, -0.5 * eps) * sup;
  return v * v;
}

/// Fine-grid site of a coarse centre.
inline std::size_t fine_site(const LatticeGrid& fine, const LatticeGrid& coarse, int stride, std::size_t coarse_site) {
  Coord c = coarse.coords(coarse_site);
  for (int j = 0; j < fine.dim; ++j) c[j] *= stride;
  return fine.site(c);
}

inline LatticeGrid coarse_grid(const LatticeGrid& g, int stride) {
  require(stride >= 1 && g.n_per_side % stride == 0 && g.n_per_side / stride >= 2, ErrorKind::InvalidArgument,
          "stride must divide n_per_side");
  return LatticeGrid(g.dim, g.n_per_side / stride, g.side_length);
}

/// Oscillation (1/|B| sum_B |w - mean_B w|^p)^{1/p} of a multi-component
/// site field over the ball of radius rho at `center` (Euclidean norm over components).
inline double ball_oscillation(const LatticeField& w, std::size_t center, const std::vector<Coord>& offsets, double p) {
  const LatticeGrid& g = w.grid;
  const Coord c = g.coords(center);
  std::vector<std::size_t> sites;
  sites.reserve(offsets.size());
  for (const Coord& o : offsets) sites.push_back(g.site({c[0] + o[0], c[1] + o[1], c[2] + o[2]}));
  std::vector<double> m(static_cast<std::size_t>(w.components), 0.0);
  for (int k = 0; k < w.components; ++k) {
    const auto comp = w.component(k);
    double s = 0.0;
    for (std::size_t x : sites) s += comp[x];
    m[static_cast<std::size_t>(k)] = s / static_cast<double>(sites.size());
  }
  double acc = 0.0;
  for (std::size_t x : sites) {
    double d2 = 0.0;
    for (int k = 0; k < w.components; ++k) {
      const double d = w.values[static_cast<std::size_t>(k) * w.sites() + x] - m[static_cast<std::size_t>(k)];
      d2 += d * d;
    }
    acc += std::pow(d2, 0.5 * p);
  }
  return std::pow(acc / static_cast<double>(sites.size()), 1.0 / p);
}

/// r_star: per centre, the smallest admissible r >= r_diamond(x) such that the
/// L^{2p/(p-1)} oscillation of (phi, sigma) on B_rho, divided by rho, is at
/// most 1/C for all dyadic rho >= r up to side_length/4; then the 1/8-Lipschitz
/// envelope over the centres. Centres form the sub-lattice with the given stride.
inline RadiusField compute_r_star(const CorrectorSet& cs, const RadiusField& r_diamond, double C = 10.0, int stride = 1) {
  const LatticeGrid& g = cs.grid;
  require(C > 0.0, ErrorKind::InvalidArgument, "C must be positive");
  require_same_grid(g, r_diamond.grid, "compute_r_star: r_diamond grid");
  const LatticeGrid cg = coarse_grid(g, stride);
  const int pd = g.dim + 1;
  const double p = 2.0 * pd / (pd - 1.0);
  const LatticeField w = cs.phi_sigma();
  const auto radii = dyadic_radii(max_ball_radius(g));
  std::vector<std::vector<Coord>> offsets;
  for (double r : radii) offsets.push_back(ball_offsets(g, r));
  RadiusField out;
  out.grid = cg;
  out.stride = stride;
  out.kind = RadiusKind::Star;
  out.params = {pd, C, 2};
  out.values.resize(cg.sites());
  out.saturated.assign(cg.sites(), 0);
  for (std::size_t s = 0; s < cg.sites(); ++s) {
    const std::size_t x = fine_site(g, cg, stride, s);
    const double t = dyadic_threshold(radii, [&](double rho, std::size_t i) {
      return ball_oscillation(w, x, offsets[i], p) / rho <= 1.0 / C;
    });
    const double floor = r_diamond.values[x];
    if (t < 0.0) {
      out.values[s] = std::max(floor, max_ball_radius(g));
      out.saturated[s] = 1;
    } else {
      out.values[s] = std::max(floor, t);
    }
  }
  out.values = lipschitz_envelope(cg, out.values);
  return out;
}

/// Corrector energy density distributed from edges to sites:
/// 0.5 * sum_j [aE_j(x) g_j(x)^2 + aE_j(x - e_j) g_j(x - e_j)^2], g = D phi_e (+ e if affine).
inline std::vector<double> energy_density(const CorrectorSet& cs, int direction, bool affine) {
  const LatticeGrid& g = cs.grid;
  std::vector<double> out(g.sites(), 0.0);
  for (int j = 0; j < g.dim; ++j) {
    const auto a = cs.edges.axis(j);
    const auto grad = cs.grad_phi[static_cast<std::size_t>(direction)].component(j);
    const double shift = (affine && j == direction) ? 1.0 : 0.0;
    for_each_edge(g, j, [&](std::size_t x, std::size_t y) {
      const double gv = grad[x] + shift;
      const double e = 0.5 * a[x] * gv * gv;
      out[x] += e;
      out[y] += e;
    });
  }
  return out;
}

struct SpadeResult {
  double radius = 1.0;
  bool saturated = false;
};

/// r_spade at `center`: max over coordinate directions of the smallest dyadic
/// r >= r_diamond(center) such that avg_{B_R} a|D phi_e|^2 <= C avg_{B_2R} a
/// for all dyadic R in [r, side_length/4].
inline SpadeResult compute_r_spade(const CorrectorSet& cs, double r_diamond_center, double C = 10.0,
                                   std::size_t center = 0) {
  const LatticeGrid& g = cs.grid;
  require(C > 0.0, ErrorKind::InvalidArgument, "C must be positive");
  const auto radii = dyadic_radii(max_ball_radius(g));
  SpadeResult res;
  double floor = 1.0;
  while (floor < r_diamond_center) floor *= 2.0;
  res.radius = floor;
  for (int e = 0; e < g.dim; ++e) {
    LatticeField dens(g, 1);
    dens.values = energy_density(cs, e, false);
    const double t = dyadic_threshold(radii, [&](double R, std::size_t) {
      return ball_average_at(dens, center, R) <= C * ball_average_at(cs.coefficient, center, 2.0 * R);
    });
    if (t < 0.0) {
      res.saturated = true;
      res.radius = std::max(res.radius, max_ball_radius(g));
    } else {
      res.radius = std::max(res.radius, t);
    }
  }
  return res;
}

/// r_spade at every site of the coarse grid of centres, from FFT ball averages.
inline RadiusField compute_r_spade_field(const CorrectorSet& cs, const RadiusField& r_diamond, double C = 10.0,
                                         int stride = 1) {
  const LatticeGrid& g = cs.grid;
  require(C > 0.0, ErrorKind::InvalidArgument, "C must be positive");
  require_same_grid(g, r_diamond.grid, "compute_r_spade_field: r_diamond grid");
  const LatticeGrid cg = coarse_grid(g, stride);
  const auto radii = dyadic_radii(max_ball_radius(g));
  std::vector<std::vector<double>> a2;
  for (double R : radii) a2.push_back(ball_average_all(g, cs.coefficient.values, 2.0 * R));
  RadiusField out;
  out.grid = cg;
  out.stride = stride;
  out.kind = RadiusKind::Star;
  out.params = {g.dim + 1, C, 2};
  out.values.assign(cg.sites(), 1.0);
  out.saturated.assign(cg.sites(), 0);
  for (std::size_t s = 0; s < cg.sites(); ++s) {
    double floor = 1.0;
    while (floor < r_diamond.values[fine_site(g, cg, stride, s)]) floor *= 2.0;
    out.values[s] = floor;
  }
  for (int e = 0; e < g.dim; ++e) {
    const auto dens = energy_density(cs, e, false);
    std::vector<std::vector<double>> avg;
    for (double R : radii) avg.push_back(ball_average_all(g, dens, R));
    for (std::size_t s = 0; s < cg.sites(); ++s) {
      const std::size_t x = fine_site(g, cg, stride, s);
      const double t = dyadic_threshold(radii, [&](double, std::size_t i) { return avg[i][x] <= C * a2[i][x]; });
      if (t < 0.0) {
        out.saturated[s] = 1;
        out.values[s] = std::max(out.values[s], max_ball_radius(g));
      } else {
        out.values[s] = std::max(out.values[s], t);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tail fits

enum class TailAbscissa { Log2, Log };

struct TailFit {
  double c_hat = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t sample_count = 0;
  std::size_t censored_count = 0;
  std::size_t points = 0;
};

struct TailFitOptions {
  double upper_fraction = 0.1;
  std::size_t min_exceedances = 5;
  TailAbscissa abscissa = TailAbscissa::Log2;
};

/// Least-squares fit of -log P(X >= x) against log^2(1+x) (or log(1+x)) over
/// the distinct values of the upper tail. Censored samples are counted in
/// the total but never used as tail points.
inline TailFit fit_log2_tail(const std::vector<double>& samples, const TailFitOptions& opt = {},
                             std::size_t censored = 0) {
  const auto above_one = std::count_if(samples.begin(), samples.end(), [](double x) { return x > 1.0; });
  if (above_one < 50) throw Error(ErrorKind::InsufficientTail, "fewer than 50 samples above 1");
  std::vector<double> v(samples);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size() + censored;
  const double threshold = stats::quantile(v, 1.0 - opt.upper_fraction);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] < threshold || (i > 0 && v[i] == v[i - 1])) continue;
    const std::size_t exceed = v.size() - i + censored;
    if (exceed < opt.min_exceedances) break;
    const double l = std::log1p(v[i]);
    xs.push_back(opt.abscissa == TailAbscissa::Log2 ? l * l : l);
    ys.push_back(-std::log(static_cast<double>(exceed) / static_cast<double>(n)));
  }
  if (xs.size() < 3) throw Error(ErrorKind::InsufficientTail, "fewer than 3 distinct tail values");
  const auto f = stats::linear_fit(xs, ys);
  TailFit out;
  out.c_hat = f.slope;
  out.intercept = f.intercept;
  out.r_squared = f.r_squared;
  out.sample_count = v.size();
  out.censored_count = censored;
  out.points = xs.size();
  return out;
}

// ---------------------------------------------------------------------------
// Energy-decay diagnostics for u = phi_e + e.x

/// Ball averages at `center` of a|grad(phi_e + e.x)|^2 for each radius.
inline std::vector<double> energy_profile(const CorrectorSet& cs, int direction, const std::vector<double>& radii,
                                          std::size_t center = 0) {
  LatticeField dens(cs.grid, 1);
  dens.values = energy_density(cs, direction, true);
  std::vector<double> out;
  for (double r : radii) {
    require_ball_fits(cs.grid, r);
    out.push_back(ball_average_at(dens, center, r));
  }
  return out;
}

struct HoleFillingResult {
  double beta_hat = 0.0;
  double ratio_constant = 0.0;  // max_r E(r)/E(R) / (R/r)^{d - beta_hat}
  std::vector<double> radii;
  std::vector<double> energies;  // last entry at R
};

/// Fit of log E(r) against log r; beta_hat = d + min(slope, 0) clipped to (0, d].
inline HoleFillingResult hole_filling_experiment(const CorrectorSet& cs, int direction, const std::vector<double>& r_list,
                                                 double R, std::size_t center = 0) {
  const int d = cs.grid.dim;
  HoleFillingResult res;
  res.radii = r_list;
  res.radii.push_back(R);
  res.energies = energy_profile(cs, direction, res.radii, center);
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < res.radii.size(); ++i) {
    lx.push_back(std::log(res.radii[i]));
    ly.push_back(std::log(res.energies[i]));
  }
  const double slope = res.radii.size() >= 2 ? stats::linear_fit(lx, ly).slope : 0.0;
  res.beta_hat = std::clamp(d + std::min(slope, 0.0), 1e-6, static_cast<double>(d));
  const double ER = res.energies.back();
  for (std::size_t i = 0; i + 1 < res.radii.size(); ++i) {
    const double bound = std::pow(R / res.radii[i], d - res.beta_hat);
    res.ratio_constant = std::max(res.ratio_constant, res.energies[i] / ER / bound);
  }
  return res;
}

/// Largest ratio avg_{B_r} a|grad u|^2 / avg_{B_R} a|grad u|^2 over the dyadic r in [r_min, R).
inline double mean_value_experiment(const CorrectorSet& cs, int direction, double r_min, double R,
                                    std::size_t center = 0) {
  std::vector<double> radii;
  for (double r = 1.0; r < R; r *= 2.0) {
    if (r >= r_min) radii.push_back(r);
  }
  radii.push_back(R);
  const auto e = energy_profile(cs, direction, radii, center);
  double worst = 1.0;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) worst = std::max(worst, e[i] / e.back());
  return worst;
}

}  // namespace loghom
