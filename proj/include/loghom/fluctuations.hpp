#pragma once

// Observables of correctors and of the homogenization commutator: averaged
// gradients, corrector increments, commutator pairings I_eps(F), the
// covariance tensor Q and the pathwise fluctuation residual.
//
// The lattice is the fixed microstructure. A macroscopic scale eps is
// emulated by a test-function window of 1/eps length units: a macroscopic
// test function F(x) supported in |x| < 1/2 is paired with the sample as
// F(eps y) in lattice coordinates y.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "loghom/ball.hpp"
#include "loghom/correctors.hpp"
#include "loghom/errors.hpp"
#include "loghom/fft.hpp"
#include "loghom/lattice.hpp"
#include "loghom/pde.hpp"
#include "loghom/stats.hpp"

namespace loghom {

enum class ObservableKind { GradPhiAvg, GradSigmaAvg, CorrectorIncrement, CommutatorPairing, PathwiseResidual };

inline const char* to_string(ObservableKind k) {
  switch (k) {
    case ObservableKind::GradPhiAvg: return "grad_phi_avg";
    case ObservableKind::GradSigmaAvg: return "grad_sigma_avg";
    case ObservableKind::CorrectorIncrement: return "corrector_increment";
    case ObservableKind::CommutatorPairing: return "commutator_pairing";
    case ObservableKind::PathwiseResidual: return "pathwise_residual";
  }
  return "?";
}

struct Observable {
  ObservableKind kind = ObservableKind::GradPhiAvg;
  std::string test_function;  // "ball" or "bump"
  double scale = 0.0;         // R for balls, eps for bumps, |x| for increments
  int component = 0;
  double value = 0.0;
  std::uint64_t replica = 0;
};

struct ScalingFit {
  std::vector<double> abscissae;
  std::vector<double> ordinates;  // log second moments
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Log-log fit of positive values against positive abscissae, weighted by
/// the relative standard errors when they are supplied.
inline ScalingFit fit_scaling(const std::vector<double>& x, const std::vector<double>& y,
                              const std::vector<double>& y_stderr = {}) {
  require(x.size() == y.size() && x.size() >= 3, ErrorKind::InvalidArgument, "scaling fit needs >= 3 abscissae");
  ScalingFit f;
  std::vector<double> lx, sig;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, ErrorKind::InvalidArgument, "scaling fit needs positive values");
    lx.push_back(std::log(x[i]));
    f.ordinates.push_back(std::log(y[i]));
    if (!y_stderr.empty()) sig.push_back(std::max(y_stderr[i] / y[i], 1e-12));
  }
  f.abscissae = x;
  const auto lf = y_stderr.empty() ? stats::linear_fit(lx, f.ordinates) : stats::weighted_linear_fit(lx, f.ordinates, sig);
  f.slope = lf.slope;
  f.slope_stderr = lf.slope_stderr;
  f.intercept = lf.intercept;
  f.r_squared = lf.r_squared;
  return f;
}

// ---------------------------------------------------------------------------
// Averaged gradients

/// Ball averages at `center` of D_j phi_i (component i*d + j) and, when
/// requested, of D_l sigma_ijk for the stored j < k pairs.
inline std::vector<Observable> avg_gradient_observable(const CorrectorSet& cs, double R, std::size_t center = 0,
                                                       bool include_sigma = false) {
  const LatticeGrid& g = cs.grid;
  require_ball_fits(g, R);
  const int d = g.dim;
  std::vector<Observable> out;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      out.push_back({ObservableKind::GradPhiAvg, "ball", R, i * d + j, ball_average_at(cs.grad_phi[i], center, R, j), 0});
    }
  }
  if (include_sigma) {
    for (std::size_t s = 0; s < cs.sigma_store.size(); ++s) {
      const LatticeField gs = gradient(cs.sigma_store[s]);
      for (int l = 0; l < d; ++l) {
        out.push_back({ObservableKind::GradSigmaAvg, "ball", R, static_cast<int>(s) * d + l,
                       ball_average_at(gs, center, R, l), 0});
      }
    }
  }
  return out;
}

/// Spatial mean over all centres of |avg_{B_R} D phi_e|^2. By stationarity
/// its expectation equals the second moment at a single centre.
inline double clt_second_moment(const CorrectorSet& cs, double R, int direction = 0) {
  const LatticeGrid& g = cs.grid;
  require_ball_fits(g, R);
  double acc = 0.0;
  for (int j = 0; j < g.dim; ++j) {
    const auto avg = ball_average_all(g, cs.grad_phi[static_cast<std::size_t>(direction)].component(j), R);
    for (double v : avg) acc += v * v;
  }
  return acc / static_cast<double>(g.sites());
}

// ---------------------------------------------------------------------------
// Corrector growth

namespace detail {

inline double corrector_ball_norm_p(int d) {
  const double pd = d + 1.0;
  return 2.0 * pd / (pd - 1.0);
}

}  // namespace detail

/// (avg_{B_1(x)} |(phi, sigma) - avg_{B_1(ref)} (phi, sigma)|^p)^{1/p}, p = 2(d+1)/d.
inline Observable corrector_growth_observable(const CorrectorSet& cs, std::size_t x, std::size_t ref = 0) {
  const LatticeGrid& g = cs.grid;
  const LatticeField w = cs.phi_sigma();
  const double p = detail::corrector_ball_norm_p(g.dim);
  const auto ref_sites = ball_sites(g, ref, 1.0);
  const auto x_sites = ball_sites(g, x, 1.0);
  std::vector<double> m(static_cast<std::size_t>(w.components), 0.0);
  for (int c = 0; c < w.components; ++c) {
    for (std::size_t s : ref_sites) m[static_cast<std::size_t>(c)] += w.at(s, c);
    m[static_cast<std::size_t>(c)] /= static_cast<double>(ref_sites.size());
  }
  double acc = 0.0;
  for (std::size_t s : x_sites) {
    double d2 = 0.0;
    for (int c = 0; c < w.components; ++c) {
      const double dv = w.at(s, c) - m[static_cast<std::size_t>(c)];
      d2 += dv * dv;
    }
    acc += std::pow(d2, 0.5 * p);
  }
  const double value = std::pow(acc / static_cast<double>(x_sites.size()), 1.0 / p);
  return {ObservableKind::CorrectorIncrement, "ball", g.distance(x, ref), 0, value, 0};
}

/// Spatial mean over all reference sites z and all axes of the squared
/// growth observable at x = z + t e_axis. `t` must be a multiple of the spacing.
inline double corrector_growth_second_moment(const CorrectorSet& cs, double t) {
  const LatticeGrid& g = cs.grid;
  const double steps = t / g.spacing();
  const int k = static_cast<int>(std::lround(steps));
  require(std::abs(steps - k) < 1e-9, ErrorKind::InvalidArgument, "offset must be a multiple of the spacing");
  require(t <= max_ball_radius(g) * (1.0 + 1e-12), ErrorKind::BallTooLarge, "offset exceeds side_length/4");
  const LatticeField w = cs.phi_sigma();
  const double p = detail::corrector_ball_norm_p(g.dim);
  LatticeField m = ball_average_field(w, 1.0);
  const auto offsets = ball_offsets(g, 1.0);
  double acc = 0.0;
  for (std::size_t z = 0; z < g.sites(); ++z) {
    const Coord cz = g.coords(z);
    for (int axis = 0; axis < g.dim; ++axis) {
      Coord cx = cz;
      cx[axis] += k;
      double sum = 0.0;
      for (const Coord& o : offsets) {
        const std::size_t s = g.site({cx[0] + o[0], cx[1] + o[1], cx[2] + o[2]});
        double d2 = 0.0;
        for (int c = 0; c < w.components; ++c) {
          const double dv = w.at(s, c) - m.at(z, c);
          d2 += dv * dv;
        }
        sum += std::pow(d2, 0.5 * p);
      }
      const double v = std::pow(sum / static_cast<double>(offsets.size()), 1.0 / p);
      acc += v * v;
    }
  }
  return acc / static_cast<double>(g.sites() * static_cast<std::size_t>(g.dim));
}

/// Growth rate mu_d(t): sqrt(t+1) for d = 1, log(t+2)^{1/2} for d = 2, 1 for d >= 3.
inline double mu_d(int d, double t) {
  if (d == 1) return std::sqrt(t + 1.0);
  if (d == 2) return std::sqrt(std::log(t + 2.0));
  return 1.0;
}

/// Fit of second moments against mu_d(t)^2: A + B (t+1) in d = 1, A + B log(t+2) in d = 2.
inline stats::LinearFit fit_growth(int d, const std::vector<double>& t, const std::vector<double>& second_moment) {
  std::vector<double> x;
  for (double v : t) x.push_back(mu_d(d, v) * mu_d(d, v));
  return stats::linear_fit(x, second_moment);
}

// ---------------------------------------------------------------------------
// Homogenization commutator

struct CommutatorField {
  LatticeField xi;  // component i*d + k holds [Xi_i]_k, cell centred
  Eigen::MatrixXd ahom_used;
  std::uint64_t source = 0;
};

/// [Xi]_i = (a - ahom)(D phi_i + e_i) from cell-centred flux and gradient.
inline CommutatorField build_commutator(const CorrectorSet& cs, const Eigen::MatrixXd& ahom) {
  const LatticeGrid& g = cs.grid;
  const int d = g.dim;
  require(ahom.rows() == d && ahom.cols() == d, ErrorKind::InvalidArgument, "ahom must be d x d");
  CommutatorField out;
  out.xi = LatticeField(g, d * d);
  out.ahom_used = ahom;
  out.source = cs.coefficient.meta.seed;
  for (int i = 0; i < d; ++i) {
    const LatticeField qc = cell_centered(cs.flux[static_cast<std::size_t>(i)]);
    LatticeField gc = cell_centered(cs.grad_phi[static_cast<std::size_t>(i)]);
    for (auto& v : gc.component(i)) v += 1.0;
    for (int k = 0; k < d; ++k) {
      auto x = out.xi.component(i * d + k);
      const auto q = qc.component(k);
      for (std::size_t s = 0; s < x.size(); ++s) {
        double v = q[s];
        for (int m = 0; m < d; ++m) v -= ahom(k, m) * gc.at(s, m);
        x[s] = v;
      }
    }
  }
  return out;
}

/// Compact bump exp(-1/(1 - 4|x|^2)) supported in |x| < 1/2.
inline double bump(double r) {
  const double t = 1.0 - 4.0 * r * r;
  return t > 0.0 ? std::exp(-1.0 / t) : 0.0;
}

/// Site weights chi(eps (y - center)) of the bump for window 1/eps, which
/// must span at least `min_cells` lattice cells.
inline std::vector<double> bump_weights(const LatticeGrid& g, double eps, std::size_t center = 0,
                                        double min_cells = 8.0) {
  require(eps > 0.0, ErrorKind::InvalidArgument, "eps must be positive");
  require(1.0 / eps >= min_cells * g.spacing() * (1.0 - 1e-12), ErrorKind::ScaleMismatch,
          "test-function window below " + std::to_string(static_cast<int>(min_cells)) + " lattice cells");
  require(1.0 / eps <= g.side_length * (1.0 + 1e-12), ErrorKind::ScaleMismatch,
          "test-function window exceeds the torus");
  std::vector<double> w(g.sites());
  for (std::size_t s = 0; s < w.size(); ++s) w[s] = bump(eps * g.distance(s, center));
  return w;
}

/// Discrete squared L^2 norm of the macroscopic bump: eps^d sum_y h^d chi(eps y)^2.
inline double bump_norm2(const LatticeGrid& g, double eps) {
  double s = 0.0;
  for (double v : bump_weights(g, eps)) s += v * v;
  return s * g.cell_volume() * std::pow(eps, g.dim);
}

/// I_eps(F) for F = chi M: eps^{d/2} sum_y h^d Xi(y) : M chi(eps (y - center)).
inline Observable commutator_observable(const CommutatorField& xi, const Eigen::MatrixXd& M, double eps,
                                        std::size_t center = 0) {
  const LatticeGrid& g = xi.xi.grid;
  const int d = g.dim;
  require(M.rows() == d && M.cols() == d, ErrorKind::InvalidArgument, "test tensor must be d x d");
  const auto w = bump_weights(g, eps, center);
  double acc = 0.0;
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      if (M(i, k) == 0.0) continue;
      const auto x = xi.xi.component(i * d + k);
      double s = 0.0;
      for (std::size_t y = 0; y < w.size(); ++y) s += x[y] * w[y];
      acc += M(i, k) * s;
    }
  }
  const double value = std::pow(eps, 0.5 * d) * g.cell_volume() * acc;
  return {ObservableKind::CommutatorPairing, "bump", eps, 0, value, xi.source};
}

/// I_eps(F) for every centre at once (FFT convolution with the bump).
inline std::vector<double> commutator_pairing_all(const CommutatorField& xi, const Eigen::MatrixXd& M, double eps) {
  const LatticeGrid& g = xi.xi.grid;
  const int d = g.dim;
  const auto kernel = rfft(g, bump_weights(g, eps, 0));
  std::vector<double> combo(g.sites(), 0.0);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      if (M(i, k) == 0.0) continue;
      const auto x = xi.xi.component(i * d + k);
      for (std::size_t s = 0; s < combo.size(); ++s) combo[s] += M(i, k) * x[s];
    }
  }
  auto spec = rfft(g, combo);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= kernel[k];
  auto out = irfft(g, spec);
  const double scale = std::pow(eps, 0.5 * d) * g.cell_volume();
  for (double& v : out) v *= scale;
  return out;
}

/// Coordinate test tensors e_i (x) e_k, indexed i*d + k.
inline std::vector<Eigen::MatrixXd> coordinate_test_tensors(int d) {
  std::vector<Eigen::MatrixXd> out;
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(d, d);
      M(i, k) = 1.0;
      out.push_back(M);
    }
  }
  return out;
}

struct QEstimate {
  Eigen::MatrixXd Q;         // d^2 x d^2, (i*d+k, j*d+l) = Q_ikjl
  Eigen::MatrixXd stderr_;   // same shape
  double symmetry_defect = 0.0;  // max |C_ab - C_ba| / stderr before symmetrization
};

/// Least-squares estimate of the symmetric tensor Q from replica samples of
/// I_eps(F_a), F_a = chi M_a: cov(I(F_a), I(F_b)) ~ |chi|^2 M_a : Q : M_b.
/// samples[a][r] is the pairing of test tensor a on replica r.
inline QEstimate estimate_Q(const std::vector<Eigen::MatrixXd>& tensors,
                            const std::vector<std::vector<double>>& samples, double chi_norm2) {
  require(tensors.size() >= 2 && tensors.size() == samples.size(), ErrorKind::InvalidArgument,
          "estimate_Q needs >= 2 test tensors with samples");
  const int d = static_cast<int>(tensors.front().rows());
  const int D = d * d;
  const std::size_t reps = samples.front().size();
  for (const auto& s : samples) require(s.size() == reps && reps >= 2, ErrorKind::InvalidArgument, "replica sets differ");
  // unknowns: upper triangle of the symmetric D x D matrix
  std::vector<std::pair<int, int>> unknowns;
  for (int p = 0; p < D; ++p) {
    for (int q = p; q < D; ++q) unknowns.emplace_back(p, q);
  }
  const std::size_t nf = tensors.size();
  std::vector<std::pair<std::size_t, std::size_t>> eqs;
  for (std::size_t a = 0; a < nf; ++a) {
    for (std::size_t b = a; b < nf; ++b) eqs.emplace_back(a, b);
  }
  Eigen::MatrixXd A(static_cast<Eigen::Index>(eqs.size()), static_cast<Eigen::Index>(unknowns.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(eqs.size()));
  Eigen::VectorXd sig(static_cast<Eigen::Index>(eqs.size()));
  QEstimate est;
  for (std::size_t e = 0; e < eqs.size(); ++e) {
    const auto [a, b] = eqs[e];
    const auto& Ma = tensors[a];
    const auto& Mb = tensors[b];
    for (std::size_t u = 0; u < unknowns.size(); ++u) {
      const auto [p, q] = unknowns[u];
      double c = Ma(p / d, p % d) * Mb(q / d, q % d);
      if (p != q) c += Ma(q / d, q % d) * Mb(p / d, p % d);
      A(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(u)) = chi_norm2 * c;
    }
    const double cab = stats::covariance(samples[a], samples[b]);
    const double cba = stats::covariance(samples[b], samples[a]);
    const double s = std::max(stats::stderr_of_covariance(samples[a], samples[b]), 1e-300);
    est.symmetry_defect = std::max(est.symmetry_defect, std::abs(cab - cba) / s);
    y(static_cast<Eigen::Index>(e)) = 0.5 * (cab + cba);
    sig(static_cast<Eigen::Index>(e)) = s;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < static_cast<Eigen::Index>(unknowns.size())) {
    throw Error(ErrorKind::RankDeficient, "test tensors do not identify every component of Q");
  }
  const Eigen::VectorXd x = qr.solve(y);
  const Eigen::MatrixXd pinv = (A.transpose() * A).inverse() * A.transpose();
  const Eigen::VectorXd var = (pinv * sig.cwiseAbs2().asDiagonal() * pinv.transpose()).diagonal();
  est.Q = Eigen::MatrixXd::Zero(D, D);
  est.stderr_ = Eigen::MatrixXd::Zero(D, D);
  for (std::size_t u = 0; u < unknowns.size(); ++u) {
    const auto [p, q] = unknowns[u];
    est.Q(p, q) = est.Q(q, p) = x(static_cast<Eigen::Index>(u));
    est.stderr_(p, q) = est.stderr_(q, p) = std::sqrt(std::max(var(static_cast<Eigen::Index>(u)), 0.0));
  }
  return est;
}

/// M : Q : M for a test tensor M.
inline double q_form(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& M) {
  const auto D = M.size();
  Eigen::VectorXd v(D);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index k = 0; k < M.cols(); ++k) v(i * M.cols() + k) = M(i, k);
  }
  return v.dot(Q * v);
}

// ---------------------------------------------------------------------------
// Pathwise fluctuations

struct PathwiseSample {
  double eps = 0.0;
  double solution_pairing = 0.0;    // eps^{-d/2} int g . Xi_eps(f)
  double commutator_pairing = 0.0;  // eps^{-d/2} int grad vbar . Xi(./eps) grad ubar
  SolveReport report;
};

/// Vector field chi(eps y) e_dir on sites (the macroscopic chi e_dir seen in lattice coordinates).
inline LatticeField bump_vector_field(const LatticeGrid& g, double eps, int dir, double min_cells = 8.0) {
  LatticeField f(g, g.dim);
  const auto w = bump_weights(g, eps, 0, min_cells);
  std::copy(w.begin(), w.end(), f.component(dir).begin());
  return f;
}

/// One replica of the pathwise comparison for f = chi e_f, g = chi e_g.
inline PathwiseSample pathwise_fluctuation_experiment(const CorrectorSet& cs, const CommutatorField& xi, int f_dir,
                                                      int g_dir, double eps, const SolveOptions& opt = {}) {
  const LatticeGrid& g = cs.grid;
  const int d = g.dim;
  const Eigen::MatrixXd& ahom = xi.ahom_used;
  const LatticeField f = bump_vector_field(g, eps, f_dir);
  const LatticeField gv = bump_vector_field(g, eps, g_dir);
  SolveResult U = solve_divform(cs.edges, nullptr, &f, opt);
  // Xi_eps(f) = (a - ahom) grad u_eps, cell centred
  LatticeField flux = gradient(U.u);
  const LatticeField grad_u = flux;
  for (int j = 0; j < d; ++j) {
    const auto a = cs.edges.axis(j);
    auto c = flux.component(j);
    for (std::size_t s = 0; s < c.size(); ++s) c[s] *= a[s];
  }
  const LatticeField qc = cell_centered(flux);
  const LatticeField gc = cell_centered(grad_u);
  const LatticeField ubar = solve_constant_coefficient(ahom, f);
  const LatticeField vbar = solve_constant_coefficient(ahom.transpose(), gv);
  const LatticeField du = cell_centered(gradient(ubar));
  const LatticeField dv = cell_centered(gradient(vbar));
  const auto gw = gv.component(g_dir);
  double p1 = 0.0, p2 = 0.0;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    double xe = qc.at(s, g_dir);
    for (int m = 0; m < d; ++m) xe -= ahom(g_dir, m) * gc.at(s, m);
    p1 += gw[s] * xe;
    for (int i = 0; i < d; ++i) {
      for (int k = 0; k < d; ++k) p2 += dv.at(s, k) * xi.xi.at(s, i * d + k) * du.at(s, i);
    }
  }
  const double scale = std::pow(eps, 0.5 * d) * g.cell_volume();
  PathwiseSample out;
  out.eps = eps;
  out.solution_pairing = scale * p1;
  out.commutator_pairing = scale * p2;
  out.report = U.report;
  return out;
}

struct PathwiseSummary {
  double eps = 0.0;
  double residual_rms = 0.0;          // sqrt(mean residual^2)
  double residual_rms_stderr = 0.0;
  double mean_inflation = 0.0;        // stderr of the replica mean that replaces the expectation
  double solution_pairing_variance = 0.0;
  std::vector<double> residuals;
};

/// Residuals |P1 - mean(P1) - P2| with the expectation replaced by the replica mean.
inline PathwiseSummary summarize_pathwise(const std::vector<PathwiseSample>& samples) {
  require(samples.size() >= 2, ErrorKind::InvalidArgument, "pathwise summary needs >= 2 replicas");
  PathwiseSummary out;
  out.eps = samples.front().eps;
  std::vector<double> p1;
  for (const auto& s : samples) p1.push_back(s.solution_pairing);
  const double m = stats::mean(p1);
  std::vector<double> sq;
  for (const auto& s : samples) {
    const double r = std::abs(s.solution_pairing - m - s.commutator_pairing);
    out.residuals.push_back(r);
    sq.push_back(r * r);
  }
  const double ms = stats::mean(sq);
  out.residual_rms = std::sqrt(ms);
  out.residual_rms_stderr = ms > 0.0 ? 0.5 * stats::stderr_of_mean(sq) / std::sqrt(ms) : 0.0;
  out.mean_inflation = stats::stderr_of_mean(p1);
  out.solution_pairing_variance = stats::variance(p1);
  return out;
}

}  // namespace loghom
