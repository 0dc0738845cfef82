#pragma once

// Replica-parallel experiment runner. Every replica is a pure function of
// (config, master seed, replica index); the summary is a sequential
// reduction over the immutable records.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "loghom/ball.hpp"
#include "loghom/config.hpp"
#include "loghom/correctors.hpp"
#include "loghom/errors.hpp"
#include "loghom/field.hpp"
#include "loghom/fluctuations.hpp"
#include "loghom/io.hpp"
#include "loghom/radii.hpp"
#include "loghom/rng.hpp"
#include "loghom/stats.hpp"
#include "loghom/twoscale.hpp"

namespace loghom {

inline constexpr const char* kVersion = "0.1.0";

/// Stream id of the pilot ensemble used to pool ahom before commutators are built.
inline constexpr std::uint32_t kPilotStream = 1;

struct Record {
  std::string experiment;
  std::string kind;
  std::string params;
  double scale = 0.0;  // R, eps, |x|, p or r
  std::uint64_t replica = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
};

struct SolveRecord {
  std::uint64_t replica = 0;
  std::string label;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  std::optional<double> truncation_M;
};

struct ReplicaFailure {
  std::uint64_t replica = 0;
  std::string error_kind;
  std::string message;
};

struct FitRow {
  std::string kind;
  std::string params;
  double estimate = 0.0;  // slope or c_hat
  double stderr_ = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t n = 0;
  std::size_t censored = 0;
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct RunSummary {
  std::uint64_t config_hash = 0;
  std::string experiment;
  std::vector<Record> records;
  std::vector<SolveRecord> solves;
  std::vector<ReplicaFailure> failures;
  std::vector<FitRow> fits;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<Check> checks;
  int replicas_requested = 0;
  int replicas_ok = 0;
  bool failure_threshold_exceeded = false;
  double wall_seconds = 0.0;

  double metric(const std::string& name) const {
    for (const auto& [k, v] : metrics) {
      if (k == name) return v;
    }
    throw Error(ErrorKind::InvalidArgument, "no metric named " + name);
  }
  bool has_metric(const std::string& name) const {
    return std::any_of(metrics.begin(), metrics.end(), [&](const auto& m) { return m.first == name; });
  }
};

struct ReplicaOutput {
  std::vector<Record> records;
  std::vector<SolveRecord> solves;
};

struct RunContext {
  const ExperimentConfig& cfg;
  LatticeGrid grid;
  std::optional<Eigen::MatrixXd> ahom;  // pooled pilot estimate
};

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

inline SolveOptions solve_options(const ExperimentConfig& c) {
  SolveOptions o;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  return o;
}

inline CorrectorOptions corrector_options(const ExperimentConfig& c, bool sigma) {
  CorrectorOptions o;
  o.solve = solve_options(c);
  o.truncation_M = c.trunc_M;
  o.edge_rule = c.edge_rule;
  o.compute_sigma = sigma;
  return o;
}

inline RngKey replica_key(const ExperimentConfig& c, std::uint64_t replica) {
  return RngKey{c.seed, static_cast<std::uint32_t>(replica), 0};
}

inline CorrectorSet replica_correctors(const RunContext& ctx, std::uint64_t replica, bool sigma, ReplicaOutput& out,
                                       LatticeField* raw = nullptr) {
  LatticeField a = sample_coefficient(ctx.grid, ctx.cfg.cov, replica_key(ctx.cfg, replica));
  CorrectorSet cs = compute_correctors(a, corrector_options(ctx.cfg, sigma));
  for (std::size_t i = 0; i < cs.reports.size(); ++i) {
    const auto& r = cs.reports[i];
    out.solves.push_back({replica, "corrector_" + std::to_string(i), r.iterations, r.relative_residual, r.converged,
                          r.truncation_M});
  }
  if (raw) *raw = std::move(a);
  return cs;
}

inline std::vector<double> scales_or(const ExperimentConfig& c, std::vector<double> fallback) {
  return c.scales.empty() ? fallback : c.scales;
}

inline std::vector<double> dyadic_up_to(double lo, double hi) {
  std::vector<double> out;
  for (double r = lo; r <= hi * (1.0 + 1e-12); r *= 2.0) out.push_back(r);
  return out;
}

}  // namespace detail

/// Scale list a kind uses when the config leaves `scales` empty.
inline std::vector<double> default_scales(const ExperimentConfig& c) {
  const double L = c.grid_length();
  const std::string& k = c.kind;
  if (k == "sample-field") return {1.0, 2.0, 3.0};
  if (k == "clt-scaling") return detail::dyadic_up_to(8.0, L / 4.0);
  if (k == "corrector-growth") return detail::dyadic_up_to(4.0, L / 4.0);
  if (k == "radii") return detail::dyadic_up_to(16.0, L / 4.0);
  if (k == "commutator") return {1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0};
  if (k == "pathwise") return {1.0 / 8.0, 1.0 / 16.0};
  if (k == "two-scale") return {1.0 / 4.0, 1.0 / 8.0, 1.0 / 16.0};
  if (k == "hole-filling") return detail::dyadic_up_to(1.0, c.outer() / 2.0);
  return {};
}

inline std::vector<double> effective_scales(const ExperimentConfig& c) {
  return detail::scales_or(c, default_scales(c));
}

// ---------------------------------------------------------------------------
// Per-replica kernels

namespace kernels {

using detail::fmt;

inline ReplicaOutput sample_field(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  const LatticeField G = sample_gaussian_field(ctx.grid, c.cov, detail::replica_key(c, r));
  const LatticeField a = exp_field(G);
  const std::uint64_t seed = G.meta.seed;
  double gm = 0.0, g2 = 0.0;
  for (double v : G.values) {
    gm += v;
    g2 += v * v;
  }
  const double N = static_cast<double>(G.values.size());
  out.records.push_back({c.kind, "g_mean", "", 0.0, r, seed, gm / N});
  out.records.push_back({c.kind, "g_second_moment", "", 0.0, r, seed, g2 / N});
  for (double p : effective_scales(c)) {
    double s = 0.0;
    for (double v : a.values) s += std::pow(v, p);
    out.records.push_back({c.kind, "moment", "p=" + fmt(p), p, r, seed, s / N});
  }
  if (c.trunc_M) out.records.push_back({c.kind, "clamped_fraction", "M=" + fmt(*c.trunc_M), *c.trunc_M, r, seed, clamped_fraction(a, *c.trunc_M)});
  if (c.write_fields && r == 0 && !c.out.empty()) {
    std::filesystem::create_directories(c.out);
    write_field_binary(std::filesystem::path(c.out) / "field_0.bin", a);
  }
  return out;
}

inline ReplicaOutput correctors(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, true, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  const int d = ctx.grid.dim;
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      out.records.push_back({c.kind, "ahom", std::to_string(i) + std::to_string(k), 0.0, r, seed, cs.ahom_sample(i, k)});
    }
  }
  double inv = 0.0, arith = 0.0;
  for (double v : cs.coefficient.values) {
    inv += 1.0 / v;
    arith += v;
  }
  const double N = static_cast<double>(cs.coefficient.values.size());
  out.records.push_back({c.kind, "harmonic_mean", "", 0.0, r, seed, N / inv});
  out.records.push_back({c.kind, "arithmetic_mean", "", 0.0, r, seed, arith / N});
  out.records.push_back({c.kind, "sigma_residual", "", 0.0, r, seed, cs.sigma_reconstruction_residual});
  double phi_max = 0.0;
  for (const auto& p : cs.phi) phi_max = std::max(phi_max, p.max_abs());
  out.records.push_back({c.kind, "phi_max_abs", "", 0.0, r, seed, phi_max});
  if (c.write_fields && r == 0 && !c.out.empty()) {
    write_corrector_set(std::filesystem::path(c.out) / "correctors_0", cs,
                        {{"config_hash", std::to_string(config_hash(c))}, {"replica", "0"}});
  }
  return out;
}

inline ReplicaOutput radii(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  LatticeField a;
  CorrectorSet cs = detail::replica_correctors(ctx, r, true, out, &a);
  const std::uint64_t seed = a.meta.seed;
  const int d = ctx.grid.dim;
  const int stride = c.stride();
  const RadiusField rd = compute_r_diamond(a, lognormal_moment_sum(c.cov.amplitude, d + 1.0), c.C_d);
  const LatticeGrid cg = coarse_grid(ctx.grid, stride);
  auto emit = [&](const std::string& kind, const RadiusField& f, bool fine) {
    for (std::size_t s = 0; s < cg.sites(); ++s) {
      const std::size_t idx = fine ? fine_site(ctx.grid, cg, stride, s) : s;
      out.records.push_back({c.kind, f.saturated[idx] ? kind + "_censored" : kind, "", 0.0, r, seed, f.values[idx]});
    }
  };
  emit("r_diamond", rd, true);
  emit("r_star", compute_r_star(cs, rd, c.C_star, stride), false);
  emit("r_spade", compute_r_spade_field(cs, rd, c.C_spade, stride), false);
  for (double R : effective_scales(c)) {
    for (std::size_t s = 0; s < cg.sites(); ++s) {
      const double v = compute_r_club(a, R, c.eps_club, fine_site(ctx.grid, cg, stride, s));
      out.records.push_back({c.kind, "r_club", "R=" + fmt(R), R, r, seed, v});
    }
  }
  return out;
}

inline ReplicaOutput clt_scaling(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, false, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  for (double R : effective_scales(c)) {
    out.records.push_back({c.kind, "clt_m2", "R=" + fmt(R), R, r, seed, clt_second_moment(cs, R, 0)});
  }
  for (int i = 0; i < ctx.grid.dim; ++i) {
    out.records.push_back({c.kind, "ahom", std::to_string(i) + std::to_string(i), 0.0, r, seed, cs.ahom_sample(i, i)});
  }
  return out;
}

inline ReplicaOutput corrector_growth(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, true, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  for (double t : effective_scales(c)) {
    out.records.push_back({c.kind, "growth_m2", "x=" + fmt(t), t, r, seed, corrector_growth_second_moment(cs, t)});
  }
  return out;
}

inline ReplicaOutput commutator(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, false, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  const CommutatorField xi = build_commutator(cs, *ctx.ahom);
  const auto tensors = coordinate_test_tensors(ctx.grid.dim);
  for (int i = 0; i < ctx.grid.dim; ++i) {
    for (int k = 0; k < ctx.grid.dim; ++k) {
      out.records.push_back({c.kind, "xi_mean", std::to_string(i) + std::to_string(k), 0.0, r, seed,
                             xi.xi.mean(i * ctx.grid.dim + k)});
    }
  }
  for (double eps : effective_scales(c)) {
    for (std::size_t t = 0; t < tensors.size(); ++t) {
      const std::string params = "F=" + std::to_string(t);
      out.records.push_back({c.kind, "pairing", params, eps, r, seed, commutator_observable(xi, tensors[t], eps).value});
      const auto all = commutator_pairing_all(xi, tensors[t], eps);
      double m2 = 0.0;
      for (double v : all) m2 += v * v;
      out.records.push_back({c.kind, "pairing_m2", params, eps, r, seed, m2 / static_cast<double>(all.size())});
    }
  }
  return out;
}

inline ReplicaOutput pathwise(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, false, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  const CommutatorField xi = build_commutator(cs, *ctx.ahom);
  for (double eps : effective_scales(c)) {
    const auto s = pathwise_fluctuation_experiment(cs, xi, 0, 0, eps, detail::solve_options(c));
    out.records.push_back({c.kind, "pathwise_p1", "eps=" + fmt(eps), eps, r, seed, s.solution_pairing});
    out.records.push_back({c.kind, "pathwise_p2", "eps=" + fmt(eps), eps, r, seed, s.commutator_pairing});
    out.solves.push_back({r, "pathwise_eps=" + fmt(eps), s.report.iterations, s.report.relative_residual,
                          s.report.converged, c.trunc_M});
  }
  return out;
}

inline ReplicaOutput two_scale(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, false, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  for (double eps : effective_scales(c)) {
    const auto s = two_scale_sample(cs, *ctx.ahom, eps, 0, detail::solve_options(c));
    out.records.push_back({c.kind, "twoscale_err2", "eps=" + fmt(eps), eps, r, seed, s.error2});
    out.records.push_back({c.kind, "energy_residual", "eps=" + fmt(eps), eps, r, seed, s.energy_residual});
    out.solves.push_back({r, "two_scale_eps=" + fmt(eps), s.report.iterations, s.report.relative_residual,
                          s.report.converged, c.trunc_M});
  }
  return out;
}

inline ReplicaOutput hole_filling(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  CorrectorSet cs = detail::replica_correctors(ctx, r, false, out);
  const std::uint64_t seed = cs.coefficient.meta.seed;
  const double R = c.outer();
  const auto res = hole_filling_experiment(cs, 0, effective_scales(c), R);
  for (std::size_t i = 0; i < res.radii.size(); ++i) {
    out.records.push_back({c.kind, "hf_energy", "r=" + fmt(res.radii[i]), res.radii[i], r, seed, res.energies[i]});
  }
  out.records.push_back({c.kind, "hf_beta", "", R, r, seed, res.beta_hat});
  return out;
}

inline ReplicaOutput mean_value(const RunContext& ctx, std::uint64_t r) {
  ReplicaOutput out;
  const auto& c = ctx.cfg;
  LatticeField a;
  CorrectorSet cs = detail::replica_correctors(ctx, r, true, out, &a);
  const std::uint64_t seed = a.meta.seed;
  const RadiusField rd = compute_r_diamond(a, lognormal_moment_sum(c.cov.amplitude, ctx.grid.dim + 1.0), c.C_d);
  const RadiusField rs = compute_r_star(cs, rd, c.C_star, c.stride());
  const double r0 = rs.values[0];
  const double R2 = c.outer();
  const double R1 = R2 / 2.0;
  out.records.push_back({c.kind, "r_star_origin", "", 0.0, r, seed, r0});
  out.records.push_back({c.kind, "mv_ratio_star", "R=" + fmt(R1), R1, r, seed, mean_value_experiment(cs, 0, r0, R1)});
  out.records.push_back({c.kind, "mv_ratio_all", "R=" + fmt(R1), R1, r, seed, mean_value_experiment(cs, 0, 1.0, R1)});
  out.records.push_back({c.kind, "mv_ratio_star", "R=" + fmt(R2), R2, r, seed, mean_value_experiment(cs, 0, r0, R2)});
  return out;
}

}  // namespace kernels

using ReplicaKernel = std::function<ReplicaOutput(const RunContext&, std::uint64_t)>;

inline ReplicaKernel kernel_for(const std::string& kind) {
  if (kind == "sample-field") return kernels::sample_field;
  if (kind == "correctors") return kernels::correctors;
  if (kind == "radii") return kernels::radii;
  if (kind == "clt-scaling") return kernels::clt_scaling;
  if (kind == "corrector-growth") return kernels::corrector_growth;
  if (kind == "commutator") return kernels::commutator;
  if (kind == "pathwise") return kernels::pathwise;
  if (kind == "two-scale") return kernels::two_scale;
  if (kind == "hole-filling") return kernels::hole_filling;
  if (kind == "mean-value") return kernels::mean_value;
  throw Error(ErrorKind::ConfigError, "unknown experiment kind '" + kind + "'");
}

inline bool needs_pooled_ahom(const std::string& kind) {
  return kind == "commutator" || kind == "pathwise" || kind == "two-scale";
}

// ---------------------------------------------------------------------------
// Reduction helpers

/// Values of one record kind grouped by scale (sorted), each in replica order.
inline std::map<double, std::vector<double>> values_by_scale(const std::vector<Record>& recs, const std::string& kind,
                                                             const std::string& params = "") {
  std::map<double, std::vector<double>> out;
  for (const auto& r : recs) {
    if (r.kind == kind && (params.empty() || r.params == params)) out[r.scale].push_back(r.value);
  }
  return out;
}

inline std::vector<double> values_of(const std::vector<Record>& recs, const std::string& kind,
                                     const std::string& params = "") {
  std::vector<double> out;
  for (const auto& r : recs) {
    if (r.kind == kind && (params.empty() || r.params == params)) out.push_back(r.value);
  }
  return out;
}

/// Pooled ahom (mean of per-sample matrices) from `count` pilot replicas.
inline Eigen::MatrixXd pilot_ahom(const ExperimentConfig& c, const LatticeGrid& g, int count) {
  std::vector<Eigen::MatrixXd> samples;
  for (int k = 0; k < count; ++k) {
    LatticeField a = sample_coefficient(g, c.cov, RngKey{c.seed, static_cast<std::uint32_t>(k), kPilotStream});
    samples.push_back(compute_correctors(a, detail::corrector_options(c, false)).ahom_sample);
  }
  return estimate_ahom(samples).mean;
}

// ---------------------------------------------------------------------------
// Summaries

namespace summaries {

using detail::fmt;

inline void add_metric(RunSummary& s, const std::string& k, double v) { s.metrics.emplace_back(k, v); }

inline void add_check(RunSummary& s, const std::string& name, bool ok, const std::string& detail) {
  s.checks.push_back({name, ok, detail});
}

inline void sample_field(const ExperimentConfig& c, RunSummary& s) {
  for (const auto& [p, v] : values_by_scale(s.records, "moment")) {
    if (v.size() < 2) continue;
    const double m = stats::mean(v), se = stats::stderr_of_mean(v);
    const double exact = std::exp(0.5 * c.cov.amplitude * p * p);
    const double z = se > 0.0 ? (m - exact) / se : (m == exact ? 0.0 : INFINITY);
    add_metric(s, "moment_p" + fmt(p) + "_mean", m);
    add_metric(s, "moment_p" + fmt(p) + "_stderr", se);
    add_metric(s, "moment_p" + fmt(p) + "_exact", exact);
    add_metric(s, "moment_p" + fmt(p) + "_z", z);
    add_check(s, "moment p=" + fmt(p) + " within 3 stderr of exp(C(0)p^2/2)", std::abs(z) <= 3.0,
              "z=" + fmt(z));
  }
  const auto g2 = values_of(s.records, "g_second_moment");
  if (!g2.empty()) add_metric(s, "g_variance", stats::mean(g2));
}

inline Eigen::MatrixXd ahom_from_records(const RunSummary& s, int d, Eigen::MatrixXd* stderr_ = nullptr) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  if (stderr_) *stderr_ = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      const auto v = values_of(s.records, "ahom", std::to_string(i) + std::to_string(k));
      if (v.empty()) continue;
      m(i, k) = stats::mean(v);
      if (stderr_) (*stderr_)(i, k) = stats::stderr_of_mean(v);
    }
  }
  return m;
}

inline void correctors(const ExperimentConfig& c, RunSummary& s) {
  const int d = c.dim;
  Eigen::MatrixXd se;
  const Eigen::MatrixXd m = ahom_from_records(s, d, &se);
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      add_metric(s, "ahom_" + std::to_string(i) + std::to_string(k), m(i, k));
      add_metric(s, "ahom_" + std::to_string(i) + std::to_string(k) + "_stderr", se(i, k));
    }
  }
  const auto h = values_of(s.records, "harmonic_mean");
  const auto a = values_of(s.records, "arithmetic_mean");
  if (h.size() >= 2) {
    const double hm = stats::mean(h), am = stats::mean(a);
    add_metric(s, "harmonic_mean", hm);
    add_metric(s, "harmonic_mean_stderr", stats::stderr_of_mean(h));
    add_metric(s, "arithmetic_mean", am);
    add_metric(s, "arithmetic_mean_stderr", stats::stderr_of_mean(a));
    bool ok = true;
    for (int i = 0; i < d; ++i) {
      const double lo_tol = 3.0 * std::hypot(se(i, i), stats::stderr_of_mean(h));
      const double hi_tol = 3.0 * std::hypot(se(i, i), stats::stderr_of_mean(a));
      ok = ok && m(i, i) >= hm - lo_tol && m(i, i) <= am + hi_tol;
    }
    add_check(s, "harmonic <= ahom_ii <= arithmetic within 3 combined stderr", ok,
              "H=" + fmt(hm) + " A=" + fmt(am) + " ahom_00=" + fmt(m(0, 0)));
  }
  const auto res = values_of(s.records, "sigma_residual");
  if (!res.empty()) {
    const double worst = *std::max_element(res.begin(), res.end());
    add_metric(s, "sigma_residual_max", worst);
    add_check(s, "sigma reconstruction within 1e-6", worst <= 1e-6, fmt(worst));
  }
}

inline void tail_fit_rows(RunSummary& s, const std::string& kind, const std::string& params,
                          const std::vector<double>& v, std::size_t censored) {
  add_metric(s, kind + params + "_censored", static_cast<double>(censored));
  add_metric(s, kind + params + "_samples", static_cast<double>(v.size()));
  try {
    const TailFit f2 = fit_log2_tail(v, {}, censored);
    TailFitOptions lo;
    lo.abscissa = TailAbscissa::Log;
    const TailFit f1 = fit_log2_tail(v, lo, censored);
    s.fits.push_back({kind + "_log2", params, f2.c_hat, 0.0, f2.intercept, f2.r_squared, f2.sample_count, censored});
    s.fits.push_back({kind + "_log", params, f1.c_hat, 0.0, f1.intercept, f1.r_squared, f1.sample_count, censored});
    add_metric(s, kind + params + "_c_hat", f2.c_hat);
    add_metric(s, kind + params + "_log2_r2", f2.r_squared);
    add_metric(s, kind + params + "_log_r2", f1.r_squared);
    add_check(s, kind + params + " log^2 tail: r2 >= 0.85, beats power law, c_hat > 0",
              f2.r_squared >= 0.85 && f2.r_squared > f1.r_squared && f2.c_hat > 0.0,
              "r2=" + fmt(f2.r_squared) + " power r2=" + fmt(f1.r_squared) + " c=" + fmt(f2.c_hat));
  } catch (const Error& e) {
    add_check(s, kind + params + " log^2 tail fit", false, e.what());
  }
}

inline void radii(const ExperimentConfig& c, RunSummary& s) {
  for (const std::string k : {"r_diamond", "r_star", "r_spade"}) {
    tail_fit_rows(s, k, "", values_of(s.records, k), values_of(s.records, k + "_censored").size());
  }
  for (double R : effective_scales(c)) {
    tail_fit_rows(s, "r_club", "R=" + fmt(R), values_of(s.records, "r_club", "R=" + fmt(R)), 0);
  }
  add_metric(s, "C_d", c.C_d);
  add_metric(s, "C_d_appendix", appendix_comparison_constant(c.dim));
}

inline void clt_scaling(const ExperimentConfig& c, RunSummary& s) {
  std::vector<double> R, m, se;
  for (const auto& [r, v] : values_by_scale(s.records, "clt_m2")) {
    R.push_back(r);
    m.push_back(stats::mean(v));
    se.push_back(v.size() >= 2 ? stats::stderr_of_mean(v) : 0.0);
    add_metric(s, "clt_m2_R" + fmt(r), m.back());
  }
  if (R.size() >= 3 && s.replicas_ok >= 2) {
    const auto f = fit_scaling(R, m, se);
    s.fits.push_back({"clt_slope", "direction=0", f.slope, f.slope_stderr, f.intercept, f.r_squared, R.size(), 0});
    add_metric(s, "clt_slope", f.slope);
    add_metric(s, "clt_slope_stderr", f.slope_stderr);
    const double target = -static_cast<double>(c.dim);
    add_check(s, "CLT slope = -d +- 0.3", std::abs(f.slope - target) <= 0.3, "slope=" + fmt(f.slope));
  }
  Eigen::MatrixXd se_a;
  const Eigen::MatrixXd a = ahom_from_records(s, c.dim, &se_a);
  add_metric(s, "ahom_00", a(0, 0));
  add_metric(s, "ahom_00_stderr", se_a(0, 0));
}

inline void corrector_growth(const ExperimentConfig& c, RunSummary& s) {
  std::vector<double> t, m;
  for (const auto& [x, v] : values_by_scale(s.records, "growth_m2")) {
    t.push_back(x);
    m.push_back(stats::mean(v));
    add_metric(s, "growth_m2_x" + fmt(x), m.back());
  }
  if (t.size() >= 3) {
    const auto f = fit_growth(c.dim, t, m);
    s.fits.push_back({"growth_mu_d", "d=" + std::to_string(c.dim), f.slope, f.slope_stderr, f.intercept, f.r_squared,
                      t.size(), 0});
    add_metric(s, "growth_B", f.slope);
    add_metric(s, "growth_A", f.intercept);
    add_metric(s, "growth_r2", f.r_squared);
    if (c.dim == 1) add_check(s, "linear growth r2 >= 0.9", f.r_squared >= 0.9, "r2=" + fmt(f.r_squared));
    if (c.dim == 2) {
      add_check(s, "log growth r2 >= 0.8 and B > 0", f.r_squared >= 0.8 && f.slope > 0.0,
                "r2=" + fmt(f.r_squared) + " B=" + fmt(f.slope));
    }
  }
}

/// Samples of I_eps(M) for an arbitrary tensor from the coordinate pairings.
inline std::vector<double> pairing_samples(const RunSummary& s, int d, double eps, const Eigen::MatrixXd& M) {
  std::vector<double> out;
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      if (M(i, k) == 0.0) continue;
      std::vector<double> v;
      for (const auto& r : s.records) {
        if (r.kind == "pairing" && r.scale == eps && r.params == "F=" + std::to_string(i * d + k)) v.push_back(r.value);
      }
      if (out.empty()) out.assign(v.size(), 0.0);
      for (std::size_t j = 0; j < v.size(); ++j) out[j] += M(i, k) * v[j];
    }
  }
  return out;
}

inline void commutator(const ExperimentConfig& c, RunSummary& s, const LatticeGrid& g) {
  const int d = c.dim;
  auto eps = effective_scales(c);
  std::sort(eps.begin(), eps.end(), std::greater<>());
  if (s.replicas_ok < 4) return;
  std::vector<double> var;
  for (double e : eps) {
    const auto m2 = values_by_scale(s.records, "pairing_m2", "F=0")[e];
    var.push_back(stats::mean(m2));
    add_metric(s, "pairing_var_eps" + fmt(e), var.back());
    add_metric(s, "pairing_var_eps" + fmt(e) + "_stderr", stats::stderr_of_mean(m2));
  }
  bool ratios_ok = true;
  for (std::size_t l = 1; l < var.size(); ++l) {
    const double ratio = var[l - 1] > 0.0 ? var[l] / var[l - 1] : 1.0;
    add_metric(s, "pairing_var_ratio_" + std::to_string(l), ratio);
    ratios_ok = ratios_ok && ratio >= 2.0 / 3.0 && ratio <= 1.5;
  }
  add_check(s, "Var I_eps(F) ratios across eps within [2/3, 3/2]", ratios_ok, "");
  const double e_min = eps.back();
  const auto tensors = coordinate_test_tensors(d);
  const auto p0 = pairing_samples(s, d, e_min, tensors[0]);
  if (stats::variance(p0) > 0.0) {
    const auto z = stats::standardize(p0);
    const double D = stats::ks_statistic(z, stats::normal_cdf);
    const double pv = stats::ks_pvalue(D, z.size());
    add_metric(s, "ks_statistic", D);
    add_metric(s, "ks_pvalue", pv);
    add_check(s, "KS normality not rejected at 0.01", pv >= 0.01, "p=" + fmt(pv));
  }
  std::vector<std::vector<double>> samples;
  for (const auto& M : tensors) samples.push_back(pairing_samples(s, d, e_min, M));
  const double chi2 = bump_norm2(g, e_min);
  try {
    const QEstimate q = estimate_Q(tensors, samples, chi2);
    for (int p = 0; p < d * d; ++p) {
      for (int r = p; r < d * d; ++r) {
        add_metric(s, "Q_" + std::to_string(p) + "_" + std::to_string(r), q.Q(p, r));
        add_metric(s, "Q_" + std::to_string(p) + "_" + std::to_string(r) + "_stderr", q.stderr_(p, r));
      }
    }
    add_metric(s, "Q_symmetry_defect", q.symmetry_defect);
    // rank-one directions xi (x) eta
    std::vector<Eigen::MatrixXd> rank_one(tensors);
    if (d >= 2) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(d), w = Eigen::VectorXd::Zero(d);
      u(0) = 1.0;
      u(1) = 1.0;
      w(0) = 1.0;
      w(1) = -1.0;
      rank_one.push_back(u * u.transpose());
      rank_one.push_back(u * w.transpose());
    }
    bool pos = true;
    double worst = INFINITY;
    for (const auto& M : rank_one) {
      const auto v = pairing_samples(s, d, e_min, M);
      const double val = stats::variance(v) / chi2;
      const double se = stats::stderr_of_variance(v) / chi2;
      worst = std::min(worst, se > 0.0 ? val / se : (val > 0.0 ? INFINITY : 0.0));
      pos = pos && val > 2.0 * se && q_form(q.Q, M) > 0.0;
    }
    add_metric(s, "Q_rank_one_min_z", worst);
    add_check(s, "Q positive on rank-one directions", pos, "min value/stderr=" + fmt(worst));
    const double raw = stats::variance(p0);
    const double pred = chi2 * q.Q(0, 0);
    const double se = stats::stderr_of_variance(p0);
    add_metric(s, "Q_coherence_z", se > 0.0 ? (raw - pred) / se : 0.0);
  } catch (const Error& e) {
    add_check(s, "Q estimate", false, e.what());
  }
  for (int i = 0; i < d; ++i) {
    for (int k = 0; k < d; ++k) {
      const auto v = values_of(s.records, "xi_mean", std::to_string(i) + std::to_string(k));
      add_metric(s, "xi_mean_" + std::to_string(i) + std::to_string(k), stats::mean(v));
      add_metric(s, "xi_mean_" + std::to_string(i) + std::to_string(k) + "_stderr", stats::stderr_of_mean(v));
    }
  }
}

inline void pathwise(const ExperimentConfig& c, RunSummary& s) {
  if (s.replicas_ok < 2) return;
  auto eps = effective_scales(c);
  std::sort(eps.begin(), eps.end(), std::greater<>());
  std::vector<double> rms, var;
  for (double e : eps) {
    const auto p1 = values_by_scale(s.records, "pathwise_p1")[e];
    const auto p2 = values_by_scale(s.records, "pathwise_p2")[e];
    std::vector<PathwiseSample> samples;
    for (std::size_t i = 0; i < p1.size(); ++i) samples.push_back({e, p1[i], p2[i], {}});
    const auto sum = summarize_pathwise(samples);
    rms.push_back(sum.residual_rms);
    var.push_back(sum.solution_pairing_variance);
    add_metric(s, "pathwise_residual_eps" + fmt(e), sum.residual_rms);
    add_metric(s, "pathwise_residual_eps" + fmt(e) + "_stderr", sum.residual_rms_stderr);
    add_metric(s, "pathwise_mean_inflation_eps" + fmt(e), sum.mean_inflation);
    add_metric(s, "pathwise_variance_eps" + fmt(e), sum.solution_pairing_variance);
    add_metric(s, "pathwise_envelope_eps" + fmt(e), e * mu_d(c.dim, 1.0 / e));
  }
  for (std::size_t l = 1; l < eps.size(); ++l) {
    add_metric(s, "pathwise_residual_ratio_" + std::to_string(l), rms[l] > 0.0 ? rms[l - 1] / rms[l] : 0.0);
    add_metric(s, "pathwise_variance_ratio_" + std::to_string(l), var[l - 1] > 0.0 ? var[l] / var[l - 1] : 0.0);
  }
}

inline void two_scale(const ExperimentConfig& c, RunSummary& s) {
  if (s.replicas_ok < 2) return;
  std::vector<double> eps;
  std::vector<std::vector<double>> err;
  for (const auto& [e, v] : values_by_scale(s.records, "twoscale_err2")) {
    eps.push_back(e);
    err.push_back(v);
  }
  if (eps.size() < 3) return;
  const auto f = expansion_error_fit(c.dim, eps, err);
  for (std::size_t l = 0; l < eps.size(); ++l) {
    add_metric(s, "twoscale_error_eps" + fmt(eps[l]), f.error[l]);
    add_metric(s, "twoscale_error_eps" + fmt(eps[l]) + "_stderr", f.error_stderr[l]);
  }
  s.fits.push_back({"twoscale_power", "", f.power.slope, f.power.slope_stderr, f.power.intercept, f.power.r_squared,
                    eps.size(), 0});
  s.fits.push_back({"twoscale_log_corrected", "", f.log_corrected.slope, f.log_corrected.slope_stderr,
                    f.log_corrected.intercept, f.log_corrected.r_squared, eps.size(), 0});
  add_metric(s, "twoscale_slope", f.power.slope);
  add_metric(s, "twoscale_r2", f.power.r_squared);
  add_metric(s, "twoscale_log_corrected_slope", f.log_corrected.slope);
  add_metric(s, "twoscale_log_corrected_r2", f.log_corrected.r_squared);
  const auto er = values_of(s.records, "energy_residual");
  add_metric(s, "energy_residual_max", er.empty() ? 0.0 : *std::max_element(er.begin(), er.end()));
  if (c.dim == 3) {
    add_check(s, "two-scale slope 1.0 +- 0.25", std::abs(f.power.slope - 1.0) <= 0.25, "slope=" + fmt(f.power.slope));
  }
  if (c.dim == 2) {
    add_check(s, "two-scale slope in [0.75, 1.0], log-corrected model preferred",
              f.power.slope >= 0.75 && f.power.slope <= 1.0 && f.log_corrected.r_squared > f.power.r_squared,
              "slope=" + fmt(f.power.slope) + " r2 power=" + fmt(f.power.r_squared) +
                  " log-corrected=" + fmt(f.log_corrected.r_squared));
  }
}

inline void hole_filling(const ExperimentConfig& c, RunSummary& s) {
  const int d = c.dim;
  const double R = c.outer();
  add_metric(s, "reverse_holder_alpha", reverse_holder_exponent(d));
  // per replica curves E(r)/E(R)
  std::map<std::uint64_t, std::map<double, double>> curves;
  for (const auto& r : s.records) {
    if (r.kind == "hf_energy") curves[r.replica][r.scale] = r.value;
  }
  if (curves.size() < 2) return;
  auto fit = [&](std::optional<std::uint64_t> skip) {
    std::vector<double> lx, ly;
    for (const auto& [rep, cur] : curves) {
      if (skip && rep == *skip) continue;
      const double ER = cur.at(R);
      for (const auto& [r, e] : cur) {
        if (r >= R) continue;
        lx.push_back(std::log(r / R));
        ly.push_back(std::log(e / ER));
      }
    }
    const auto lf = stats::linear_fit(lx, ly);
    return std::make_pair(lf, std::clamp(d + std::min(lf.slope, 0.0), 1e-6, static_cast<double>(d)));
  };
  auto worst_ratio = [&](const std::map<double, double>& cur, double beta) {
    const double ER = cur.at(R);
    double w = 0.0;
    for (const auto& [r, e] : cur) {
      if (r < R) w = std::max(w, e / ER / std::pow(R / r, d - beta));
    }
    return w;
  };
  const auto [lf, beta] = fit(std::nullopt);
  double C = 0.0;
  for (const auto& [rep, cur] : curves) C = std::max(C, worst_ratio(cur, beta));
  // leave-one-out: each replica is tested against the bound fitted on the others
  std::size_t pass = 0;
  for (const auto& [rep, cur] : curves) {
    const double beta_i = fit(rep).second;
    double C_i = 0.0;
    for (const auto& [other, oc] : curves) {
      if (other != rep) C_i = std::max(C_i, worst_ratio(oc, beta_i));
    }
    pass += worst_ratio(cur, beta_i) <= 1.1 * C_i ? 1 : 0;
  }
  const double frac = static_cast<double>(pass) / static_cast<double>(curves.size());
  s.fits.push_back({"hole_filling_beta", "R=" + fmt(R), beta, lf.slope_stderr, lf.intercept, lf.r_squared, lf.n, 0});
  add_metric(s, "hf_beta_hat", beta);
  add_metric(s, "hf_C_hat", C);
  add_metric(s, "hf_holdout_pass_fraction", frac);
  add_check(s, "beta_hat in (0, d]", beta > 0.0 && beta <= d, "beta=" + fmt(beta));
  add_check(s, "hole-filling bound with slack 1.1 on >= 95% of left-out replicas", frac >= 0.95, "fraction=" + fmt(frac));
}

inline void mean_value(const ExperimentConfig& c, RunSummary& s) {
  const double R2 = c.outer(), R1 = R2 / 2.0;
  const auto star1 = values_of(s.records, "mv_ratio_star", "R=" + fmt(R1));
  const auto all1 = values_of(s.records, "mv_ratio_all", "R=" + fmt(R1));
  const auto star2 = values_of(s.records, "mv_ratio_star", "R=" + fmt(R2));
  if (star1.size() < 2) return;
  const double q_star = stats::quantile(star1, 0.95), q_all = stats::quantile(all1, 0.95);
  const double q_star2 = stats::quantile(star2, 0.95);
  add_metric(s, "mv_p95_star_R1", q_star);
  add_metric(s, "mv_p95_all_R1", q_all);
  add_metric(s, "mv_p95_star_R2", q_star2);
  add_check(s, "p95 ratio above r_star <= p95 over all r", q_star <= q_all, fmt(q_star) + " vs " + fmt(q_all));
  add_check(s, "p95 ratio stable under doubling R (< 25%)", std::abs(q_star2 / q_star - 1.0) < 0.25,
            fmt(q_star2 / q_star));
}

}  // namespace summaries

inline void summarize(const ExperimentConfig& c, const LatticeGrid& g, RunSummary& s) {
  const std::string& k = c.kind;
  if (k == "sample-field") summaries::sample_field(c, s);
  if (k == "correctors") summaries::correctors(c, s);
  if (k == "radii") summaries::radii(c, s);
  if (k == "clt-scaling") summaries::clt_scaling(c, s);
  if (k == "corrector-growth") summaries::corrector_growth(c, s);
  if (k == "commutator") summaries::commutator(c, s, g);
  if (k == "pathwise") summaries::pathwise(c, s);
  if (k == "two-scale") summaries::two_scale(c, s);
  if (k == "hole-filling") summaries::hole_filling(c, s);
  if (k == "mean-value") summaries::mean_value(c, s);
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

/// Single-writer CSV sink; each replica's rows are flushed as one block.
class RecordSink {
 public:
  RecordSink(const std::filesystem::path& dir, std::uint64_t hash) : hash_(hash) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    records_.open(dir / "records.csv");
    solves_.open(dir / "solves.csv");
    failures_.open(dir / "failures.csv");
    if (!records_ || !solves_ || !failures_) throw Error(ErrorKind::IoError, "cannot write into " + dir.string());
    records_ << "config_hash,experiment,kind,params,eps_or_R,replica,seed,value\n" << std::setprecision(17);
    solves_ << "config_hash,replica,label,iterations,relative_residual,converged,truncation_M\n" << std::setprecision(17);
    failures_ << "config_hash,replica,error_kind,message\n";
    records_.flush();
    solves_.flush();
    failures_.flush();
    enabled_ = true;
  }

  void write(const ReplicaOutput& out) {
    if (!enabled_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& r : out.records) {
      records_ << hash_ << ',' << r.experiment << ',' << r.kind << ',' << csv_escape(r.params) << ',' << r.scale << ','
               << r.replica << ',' << r.seed << ',' << r.value << '\n';
    }
    for (const auto& s : out.solves) {
      solves_ << hash_ << ',' << s.replica << ',' << s.label << ',' << s.iterations << ',' << s.residual << ','
              << (s.converged ? 1 : 0) << ',' << (s.truncation_M ? std::to_string(*s.truncation_M) : "none") << '\n';
    }
    records_.flush();
    solves_.flush();
  }

  void write(const ReplicaFailure& f) {
    if (!enabled_) return;
    std::lock_guard<std::mutex> lock(mutex_);
    failures_ << hash_ << ',' << f.replica << ',' << f.error_kind << ',' << csv_escape(f.message) << '\n';
    failures_.flush();
  }

 private:
  std::uint64_t hash_;
  bool enabled_ = false;
  std::mutex mutex_;
  std::ofstream records_, solves_, failures_;
};

inline void write_summary_files(const std::filesystem::path& dir, const ExperimentConfig& c, const RunSummary& s) {
  {
    std::ofstream f(dir / "fits.csv");
    f << "config_hash,kind,params,estimate,stderr,intercept,r_squared,n,censored_n\n" << std::setprecision(17);
    for (const auto& r : s.fits) {
      f << s.config_hash << ',' << r.kind << ',' << csv_escape(r.params) << ',' << r.estimate << ',' << r.stderr_ << ','
        << r.intercept << ',' << r.r_squared << ',' << r.n << ',' << r.censored << '\n';
    }
  }
  {
    std::ofstream f(dir / "tails.csv");
    f << "kind,params,c_hat,r_squared,n,censored_n\n" << std::setprecision(17);
    for (const auto& r : s.fits) {
      if (r.kind.size() > 5 && r.kind.rfind("_log2") == r.kind.size() - 5) {
        f << r.kind.substr(0, r.kind.size() - 5) << ',' << csv_escape(r.params) << ',' << r.estimate << ','
          << r.r_squared << ',' << r.n << ',' << r.censored << '\n';
      }
    }
  }
  {
    std::ofstream f(dir / "summary.csv");
    f << "config_hash,metric,value\n" << std::setprecision(17);
    for (const auto& [k, v] : s.metrics) f << s.config_hash << ',' << k << ',' << v << '\n';
    for (const auto& ch : s.checks) f << s.config_hash << ",check:" << csv_escape(ch.name) << ',' << (ch.passed ? 1 : 0) << '\n';
  }
  std::ofstream m(dir / "manifest.txt");
  m << "# run manifest\n";
  m << "version = " << kVersion << '\n';
  m << "config_hash = " << s.config_hash << '\n';
  m << "replicas_requested = " << s.replicas_requested << '\n';
  m << "replicas_ok = " << s.replicas_ok << '\n';
  m << "replicas_failed = " << s.failures.size() << '\n';
  m << "wall_seconds = " << s.wall_seconds << '\n';
  m << "threads = " << c.threads << '\n';
  m << '\n' << serialize_config(c);
}

}  // namespace detail

/// Runs every replica of the configured experiment, persists records when
/// `cfg.out` is non-empty and returns the pooled summary.
inline RunSummary run_experiment(const ExperimentConfig& cfg) {
  validate_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunSummary s;
  s.config_hash = config_hash(cfg);
  s.experiment = cfg.kind;
  s.replicas_requested = cfg.replicas;
  const LatticeGrid grid(cfg.dim, cfg.grid_n(), cfg.grid_length());
  RunContext ctx{cfg, grid, std::nullopt};
  if (needs_pooled_ahom(cfg.kind) && cfg.replicas > 0) {
    ctx.ahom = pilot_ahom(cfg, grid, cfg.pilot_replicas);
    for (int i = 0; i < cfg.dim; ++i) {
      for (int k = 0; k < cfg.dim; ++k) s.metrics.emplace_back("pilot_ahom_" + std::to_string(i) + std::to_string(k), (*ctx.ahom)(i, k));
    }
  }
  const ReplicaKernel kernel = kernel_for(cfg.kind);
  const std::filesystem::path dir = cfg.out;
  detail::RecordSink sink(dir, s.config_hash);
  const std::size_t n = static_cast<std::size_t>(cfg.replicas);
  std::vector<std::optional<ReplicaOutput>> results(n);
  std::vector<std::optional<ReplicaFailure>> failures(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < n; r = next++) {
      try {
        ReplicaOutput out = kernel(ctx, r);
        for (auto& rec : out.records) rec.experiment = cfg.kind;
        sink.write(out);
        results[r] = std::move(out);
      } catch (const Error& e) {
        failures[r] = ReplicaFailure{r, to_string(e.kind()), e.what()};
        sink.write(*failures[r]);
      } catch (const std::exception& e) {
        failures[r] = ReplicaFailure{r, "Exception", e.what()};
        sink.write(*failures[r]);
      }
    }
  };
  const int threads = std::max(1, std::min<int>(cfg.threads, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (results[r]) {
      ++s.replicas_ok;
      for (auto& rec : results[r]->records) s.records.push_back(std::move(rec));
      for (auto& sv : results[r]->solves) s.solves.push_back(std::move(sv));
    }
    if (failures[r]) s.failures.push_back(*failures[r]);
  }
  s.failure_threshold_exceeded = n > 0 && static_cast<double>(s.failures.size()) > 0.05 * static_cast<double>(n);
  summarize(cfg, grid, s);
  s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!dir.empty()) detail::write_summary_files(dir, cfg, s);
  return s;
}

// ---------------------------------------------------------------------------
// Plot data

using detail::csv_escape;

/// Tables shaped for plotting, written into `dir`. All records must belong to
/// experiment `kind`.
inline std::vector<std::filesystem::path> emit_plot_data(const std::vector<Record>& records, const std::string& kind,
                                                         const std::filesystem::path& dir) {
  for (const auto& r : records) {
    if (r.experiment != kind) throw Error(ErrorKind::MixedKinds, "record of '" + r.experiment + "' in a '" + kind + "' plot");
  }
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::string& name, const std::string& header) {
    written.push_back(dir / name);
    std::ofstream f(written.back());
    f << header << '\n' << std::setprecision(17);
    return f;
  };
  auto scaling_table = [&](const std::string& name, const std::string& col, const std::string& rec_kind) {
    auto f = open(name, col + ",log_var,stderr");
    for (const auto& [x, v] : values_by_scale(records, rec_kind)) {
      const double m = stats::mean(v);
      f << x << ',' << std::log(m) << ',' << (v.size() >= 2 && m > 0.0 ? stats::stderr_of_mean(v) / m : 0.0) << '\n';
    }
  };
  if (kind == "clt-scaling") {
    scaling_table("clt_plot.csv", "R", "clt_m2");
  } else if (kind == "corrector-growth") {
    scaling_table("growth_plot.csv", "x", "growth_m2");
  } else if (kind == "two-scale") {
    scaling_table("twoscale_plot.csv", "eps", "twoscale_err2");
  } else if (kind == "radii") {
    auto f = open("tail_plot.csv", "radius,bin_lo,bin_hi,x,y,count,censored");
    std::set<std::string> kinds;
    for (const auto& r : records) {
      if (r.kind.find("_censored") == std::string::npos) kinds.insert(r.kind + (r.params.empty() ? "" : "|" + r.params));
    }
    for (const auto& key : kinds) {
      const auto bar = key.find('|');
      const std::string k = key.substr(0, bar);
      const std::string params = bar == std::string::npos ? "" : key.substr(bar + 1);
      auto v = values_of(records, k, params);
      const std::size_t cens = values_of(records, k + "_censored").size();
      std::sort(v.begin(), v.end());
      const double n = static_cast<double>(v.size() + cens);
      std::size_t i = 0;
      while (i < v.size()) {
        std::size_t j = i;
        while (j < v.size() && v[j] == v[i]) ++j;
        const double l = std::log1p(v[i]);
        const double surv = (static_cast<double>(v.size() - i) + static_cast<double>(cens)) / n;
        f << csv_escape(key) << ',' << v[i] << ',' << (j < v.size() ? v[j] : v[i]) << ',' << l * l << ','
          << -std::log(surv) << ',' << (j - i) << ',' << cens << '\n';
        i = j;
      }
    }
  } else if (kind == "commutator") {
    auto f = open("normality_plot.csv", "eps,standardized,normal_quantile");
    for (const auto& [eps, v] : values_by_scale(records, "pairing", "F=0")) {
      if (v.size() < 2) continue;
      auto z = stats::standardize(v);
      std::sort(z.begin(), z.end());
      for (std::size_t i = 0; i < z.size(); ++i) {
        f << eps << ',' << z[i] << ',' << stats::normal_quantile((i + 0.5) / static_cast<double>(z.size())) << '\n';
      }
    }
    auto h = open("histogram.csv", "eps,bin_lo,bin_hi,count");
    for (const auto& [eps, v] : values_by_scale(records, "pairing", "F=0")) {
      if (v.size() < 2) continue;
      const auto z = stats::standardize(v);
      for (int b = 0; b < 16; ++b) {
        const double lo = -4.0 + 0.5 * b, hi = lo + 0.5;
        const auto cnt = std::count_if(z.begin(), z.end(), [&](double x) { return x >= lo && x < hi; });
        h << eps << ',' << lo << ',' << hi << ',' << cnt << '\n';
      }
    }
  } else {
    auto f = open("plot.csv", "kind,params,scale,mean,stderr,count");
    std::map<std::tuple<std::string, std::string, double>, std::vector<double>> groups;
    for (const auto& r : records) groups[{r.kind, r.params, r.scale}].push_back(r.value);
    for (const auto& [key, v] : groups) {
      f << std::get<0>(key) << ',' << csv_escape(std::get<1>(key)) << ',' << std::get<2>(key) << ',' << stats::mean(v)
        << ',' << stats::stderr_of_mean(v) << ',' << v.size() << '\n';
    }
  }
  return written;
}

}  // namespace loghom
