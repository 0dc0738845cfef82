#pragma once

// Periodic correctors phi_i, fluxes q_i = a (D phi_i + e_i), flux correctors
// sigma_ijk and the per-sample homogenized coefficient.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "loghom/errors.hpp"
#include "loghom/field.hpp"
#include "loghom/pde.hpp"

namespace loghom {

/// Number of stored (j < k) index pairs per flux-corrector block.
inline int skew_pairs(int dim) { return dim * (dim - 1) / 2; }

inline int skew_pair_index(int dim, int j, int k) {
  // (0,1) -> 0, (0,2) -> 1, (1,2) -> 2
  int idx = 0;
  for (int a = 0; a < dim; ++a) {
    for (int b = a + 1; b < dim; ++b, ++idx) {
      if (a == j && b == k) return idx;
    }
  }
  return -1;
}

/// Read-only view of sigma_ijk with the skew sign applied.
struct SignedFieldView {
  const LatticeField* field = nullptr;
  double sign = 0.0;

  double operator()(std::size_t site) const { return field ? sign * field->values[site] : 0.0; }
};

enum class SigmaMean { PerSample, Pooled };

struct CorrectorOptions {
  SolveOptions solve{};
  std::optional<double> truncation_M = std::exp(4.0);
  EdgeRule edge_rule = EdgeRule::Geometric;
  bool compute_sigma = true;
  SigmaMean sigma_mean = SigmaMean::PerSample;
  std::optional<Eigen::MatrixXd> pooled_ahom;  // used when sigma_mean == Pooled
};

struct CorrectorSet {
  LatticeGrid grid;
  LatticeField coefficient;  // cell coefficient actually used (after truncation)
  EdgeCoefficient edges;
  std::vector<LatticeField> phi;       // d scalar fields
  std::vector<LatticeField> grad_phi;  // d edge fields, D phi_i
  std::vector<LatticeField> flux;      // d edge fields, q_i
  std::vector<LatticeField> sigma_store;  // index i * pairs + pair(j<k)
  Eigen::MatrixXd ahom_sample;         // (i, k) = lattice mean of q_ik
  std::vector<SolveReport> reports;
  std::optional<double> truncation_M;
  double sigma_reconstruction_residual = 0.0;

  int dim() const { return grid.dim; }

  SignedFieldView sigma(int i, int j, int k) const {
    if (j == k || sigma_store.empty()) return {};
    const int pairs = skew_pairs(grid.dim);
    if (j < k) return {&sigma_store[static_cast<std::size_t>(i * pairs + skew_pair_index(grid.dim, j, k))], 1.0};
    return {&sigma_store[static_cast<std::size_t>(i * pairs + skew_pair_index(grid.dim, k, j))], -1.0};
  }

  /// (phi, sigma) stacked as one multi-component site field.
  LatticeField phi_sigma() const {
    const int d = grid.dim;
    const int comps = d + static_cast<int>(sigma_store.size());
    LatticeField out(grid, comps);
    for (int i = 0; i < d; ++i) std::copy(phi[i].values.begin(), phi[i].values.end(), out.component(i).begin());
    for (std::size_t s = 0; s < sigma_store.size(); ++s) {
      std::copy(sigma_store[s].values.begin(), sigma_store[s].values.end(), out.component(d + static_cast<int>(s)).begin());
    }
    return out;
  }
};

/// Solve -div aE (D phi + e_i) = 0 for the mean-zero periodic corrector.
inline SolveResult compute_corrector(const EdgeCoefficient& aE, int direction, const SolveOptions& opt = {}) {
  const LatticeGrid& g = aE.grid;
  require(direction >= 0 && direction < g.dim, ErrorKind::InvalidArgument, "direction out of range");
  LatticeField e(g, g.dim);
  std::fill(e.component(direction).begin(), e.component(direction).end(), 1.0);
  SolveResult r = solve_divform(aE, &e, nullptr, opt);
  r.u.meta.method = "corrector";
  return r;
}

/// Edge flux q = aE (D phi + e_i).
inline LatticeField compute_flux(const EdgeCoefficient& aE, const LatticeField& phi, int direction) {
  LatticeField q = gradient(phi);
  for (int j = 0; j < aE.grid.dim; ++j) {
    const auto a = aE.axis(j);
    auto qj = q.component(j);
    const double shift = (j == direction) ? 1.0 : 0.0;
    for (std::size_t s = 0; s < qj.size(); ++s) qj[s] = a[s] * (qj[s] + shift);
  }
  return q;
}

struct SigmaBlock {
  std::vector<LatticeField> fields;  // one per (j < k) pair
  double reconstruction_residual = 0.0;  // max |q - mean_row - D.sigma| / max |q|
};

/// Discrete curl D_j q_k - D_k q_j, located on the (j, k) plaquette at x.
inline LatticeField discrete_curl(const LatticeField& q, int j, int k) {
  const LatticeGrid& g = q.grid;
  LatticeField out(g, 1);
  const double inv_h = 1.0 / g.spacing();
  auto o = out.component(0);
  const auto qk = q.component(k);
  const auto qj = q.component(j);
  for_each_edge(g, j, [&](std::size_t x, std::size_t y) { o[x] += (qk[y] - qk[x]) * inv_h; });
  for_each_edge(g, k, [&](std::size_t x, std::size_t y) { o[x] -= (qj[y] - qj[x]) * inv_h; });
  return out;
}

/// Divergence of sigma_i along its last index, as an edge field: (D.sigma_i)_j = sum_k D^-_k sigma_ijk.
inline LatticeField sigma_divergence(const LatticeGrid& g, const std::vector<LatticeField>& block) {
  LatticeField out(g, g.dim);
  const double inv_h = 1.0 / g.spacing();
  for (int j = 0; j < g.dim; ++j) {
    auto o = out.component(j);
    for (int k = 0; k < g.dim; ++k) {
      if (j == k) continue;
      const int pair = j < k ? skew_pair_index(g.dim, j, k) : skew_pair_index(g.dim, k, j);
      const double sign = j < k ? 1.0 : -1.0;
      const auto s = block[static_cast<std::size_t>(pair)].component(0);
      for_each_edge(g, k, [&](std::size_t x, std::size_t y) { o[y] += sign * (s[y] - s[x]) * inv_h; });
    }
  }
  return out;
}

/// Flux corrector block sigma_i from -Delta sigma_ijk = D_j q_ik - D_k q_ij.
inline SigmaBlock compute_sigma(const LatticeField& q, const Eigen::VectorXd& ahom_row) {
  const LatticeGrid& g = q.grid;
  require(q.components == g.dim, ErrorKind::InvalidArgument, "flux must have dim components");
  SigmaBlock out;
  for (int j = 0; j < g.dim; ++j) {
    for (int k = j + 1; k < g.dim; ++k) out.fields.push_back(solve_poisson_spectral(discrete_curl(q, j, k)));
  }
  if (g.dim == 1) return out;
  const LatticeField div = sigma_divergence(g, out.fields);
  double worst = 0.0;
  for (int j = 0; j < g.dim; ++j) {
    const auto qj = q.component(j);
    const auto dj = div.component(j);
    for (std::size_t s = 0; s < qj.size(); ++s) worst = std::max(worst, std::abs(qj[s] - ahom_row(j) - dj[s]));
  }
  const double scale = q.max_abs();
  out.reconstruction_residual = scale > 0.0 ? worst / scale : worst;
  return out;
}

/// Full corrector bundle for one coefficient sample.
inline CorrectorSet compute_correctors(const LatticeField& a, const CorrectorOptions& opt = {}) {
  require(a.components == 1, ErrorKind::InvalidArgument, "coefficient must be scalar");
  CorrectorSet cs;
  cs.grid = a.grid;
  cs.truncation_M = opt.truncation_M;
  cs.coefficient = opt.truncation_M ? truncate_coefficient(a, *opt.truncation_M) : a;
  cs.edges = edge_coefficients(cs.coefficient, opt.edge_rule);
  const int d = a.grid.dim;
  cs.ahom_sample = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    SolveResult r = compute_corrector(cs.edges, i, opt.solve);
    r.report.truncation_M = opt.truncation_M;
    cs.reports.push_back(r.report);
    cs.grad_phi.push_back(gradient(r.u));
    cs.flux.push_back(compute_flux(cs.edges, r.u, i));
    for (int k = 0; k < d; ++k) cs.ahom_sample(i, k) = cs.flux.back().mean(k);
    cs.phi.push_back(std::move(r.u));
  }
  if (opt.compute_sigma && d > 1) {
    for (int i = 0; i < d; ++i) {
      Eigen::VectorXd row = cs.ahom_sample.row(i).transpose();
      if (opt.sigma_mean == SigmaMean::Pooled && opt.pooled_ahom) row = opt.pooled_ahom->row(i).transpose();
      SigmaBlock b = compute_sigma(cs.flux[i], row);
      cs.sigma_reconstruction_residual = std::max(cs.sigma_reconstruction_residual, b.reconstruction_residual);
      for (auto& f : b.fields) cs.sigma_store.push_back(std::move(f));
    }
  }
  return cs;
}

struct AhomEstimate {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd stderr_;
  int replicas = 0;
};

/// Mean and replica standard error of per-sample homogenized coefficients.
inline AhomEstimate estimate_ahom(const std::vector<Eigen::MatrixXd>& samples) {
  require(samples.size() >= 2, ErrorKind::InvalidArgument, "estimate_ahom needs at least 2 replicas");
  const auto d = samples.front().rows();
  for (const auto& m : samples) {
    require(m.rows() == d && m.cols() == d, ErrorKind::ConfigMismatch, "replicas have different dimensions");
  }
  const double n = static_cast<double>(samples.size());
  AhomEstimate est;
  est.replicas = static_cast<int>(samples.size());
  est.mean = Eigen::MatrixXd::Zero(d, d);
  for (const auto& m : samples) est.mean += m;
  est.mean /= n;
  Eigen::MatrixXd var = Eigen::MatrixXd::Zero(d, d);
  for (const auto& m : samples) var += (m - est.mean).cwiseAbs2();
  var /= (n - 1.0);
  est.stderr_ = (var / n).cwiseSqrt();
  return est;
}

inline AhomEstimate estimate_ahom(const std::vector<CorrectorSet>& replicas) {
  require(replicas.size() >= 2, ErrorKind::InvalidArgument, "estimate_ahom needs at least 2 replicas");
  std::vector<Eigen::MatrixXd> samples;
  for (const auto& cs : replicas) {
    require(cs.grid == replicas.front().grid, ErrorKind::ConfigMismatch, "replicas on different grids");
    require(cs.truncation_M == replicas.front().truncation_M, ErrorKind::ConfigMismatch,
            "replicas with different truncation");
    samples.push_back(cs.ahom_sample);
  }
  return estimate_ahom(samples);
}

}  // namespace loghom
