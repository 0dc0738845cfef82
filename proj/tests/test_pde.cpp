#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "loghom/field.hpp"
#include "loghom/pde.hpp"
#include "loghom/rng.hpp"

using namespace loghom;

namespace {

LatticeField random_field(const LatticeGrid& g, std::uint64_t seed, int comps = 1) {
  CounterRng r(RngKey{seed});
  LatticeField f(g, comps);
  for (double& v : f.values) v = r.normal();
  return f;
}

LatticeField lognormal(const LatticeGrid& g, std::uint64_t seed, double amp = 1.0) {
  return sample_coefficient(g, CovarianceSpec{CovarianceFamily::GaussianKernel, amp, 2.0}, RngKey{seed});
}

// cos(2 pi m . x / L) sampled on sites
LatticeField fourier_mode(const LatticeGrid& g, const Coord& m) {
  LatticeField f(g, 1);
  for (std::size_t s = 0; s < g.sites(); ++s) {
    const Coord c = g.coords(s);
    double ph = 0.0;
    for (int j = 0; j < g.dim; ++j) ph += 2.0 * std::numbers::pi * m[j] * c[j] / g.n_per_side;
    f.values[s] = std::cos(ph);
  }
  return f;
}

double mode_symbol(const LatticeGrid& g, const Coord& m) {
  const double h = g.spacing();
  double s = 0.0;
  for (int j = 0; j < g.dim; ++j) s += (2.0 - 2.0 * std::cos(2.0 * std::numbers::pi * m[j] / g.n_per_side)) / (h * h);
  return s;
}

}  // namespace

TEST(EdgeCoefficients, ConstantAndGeometricMean) {
  const LatticeGrid g(2, 8, 8.0);
  const auto e = edge_coefficients(LatticeField(g, 1, 3.0));
  for (double v : e.values) EXPECT_DOUBLE_EQ(v, 3.0);
  LatticeField a(g, 1, 1.0);
  a.values[0] = std::exp(1.0);
  a.values[g.site({1, 0, 0})] = std::exp(3.0);
  EXPECT_NEAR(edge_coefficients(a).at(0, 0), std::exp(2.0), 1e-12);
  EXPECT_NEAR(edge_coefficients(a, EdgeRule::Harmonic).at(0, 0), 2.0 / (std::exp(-1.0) + std::exp(-3.0)), 1e-12);
}

TEST(EdgeCoefficients, GeometricContraction) {
  const LatticeGrid g(2, 64, 64.0);
  double cell = 0.0, edge = 0.0;
  for (int r = 0; r < 20; ++r) {
    const auto a = lognormal(g, 100 + r);
    for (double v : a.values) cell += v;
    for (double v : edge_coefficients(a).values) edge += v / g.dim;
  }
  EXPECT_LE(edge, cell);
}

TEST(Operator, ConstantsInKernel) {
  const LatticeGrid g(3, 8, 4.0);
  const auto aE = edge_coefficients(lognormal(g, 1));
  const auto out = apply_operator(aE, LatticeField(g, 1, 2.5));
  EXPECT_LT(out.max_abs(), 1e-12);
}

TEST(Operator, FourierSymbol) {
  for (int d = 1; d <= 3; ++d) {
    const LatticeGrid g(d, 16, 8.0);
    const Coord m{3, d > 1 ? 5 : 0, d > 2 ? 1 : 0};
    const auto u = fourier_mode(g, m);
    const auto out = apply_operator(EdgeCoefficient(g, 1.0), u);
    const double sym = mode_symbol(g, m);
    for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(out.values[s], sym * u.values[s], 1e-11);
  }
}

TEST(Operator, Symmetric) {
  const LatticeGrid g(2, 32, 32.0);
  const auto aE = edge_coefficients(lognormal(g, 2));
  const auto u = random_field(g, 3), v = random_field(g, 4);
  const auto Au = apply_operator(aE, u), Av = apply_operator(aE, v);
  double a = 0.0, b = 0.0, scale = 0.0;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    a += Au.values[s] * v.values[s];
    b += u.values[s] * Av.values[s];
    scale += std::abs(Au.values[s] * v.values[s]);
  }
  EXPECT_LE(std::abs(a - b), 1e-12 * scale);
}

TEST(Operator, GradientDivergenceAdjoint) {
  const LatticeGrid g(3, 8, 8.0);
  const auto u = random_field(g, 5);
  const auto F = random_field(g, 6, 3);
  const auto Du = gradient(u);
  const auto divF = divergence(F);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < F.values.size(); ++i) lhs += Du.values[i] * F.values[i];
  for (std::size_t s = 0; s < g.sites(); ++s) rhs -= u.values[s] * divF.values[s];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Solve, ZeroDataGivesZero) {
  const LatticeGrid g(2, 16, 16.0);
  const auto aE = edge_coefficients(lognormal(g, 7));
  const auto r = solve_divform(aE, nullptr, nullptr);
  EXPECT_EQ(r.u.max_abs(), 0.0);
  EXPECT_TRUE(r.report.converged);
}

TEST(Solve, MatchesSpectralPoissonForUnitCoefficient) {
  const LatticeGrid g(2, 32, 16.0);
  const auto psi = fourier_mode(g, {2, 3, 0});
  const auto h = gradient(psi);
  const auto r = solve_divform(EdgeCoefficient(g, 1.0), nullptr, &h);
  const auto ref = solve_poisson_spectral(divergence(h));
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(r.u.values[s], ref.values[s], 1e-8);
  // -Delta u = div grad psi means u = -psi up to a constant
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(r.u.values[s], -psi.values[s], 1e-8);
}

TEST(Solve, OneDimensionalFluxIsHarmonicMean) {
  const LatticeGrid g(1, 256, 256.0);
  const auto aE = edge_coefficients(lognormal(g, 8));
  LatticeField e(g, 1, 1.0);
  const auto r = solve_divform(aE, &e, nullptr, SolveOptions{1e-13, 0, false});
  double inv = 0.0;
  for (double v : aE.values) inv += 1.0 / v;
  const double c = g.sites() / inv;
  const auto Du = gradient(r.u);
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(Du.values[s] + 1.0, c / aE.values[s], 1e-10);
}

TEST(Solve, ResidualHistoryAndNoConvergence) {
  const LatticeGrid g(2, 64, 64.0);
  const auto aE = edge_coefficients(lognormal(g, 9));
  LatticeField e(g, 2);
  std::fill(e.component(0).begin(), e.component(0).end(), 1.0);
  SolveOptions opt;
  opt.max_iter = 3;
  opt.keep_history = true;
  try {
    solve_divform(aE, &e, nullptr, opt);
    FAIL() << "expected NoConvergence";
  } catch (const NoConvergence& err) {
    EXPECT_EQ(err.kind(), ErrorKind::NoConvergence);
    EXPECT_FALSE(err.residual_history.empty());
  }
}

TEST(Solve, SingularCoefficientRejected) {
  const LatticeGrid g(1, 8, 8.0);
  EdgeCoefficient aE(g, 1.0);
  aE.values[2] = 0.0;
  EXPECT_THROW(solve_operator(aE, std::vector<double>(8, 0.0)), Error);
}

TEST(Poisson, ZeroAndFourierMode) {
  const LatticeGrid g(3, 8, 8.0);
  EXPECT_EQ(solve_poisson_spectral(LatticeField(g, 1)).max_abs(), 0.0);
  const Coord m{1, 2, 3};
  const auto f = fourier_mode(g, m);
  const auto u = solve_poisson_spectral(f);
  const double sym = mode_symbol(g, m);
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(u.values[s], f.values[s] / sym, 1e-12);
}

TEST(Poisson, RoundTrip) {
  const LatticeGrid g(2, 32, 32.0);
  auto rhs = random_field(g, 10);
  const double m = rhs.mean();
  for (double& v : rhs.values) v -= m;
  const auto back = apply_operator(EdgeCoefficient(g, 1.0), solve_poisson_spectral(rhs));
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_LT(std::abs(back.values[s] - rhs.values[s]), 1e-10 * rhs.max_abs());
}

TEST(ConstantCoefficient, MatchesIterativeSolve) {
  const LatticeGrid g(2, 32, 32.0);
  Eigen::MatrixXd A(2, 2);
  A << 1.3, 0.0, 0.0, 0.7;
  EdgeCoefficient aE(g, 1.0);
  std::fill(aE.values.begin(), aE.values.begin() + g.sites(), 1.3);
  std::fill(aE.values.begin() + g.sites(), aE.values.end(), 0.7);
  const auto F = random_field(g, 11, 2);
  const auto spectral = solve_constant_coefficient(A, F);
  const auto iterative = solve_divform(aE, nullptr, &F, SolveOptions{1e-13, 0, false});
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(spectral.values[s], iterative.u.values[s], 1e-8);
}
