#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "loghom/field.hpp"
#include "loghom/radii.hpp"

using namespace loghom;

namespace {

std::vector<double> brute_envelope(const LatticeGrid& g, const std::vector<double>& v, double slope) {
  std::vector<double> out(v.size());
  for (std::size_t x = 0; x < v.size(); ++x) {
    double best = -1e300;
    for (std::size_t y = 0; y < v.size(); ++y) best = std::max(best, v[y] - slope * g.distance(x, y));
    out[x] = best;
  }
  return out;
}

LatticeField lognormal(const LatticeGrid& g, std::uint64_t seed, double amp = 0.5) {
  return sample_coefficient(g, CovarianceSpec{CovarianceFamily::GaussianKernel, amp, 2.0}, RngKey{seed});
}

}  // namespace

TEST(Envelope, FewLevelsMatchesBruteForce) {
  for (int d = 1; d <= 3; ++d) {
    const LatticeGrid g(d, d == 3 ? 8 : 16, d == 3 ? 8.0 : 32.0);
    std::mt19937 gen(7 + d);
    std::vector<double> v(g.sites(), 1.0);
    for (double& x : v) {
      const auto u = gen() % 20;
      x = u < 2 ? 8.0 : (u < 5 ? 2.0 : 1.0);
    }
    const auto env = lipschitz_envelope(g, v);
    const auto ref = brute_envelope(g, v, kEnvelopeSlope);
    for (std::size_t s = 0; s < v.size(); ++s) ASSERT_NEAR(env[s], ref[s], 1e-12) << "d=" << d << " site " << s;
  }
}

TEST(Envelope, ManyLevelsMatchesBruteForce) {
  const LatticeGrid g(2, 16, 16.0);
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> u(1.0, 3.0);
  std::vector<double> v(g.sites());
  for (double& x : v) x = u(gen);
  const auto env = lipschitz_envelope(g, v, 0.25);
  const auto ref = brute_envelope(g, v, 0.25);
  for (std::size_t s = 0; s < v.size(); ++s) ASSERT_NEAR(env[s], ref[s], 1e-12);
}

TEST(Envelope, SingleExtremeSiteAndLipschitz) {
  const LatticeGrid g(2, 32, 32.0);
  std::vector<double> v(g.sites(), 1.0);
  const std::size_t peak = g.site({5, 7, 0});
  v[peak] = 3.0;
  const auto env = lipschitz_envelope(g, v);
  for (std::size_t s = 0; s < v.size(); ++s) {
    EXPECT_NEAR(env[s], std::max(1.0, 3.0 - kEnvelopeSlope * g.distance(s, peak)), 1e-12);
    EXPECT_GE(env[s], v[s]);
  }
}

TEST(Radii, ExponentArithmetic) {
  EXPECT_DOUBLE_EQ(reverse_holder_exponent(1), 1.0);
  EXPECT_DOUBLE_EQ(reverse_holder_exponent(2), 1.5);
  EXPECT_NEAR(reverse_holder_exponent(3), 12.0 / 7.0, 1e-15);
  for (int d = 1; d <= 3; ++d) {
    const double C = appendix_comparison_constant(d);
    EXPECT_NEAR((1.0 - 1.0 / C) * std::pow(2.0, d), std::pow(9.0, -d) / 2.0, 1e-15);
  }
  EXPECT_EQ(dyadic_radii(16.0), (std::vector<double>{1, 2, 4, 8, 16}));
  EXPECT_DOUBLE_EQ(lognormal_moment_sum(0.0, 3.0), 2.0);
}

TEST(Radii, DyadicThreshold) {
  const std::vector<double> r{1, 2, 4, 8};
  EXPECT_EQ(dyadic_threshold(r, [](double rho, std::size_t) { return rho >= 4; }), 4.0);
  EXPECT_EQ(dyadic_threshold(r, [](double, std::size_t) { return true; }), 1.0);
  EXPECT_EQ(dyadic_threshold(r, [](double rho, std::size_t) { return rho < 8; }), -1.0);
  // a failure below an admissible stretch stops the scan
  EXPECT_EQ(dyadic_threshold(r, [](double rho, std::size_t) { return rho != 2; }), 4.0);
}

TEST(Radii, UnitCoefficient) {
  const LatticeGrid g(2, 32, 32.0);
  const LatticeField a(g, 1, 1.0);
  const auto rd = compute_r_diamond(a, lognormal_moment_sum(0.0, 3.0));
  for (double v : rd.values) EXPECT_DOUBLE_EQ(v, 1.0);
  EXPECT_EQ(rd.saturated_count(), 0u);
  const auto cs = compute_correctors(a);
  const auto rs = compute_r_star(cs, rd, 10.0, 4);
  EXPECT_EQ(rs.values.size(), 64u);
  for (double v : rs.values) EXPECT_DOUBLE_EQ(v, 1.0);
  const auto sp = compute_r_spade(cs, 1.0, 10.0);
  EXPECT_DOUBLE_EQ(sp.radius, 1.0);
  EXPECT_FALSE(sp.saturated);
  EXPECT_NEAR(compute_r_club(LatticeField(LatticeGrid(2, 64, 64.0), 1, 1.0), 16.0, 1.0), 0.25, 1e-15);
}

TEST(Radii, SaturationWhenMomentIsWrong) {
  const LatticeGrid g(2, 16, 16.0);
  const auto rd = compute_r_diamond(LatticeField(g, 1, 1.0), 1000.0);
  EXPECT_EQ(rd.saturated_count(), g.sites());
  for (double v : rd.values) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(Radii, StarDominatesDiamond) {
  const LatticeGrid g(2, 64, 64.0);
  const auto a = lognormal(g, 31);
  const auto rd = compute_r_diamond(a, lognormal_moment_sum(0.5, 3.0));
  const auto cs = compute_correctors(a);
  const int stride = 4;
  const auto rs = compute_r_star(cs, rd, 10.0, stride);
  for (std::size_t s = 0; s < rs.values.size(); ++s) {
    EXPECT_GE(rs.values[s], rd.values[fine_site(g, rs.grid, stride, s)] - 1e-12);
    EXPECT_GE(rs.values[s], 1.0);
    EXPECT_LE(rs.values[s], 16.0 + 1e-12);
  }
}

TEST(Radii, SpadeMonotoneInConstantAndFieldAgrees) {
  const LatticeGrid g(2, 64, 64.0);
  const auto a = lognormal(g, 32, 1.0);
  const auto rd = compute_r_diamond(a, lognormal_moment_sum(1.0, 3.0));
  const auto cs = compute_correctors(a);
  double prev = 1e9;
  for (double C : {0.05, 0.2, 1.0, 10.0}) {
    const auto r = compute_r_spade(cs, rd.values[0], C, 0);
    EXPECT_LE(r.radius, prev);
    prev = r.radius;
  }
  const auto field = compute_r_spade_field(cs, rd, 0.2, 8);
  for (std::size_t s = 0; s < field.values.size(); ++s) {
    const std::size_t x = fine_site(g, field.grid, 8, s);
    EXPECT_DOUBLE_EQ(field.values[s], compute_r_spade(cs, rd.values[x], 0.2, x).radius);
  }
}

TEST(Radii, ClubScaling) {
  const LatticeGrid g(2, 64, 64.0);
  const auto a = lognormal(g, 33);
  const double r8 = compute_r_club(a, 8.0, 0.5);
  double sup = 0.0;
  for (std::size_t x : ball_sites(g, 0, 8.0)) sup = std::max(sup, a.values[x] + 1.0 / a.values[x]);
  EXPECT_NEAR(r8, sup * sup / std::sqrt(8.0), 1e-12 * r8);
  EXPECT_THROW(compute_r_club(a, 8.0, 0.0), Error);
}

TEST(TailFit, RecoversStretchedLogTail) {
  // X = exp(sqrt(E / c)) - 1 with E ~ Exp(1) has P(X >= x) = exp(-c log^2(1 + x))
  const double c = 0.5;
  std::mt19937_64 gen(5);
  std::exponential_distribution<double> E(1.0);
  std::vector<double> x(200000);
  for (double& v : x) v = std::expm1(std::sqrt(E(gen) / c));
  const auto f = fit_log2_tail(x);
  EXPECT_NEAR(f.c_hat, c, 0.05 * c);
  EXPECT_GT(f.r_squared, 0.99);
  EXPECT_GE(f.points, 3u);
  TailFitOptions lo;
  lo.abscissa = TailAbscissa::Log;
  EXPECT_LT(fit_log2_tail(x, lo).r_squared, f.r_squared);
}

TEST(TailFit, PowerLawPrefersLogAbscissa) {
  // P(X >= x) = (1 + x)^{-2}
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::vector<double> x(200000);
  for (double& v : x) v = std::pow(1.0 - U(gen), -0.5) - 1.0;
  TailFitOptions lo;
  lo.abscissa = TailAbscissa::Log;
  const auto pl = fit_log2_tail(x, lo);
  EXPECT_NEAR(pl.c_hat, 2.0, 0.1);
  EXPECT_GT(pl.r_squared, fit_log2_tail(x).r_squared);
}

TEST(TailFit, InsufficientTail) {
  try {
    fit_log2_tail(std::vector<double>(1000, 0.5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientTail);
  }
  EXPECT_THROW(fit_log2_tail(std::vector<double>(1000, 2.0)), Error);
}

TEST(TailFit, CensoredSamplesCountInTotal) {
  std::mt19937_64 gen(8);
  std::exponential_distribution<double> E(1.0);
  std::vector<double> x(20000);
  for (double& v : x) v = std::expm1(std::sqrt(E(gen) / 0.5));
  const auto a = fit_log2_tail(x);
  const auto b = fit_log2_tail(x, {}, 100);
  EXPECT_EQ(b.censored_count, 100u);
  EXPECT_EQ(b.sample_count, a.sample_count);
  EXPECT_NE(a.intercept, b.intercept);
}

TEST(EnergyDiagnostics, UnitCoefficient) {
  const LatticeGrid g(2, 64, 64.0);
  const auto cs = compute_correctors(LatticeField(g, 1, 1.0));
  const auto hf = hole_filling_experiment(cs, 0, {1, 2, 4, 8}, 16.0);
  EXPECT_DOUBLE_EQ(hf.beta_hat, 2.0);
  EXPECT_NEAR(hf.ratio_constant, 1.0, 1e-12);
  for (double e : hf.energies) EXPECT_NEAR(e, 1.0, 1e-12);
  EXPECT_NEAR(mean_value_experiment(cs, 0, 1.0, 16.0), 1.0, 1e-12);
}

TEST(EnergyDiagnostics, EnergyDensityTotalsMatchAhom) {
  const LatticeGrid g(2, 32, 32.0);
  CorrectorOptions o;
  o.solve.tol = 1e-12;
  const auto cs = compute_correctors(lognormal(g, 34), o);
  for (int e = 0; e < 2; ++e) {
    double tot = 0.0;
    for (double v : energy_density(cs, e, true)) tot += v;
    EXPECT_NEAR(tot / g.sites(), cs.ahom_sample(e, e), 1e-9);
  }
}
