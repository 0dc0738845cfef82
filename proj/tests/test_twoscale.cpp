#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "loghom/field.hpp"
#include "loghom/twoscale.hpp"

using namespace loghom;

namespace {

LatticeField lognormal(const LatticeGrid& g, std::uint64_t seed, double amp = 1.0) {
  return sample_coefficient(g, CovarianceSpec{CovarianceFamily::GaussianKernel, amp, 2.0}, RngKey{seed});
}

LatticeField mode(const LatticeGrid& g, const Coord& m) {
  LatticeField f(g, 1);
  for (std::size_t s = 0; s < g.sites(); ++s) {
    const Coord c = g.coords(s);
    double ph = 0.0;
    for (int j = 0; j < g.dim; ++j) ph += 2.0 * std::numbers::pi * m[j] * c[j] / g.n_per_side;
    f.values[s] = std::cos(ph);
  }
  return f;
}

}  // namespace

TEST(LocalAverage, PreservesConstantsAndContracts) {
  const LatticeGrid g(2, 32, 32.0);
  const auto c = local_average(LatticeField(g, 2, 1.5), 3.0);
  for (double v : c.values) EXPECT_NEAR(v, 1.5, 1e-14);
  const auto f = lognormal(g, 51);
  const auto s = local_average(f, 2.0);
  double lo = 1e300, hi = -1e300;
  for (double v : f.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : s.values) {
    EXPECT_GE(v, lo - 1e-12);
    EXPECT_LE(v, hi + 1e-12);
  }
  EXPECT_THROW(local_average(f, 0.5), Error);
}

TEST(LocalAverage, FourierAttenuation) {
  const LatticeGrid g(2, 32, 16.0);
  const Coord m{3, 1, 0};
  const double radius = 1.5;
  const auto offs = ball_offsets(g, radius);
  double factor = 0.0;
  for (const Coord& o : offs) factor += std::cos(2.0 * std::numbers::pi * (m[0] * o[0] + m[1] * o[1]) / g.n_per_side);
  factor /= offs.size();
  const auto u = mode(g, m);
  const auto s = local_average(u, radius);
  for (std::size_t x = 0; x < g.sites(); ++x) EXPECT_NEAR(s.values[x], factor * u.values[x], 1e-12);
}

TEST(TwoScale, TrivialCorrectorGivesAveragedUbar) {
  const LatticeGrid g(2, 32, 32.0);
  const auto cs = compute_correctors(LatticeField(g, 1, 1.0));
  const auto ubar = mode(g, {1, 2, 0});
  const auto e = two_scale_expansion(ubar, cs);
  const auto s = local_average(ubar, 1.0);
  for (std::size_t x = 0; x < g.sites(); ++x) EXPECT_NEAR(e.values[x], s.values[x], 1e-14);
}

TEST(TwoScale, ExpansionAddsCorrectorTerm) {
  const LatticeGrid g(2, 32, 32.0);
  const auto cs = compute_correctors(lognormal(g, 52));
  const auto ubar = mode(g, {1, 0, 0});
  const auto e = two_scale_expansion(ubar, cs);
  const auto s = local_average(ubar, 1.0);
  const auto grad = local_average(cell_centered(gradient(ubar)), 1.0);
  for (std::size_t x = 0; x < g.sites(); ++x) {
    const double ref = s.values[x] + cs.phi[0].values[x] * grad.at(x, 0) + cs.phi[1].values[x] * grad.at(x, 1);
    EXPECT_NEAR(e.values[x], ref, 1e-13);
  }
}

TEST(TwoScale, OneDimensionalClosedForm) {
  const LatticeGrid g(1, 512, 512.0);
  CorrectorOptions o;
  o.solve.tol = 1e-13;
  const auto cs = compute_correctors(lognormal(g, 53), o);
  const double eps = 1.0 / 64.0;
  const auto f = bump_vector_field(g, eps, 0);
  const auto U = solve_divform(cs.edges, nullptr, &f, SolveOptions{1e-12, 0, false});
  double mf = 0.0, mi = 0.0;
  for (std::size_t s = 0; s < g.sites(); ++s) {
    mf += f.values[s] / cs.edges.values[s];
    mi += 1.0 / cs.edges.values[s];
  }
  const double c = mf / mi;
  const auto DU = gradient(U.u);
  for (std::size_t s = 0; s < g.sites(); ++s) {
    EXPECT_NEAR(DU.values[s], (c - f.values[s]) / cs.edges.values[s], 1e-8);
  }
  // ubar with the harmonic mean: ahom DUbar = mean(f) - f
  const double H = g.sites() / mi;
  const auto ubar = solve_constant_coefficient(Eigen::MatrixXd::Constant(1, 1, H), f);
  const auto Dub = gradient(ubar);
  const double fbar = f.mean();
  for (std::size_t s = 0; s < g.sites(); ++s) EXPECT_NEAR(Dub.values[s], (fbar - f.values[s]) / H, 1e-10);
}

TEST(TwoScale, SampleEnergyIdentityAndScaleCheck) {
  const LatticeGrid g(2, 64, 64.0);
  CorrectorOptions o;
  o.solve.tol = 1e-12;
  const auto cs = compute_correctors(lognormal(g, 54), o);
  const auto s = two_scale_sample(cs, cs.ahom_sample, 1.0 / 16.0, 0, SolveOptions{1e-12, 0, false});
  EXPECT_LT(s.energy_residual, 1e-9);
  EXPECT_GT(s.error2, 0.0);
  EXPECT_TRUE(s.report.converged);
  try {
    two_scale_sample(cs, cs.ahom_sample, 1.0 / 32.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ScaleMismatch);
  }
  EXPECT_NO_THROW(two_scale_sample(cs, cs.ahom_sample, 1.0 / 4.0));
  EXPECT_THROW(two_scale_sample(cs, cs.ahom_sample, 1.0 / 3.0), Error);
}

TEST(TwoScale, MiddleHalfAndEnergyDensity) {
  const LatticeGrid g(2, 16, 16.0);
  std::size_t count = 0;
  for (std::size_t s = 0; s < g.sites(); ++s) count += in_middle_half(g, s);
  EXPECT_EQ(count, 49u);
  const auto a = lognormal(g, 55);
  const auto aE = edge_coefficients(a);
  const auto w = mode(g, {1, 1, 0});
  const auto Dw = gradient(w);
  double ref = 0.0;
  for (std::size_t i = 0; i < Dw.values.size(); ++i) ref += aE.values[i] * Dw.values[i] * Dw.values[i];
  double tot = 0.0;
  for (double v : edge_energy_density(aE, w)) tot += v;
  EXPECT_NEAR(tot, ref, 1e-12 * ref);
}

TEST(TwoScale, ErrorFitOnSyntheticData) {
  const std::vector<double> eps{0.25, 0.125, 0.0625};
  std::vector<std::vector<double>> e2;
  for (double e : eps) e2.push_back({4.0 * e * e, 4.0 * e * e});
  const auto f = expansion_error_fit(3, eps, e2);
  EXPECT_NEAR(f.power.slope, 1.0, 1e-12);
  EXPECT_NEAR(f.error[0], 0.5, 1e-15);
  EXPECT_NEAR(f.log_corrected.slope, 1.0, 1e-12);
  EXPECT_THROW(expansion_error_fit(3, {0.5, 0.25}, {{1.0}, {1.0}}), Error);
}
