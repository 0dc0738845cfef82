#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "loghom/covariance.hpp"
#include "loghom/field.hpp"
#include "loghom/rng.hpp"
#include "loghom/stats.hpp"

using namespace loghom;

TEST(Philox, KnownAnswerZeroCounterZeroKey) {
  const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x6627e8d5u);
  EXPECT_EQ(out[1], 0xe169c58du);
  EXPECT_EQ(out[2], 0xbc57ac4cu);
  EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
  const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
  EXPECT_EQ(out[0], 0x408f276du);
  EXPECT_EQ(out[1], 0x41c83b0eu);
  EXPECT_EQ(out[2], 0xa20bc7c6u);
  EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(CounterRng, StreamsAreDeterministicAndDistinct) {
  CounterRng a(RngKey{7, 3, 0}), b(RngKey{7, 3, 0}), c(RngKey{7, 4, 0});
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    EXPECT_EQ(x, b.uniform());
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
  EXPECT_NE(a.next_u64(), c.next_u64());
}

TEST(CounterRng, NormalMoments) {
  CounterRng r(RngKey{11});
  std::vector<double> v(200000);
  for (double& x : v) x = r.normal();
  EXPECT_NEAR(stats::mean(v), 0.0, 0.01);
  EXPECT_NEAR(stats::variance(v), 1.0, 0.01);
}

TEST(Covariance, ClosedForms) {
  CovarianceSpec g{CovarianceFamily::GaussianKernel, 1.0, 1.0};
  EXPECT_DOUBLE_EQ(covariance_at_distance(g, 0.0), 1.0);
  EXPECT_NEAR(covariance_at_distance(g, 1.0), 0.60653, 1e-5);
  CovarianceSpec e{CovarianceFamily::ExponentialKernel, 0.5, 2.0};
  EXPECT_NEAR(covariance_at_distance(e, 2.0), 0.18394, 1e-5);
  const double x[2] = {0.6, 0.8};
  EXPECT_NEAR(covariance_eval(g, x), std::exp(-0.5), 1e-12);
  CovarianceSpec s{CovarianceFamily::SphericalCutoff, 1.0, 2.0};
  EXPECT_DOUBLE_EQ(covariance_at_distance(s, 3.0), 0.0);
  EXPECT_TRUE(satisfies_convolution_square(g, 2));
  EXPECT_FALSE(satisfies_convolution_square(e, 2));
}

TEST(Covariance, ParseFamilies) {
  EXPECT_EQ(parse_covariance_family("gaussian_kernel"), CovarianceFamily::GaussianKernel);
  EXPECT_EQ(parse_covariance_family("exponential"), CovarianceFamily::ExponentialKernel);
  EXPECT_THROW(parse_covariance_family("cauchy"), Error);
}

TEST(Sampling, ZeroAmplitudeGivesZeroField) {
  const LatticeGrid g(2, 32, 32.0);
  CovarianceSpec spec{CovarianceFamily::GaussianKernel, 1e-30, 2.0};
  const LatticeField G = sample_gaussian_field(g, spec, RngKey{1});
  EXPECT_LT(G.max_abs(), 1e-14);
  EXPECT_EQ(sample_gaussian_field(g, CovarianceSpec{CovarianceFamily::GaussianKernel, 0.0, 2.0}, RngKey{1}).max_abs(), 0.0);
}

TEST(Sampling, BitIdenticalReplay) {
  const LatticeGrid g(2, 32, 32.0);
  CovarianceSpec spec{};
  const auto a = sample_gaussian_field(g, spec, RngKey{5, 2, 0});
  const auto b = sample_gaussian_field(g, spec, RngKey{5, 2, 0});
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.meta.seed, RngKey(5, 2, 0).fingerprint());
}

TEST(Sampling, PsdViolationReportsWorstMode) {
  const LatticeGrid g(1, 16, 16.0);
  CovarianceSpec spec{};
  SamplingOptions opt;
  opt.psd_tol = -1.0;  // every non-maximal eigenvalue now counts as a violation
  try {
    sample_gaussian_field(g, spec, RngKey{1}, opt);
    FAIL() << "expected SpectrumNotPSD";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SpectrumNotPSD);
  }
}

TEST(Sampling, EigenvaluesNonNegativeForDefaultFamilies) {
  for (auto fam : {CovarianceFamily::GaussianKernel, CovarianceFamily::ExponentialKernel, CovarianceFamily::SphericalCutoff}) {
    const LatticeGrid g(2, 32, 32.0);
    const auto lam = covariance_eigenvalues(g, CovarianceSpec{fam, 1.0, 2.0});
    const double lmax = *std::max_element(lam.begin(), lam.end());
    for (double l : lam) EXPECT_GT(l, -1e-8 * lmax);
  }
}

// Site variance and lag-l covariance pooled over 200 replicas.
TEST(Sampling, VarianceAndLagCovariance) {
  const LatticeGrid g(2, 128, 128.0);
  CovarianceSpec spec{CovarianceFamily::GaussianKernel, 1.0, 2.0};
  std::vector<double> var, lag;
  for (std::uint32_t r = 0; r < 200; ++r) {
    const auto G = sample_gaussian_field(g, spec, RngKey{2024, r, 0});
    double s2 = 0.0, sl = 0.0;
    for (std::size_t s = 0; s < g.sites(); ++s) {
      s2 += G.values[s] * G.values[s];
      sl += G.values[s] * G.values[g.shift(s, 0, 2)];
    }
    var.push_back(s2 / g.sites());
    lag.push_back(sl / g.sites());
  }
  EXPECT_LE(std::abs(stats::mean(var) - 1.0), 3.0 * stats::stderr_of_mean(var));
  EXPECT_LE(std::abs(stats::mean(lag) - std::exp(-0.5)), 3.0 * stats::stderr_of_mean(lag));
}

TEST(Coefficient, ExpOfZeroIsOne) {
  const LatticeGrid g(2, 8, 8.0);
  const auto a = exp_field(LatticeField(g, 1, 0.0));
  for (double v : a.values) EXPECT_EQ(v, 1.0);
}

TEST(Coefficient, LognormalSecondMomentAndSymmetry) {
  const LatticeGrid g(2, 64, 64.0);
  CovarianceSpec spec{CovarianceFamily::GaussianKernel, 1.0, 2.0};
  std::vector<double> m2, m1, minv;
  for (std::uint32_t r = 0; r < 200; ++r) {
    const auto a = sample_coefficient(g, spec, RngKey{99, r, 0});
    double s2 = 0.0, s1 = 0.0, si = 0.0;
    for (double v : a.values) {
      s2 += v * v;
      s1 += v;
      si += 1.0 / v;
    }
    m2.push_back(s2 / g.sites());
    m1.push_back(s1 / g.sites());
    minv.push_back(si / g.sites());
  }
  EXPECT_LE(std::abs(stats::mean(m2) - std::exp(2.0)), 3.0 * stats::stderr_of_mean(m2));
  std::vector<double> diff(m1.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = m1[i] - minv[i];
  EXPECT_LE(std::abs(stats::mean(diff)), 3.0 * stats::stderr_of_mean(diff));
}

TEST(Truncation, ClampSemantics) {
  const LatticeGrid g(1, 8, 8.0);
  LatticeField a(g, 1, 1.0);
  EXPECT_EQ(truncate_coefficient(a, 10.0).values, a.values);
  a.values[3] = 100.0;
  a.values[5] = 1e-4;
  const auto t = truncate_coefficient(a, 10.0);
  EXPECT_EQ(t.values[3], 10.0);
  EXPECT_EQ(t.values[5], 0.1);
  EXPECT_EQ(t.values[0], 1.0);
  EXPECT_THROW(truncate_coefficient(a, 0.5), Error);
}

TEST(Truncation, ClampedFractionMatchesGaussianTail) {
  const LatticeGrid g(2, 128, 128.0);
  CovarianceSpec spec{CovarianceFamily::GaussianKernel, 1.0, 2.0};
  std::vector<double> frac;
  for (std::uint32_t r = 0; r < 100; ++r) frac.push_back(clamped_fraction(sample_coefficient(g, spec, RngKey{7, r, 0}), std::exp(3.0)));
  const double expected = 2.0 * stats::normal_sf(3.0);
  EXPECT_NEAR(expected, 0.0027, 1e-4);
  EXPECT_LE(std::abs(stats::mean(frac) - expected), 3.0 * stats::stderr_of_mean(frac));
}
