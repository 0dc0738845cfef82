#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "loghom/field.hpp"
#include "loghom/fluctuations.hpp"
#include "loghom/radii.hpp"

using namespace loghom;

namespace {

LatticeField lognormal(const LatticeGrid& g, std::uint64_t seed, double amp = 1.0) {
  return sample_coefficient(g, CovarianceSpec{CovarianceFamily::GaussianKernel, amp, 2.0}, RngKey{seed});
}

CorrectorSet tight_correctors(const LatticeField& a) {
  CorrectorOptions o;
  o.solve.tol = 1e-12;
  return compute_correctors(a, o);
}

}  // namespace

TEST(Fluctuations, UnitCoefficientGivesZeros) {
  const LatticeGrid g(2, 64, 64.0);
  const auto cs = compute_correctors(LatticeField(g, 1, 1.0));
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_EQ(clt_second_moment(cs, 8.0), 0.0);
  for (const auto& o : avg_gradient_observable(cs, 4.0, 0, true)) EXPECT_EQ(o.value, 0.0);
  EXPECT_NEAR(corrector_growth_second_moment(cs, 4.0), 0.0, 1e-20);
  const auto xi = build_commutator(cs, I);
  EXPECT_LT(xi.xi.max_abs(), 1e-15);
  for (const auto& M : coordinate_test_tensors(2)) EXPECT_NEAR(commutator_observable(xi, M, 1.0 / 16).value, 0.0, 1e-14);
  const auto pw = pathwise_fluctuation_experiment(cs, xi, 0, 1, 1.0 / 16);
  EXPECT_NEAR(pw.solution_pairing, 0.0, 1e-10);
  EXPECT_NEAR(pw.commutator_pairing, 0.0, 1e-14);
}

TEST(Fluctuations, ScaleMismatch) {
  const LatticeGrid g(2, 64, 32.0);
  try {
    bump_weights(g, 1.0 / 3.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ScaleMismatch);
  }
  EXPECT_THROW(bump_weights(g, 1.0 / 64.0), Error);
  EXPECT_NO_THROW(bump_weights(g, 1.0 / 4.0));
  EXPECT_THROW(bump_weights(g, 1.0 / 2.0), Error);
  EXPECT_NO_THROW(bump_weights(g, 1.0 / 2.0, 0, 4.0));
}

TEST(Fluctuations, BumpNormMatchesContinuum) {
  double ref = 0.0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double r = 0.5 * (i + 0.5) / N;
    ref += bump(r) * bump(r) * 2.0 * std::numbers::pi * r * 0.5 / N;
  }
  EXPECT_NEAR(bump_norm2(LatticeGrid(2, 128, 128.0), 1.0 / 64.0), ref, 1e-3 * ref);
  EXPECT_EQ(bump(0.5), 0.0);
  EXPECT_NEAR(bump(0.0), std::exp(-1.0), 1e-15);
}

TEST(Fluctuations, CommutatorMeanVanishesWithSampleAhom) {
  const LatticeGrid g(2, 64, 64.0);
  const auto cs = tight_correctors(lognormal(g, 41));
  const auto xi = build_commutator(cs, cs.ahom_sample.transpose());
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(xi.xi.mean(c), 0.0, 1e-12);
}

TEST(Fluctuations, OneDimensionalCommutatorOracle) {
  const LatticeGrid g(1, 256, 256.0);
  const auto cs = tight_correctors(lognormal(g, 42));
  double inv = 0.0;
  for (double v : cs.edges.values) inv += 1.0 / v;
  const double H = g.sites() / inv;
  const auto xi = build_commutator(cs, Eigen::MatrixXd::Constant(1, 1, H));
  for (std::size_t s = 0; s < g.sites(); ++s) {
    const double cc = 0.5 * (1.0 / cs.edges.values[s] + 1.0 / cs.edges.values[g.shift(s, 0, -1)]);
    EXPECT_NEAR(xi.xi.values[s], H * (1.0 - H * cc), 1e-9);
  }
}

TEST(Fluctuations, PairingAllMatchesDirect) {
  const LatticeGrid g(2, 64, 64.0);
  const auto cs = compute_correctors(lognormal(g, 43));
  const auto xi = build_commutator(cs, cs.ahom_sample);
  Eigen::MatrixXd M(2, 2);
  M << 1.0, 0.3, -0.2, 0.5;
  const auto all = commutator_pairing_all(xi, M, 1.0 / 16);
  for (std::size_t c : {std::size_t{0}, std::size_t{77}, std::size_t{2049}}) {
    EXPECT_NEAR(all[c], commutator_observable(xi, M, 1.0 / 16, c).value, 1e-10);
  }
}

TEST(Fluctuations, EstimateQRecoversSyntheticCovariance) {
  const int d = 2;
  Eigen::MatrixXd B = Eigen::MatrixXd::Random(4, 4);
  const Eigen::MatrixXd Q = B * B.transpose() + Eigen::MatrixXd::Identity(4, 4);
  const double chi2 = 0.3;
  const Eigen::MatrixXd L = (Q * chi2).llt().matrixL();
  const auto tensors = coordinate_test_tensors(d);
  std::mt19937_64 gen(9);
  std::normal_distribution<double> Z;
  const int reps = 20000;
  std::vector<std::vector<double>> samples(tensors.size());
  for (int r = 0; r < reps; ++r) {
    Eigen::VectorXd z(4);
    for (int i = 0; i < 4; ++i) z(i) = Z(gen);
    const Eigen::VectorXd v = L * z;
    for (std::size_t a = 0; a < tensors.size(); ++a) samples[a].push_back(v(static_cast<Eigen::Index>(a)));
  }
  const auto est = estimate_Q(tensors, samples, chi2);
  EXPECT_LT((est.Q - est.Q.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  for (int p = 0; p < 4; ++p) {
    for (int q = 0; q < 4; ++q) EXPECT_NEAR(est.Q(p, q), Q(p, q), 5.0 * est.stderr_(p, q) + 1e-12);
  }
  Eigen::MatrixXd M(2, 2);
  M << 1.0, 2.0, 0.0, -1.0;
  Eigen::VectorXd v(4);
  v << 1.0, 2.0, 0.0, -1.0;
  EXPECT_NEAR(q_form(Q, M), v.dot(Q * v), 1e-12);
}

TEST(Fluctuations, EstimateQRankDeficient) {
  std::vector<Eigen::MatrixXd> tensors;
  for (int i = 0; i < 2; ++i) {
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
    M(i, i) = 1.0;
    tensors.push_back(M);
  }
  const std::vector<std::vector<double>> samples{{1.0, 2.0, 0.5}, {0.3, -1.0, 2.0}};
  try {
    estimate_Q(tensors, samples, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::RankDeficient);
  }
}

TEST(Fluctuations, GrowthObservableIsBallOscillationAtOrigin) {
  const LatticeGrid g(2, 32, 32.0);
  const auto cs = compute_correctors(lognormal(g, 44));
  const double p = 2.0 * 3.0 / 2.0;
  const auto w = cs.phi_sigma();
  const auto o = corrector_growth_observable(cs, 0, 0);
  EXPECT_NEAR(o.value, ball_oscillation(w, 0, ball_offsets(g, 1.0), p), 1e-13);
  double acc = 0.0;
  for (std::size_t z = 0; z < g.sites(); ++z) {
    const double v = ball_oscillation(w, z, ball_offsets(g, 1.0), p);
    acc += v * v;
  }
  EXPECT_NEAR(corrector_growth_second_moment(cs, 0.0), acc / g.sites(), 1e-12);
  const std::size_t x = g.site({3, 0, 0});
  double brute = 0.0;
  for (std::size_t z = 0; z < g.sites(); ++z) {
    for (int axis = 0; axis < 2; ++axis) {
      const double v = corrector_growth_observable(cs, g.shift(z, axis, 3), z).value;
      brute += v * v;
    }
  }
  EXPECT_NEAR(corrector_growth_second_moment(cs, 3.0), brute / (2.0 * g.sites()), 1e-12);
  EXPECT_DOUBLE_EQ(corrector_growth_observable(cs, x, 0).scale, 3.0);
  EXPECT_THROW(corrector_growth_second_moment(cs, 1.5), Error);
}

TEST(Fluctuations, ScalingFitAndGrowthRates) {
  const std::vector<double> x{2, 4, 8, 16};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * std::pow(v, -2.0));
  const auto f = fit_scaling(x, y);
  EXPECT_NEAR(f.slope, -2.0, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  const auto fw = fit_scaling(x, y, {0.1, 0.01, 0.001, 0.0001});
  EXPECT_NEAR(fw.slope, -2.0, 1e-12);
  EXPECT_THROW(fit_scaling({1, 2}, {1, 2}), Error);
  EXPECT_DOUBLE_EQ(mu_d(1, 3.0), 2.0);
  EXPECT_DOUBLE_EQ(mu_d(2, 0.0), std::sqrt(std::log(2.0)));
  EXPECT_DOUBLE_EQ(mu_d(3, 100.0), 1.0);
  const std::vector<double> t{1, 3, 7};
  std::vector<double> m;
  for (double v : t) m.push_back(0.5 + 2.0 * std::log(v + 2.0));
  EXPECT_NEAR(fit_growth(2, t, m).slope, 2.0, 1e-12);
}

TEST(Fluctuations, CltMomentMatchesDirectAverages) {
  const LatticeGrid g(2, 32, 32.0);
  const auto cs = compute_correctors(lognormal(g, 45));
  double acc = 0.0;
  for (std::size_t c = 0; c < g.sites(); ++c) {
    for (int j = 0; j < 2; ++j) {
      const double v = ball_average_at(cs.grad_phi[0], c, 4.0, j);
      acc += v * v;
    }
  }
  EXPECT_NEAR(clt_second_moment(cs, 4.0, 0), acc / g.sites(), 1e-12);
}

TEST(Fluctuations, PathwiseSummary) {
  std::vector<PathwiseSample> s(4);
  const double p1[] = {1.0, 2.0, 3.0, 6.0};
  const double p2[] = {-2.0, -1.0, 0.0, 3.0};
  for (int i = 0; i < 4; ++i) {
    s[i].eps = 0.125;
    s[i].solution_pairing = p1[i];
    s[i].commutator_pairing = p2[i];
  }
  const auto out = summarize_pathwise(s);
  EXPECT_NEAR(out.residual_rms, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(out.solution_pairing_variance, 14.0 / 3.0);
}
