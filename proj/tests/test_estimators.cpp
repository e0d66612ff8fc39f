#include "oracles.hpp"
#include "performa/estimators.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace performa;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Matrix diag(std::initializer_list<double> xs) { return vec(xs).asDiagonal(); }

SampleBatch unlabeled_batch(const Matrix& x) {
  SampleBatch b;
  b.x = x;
  b.y.assign(static_cast<std::size_t>(x.rows()), 0);
  b.deployed = Vector::Zero(x.cols());
  return b;
}

Vector mean_of(const std::vector<GradientEstimate>& reps) {
  Vector m = Vector::Zero(reps.front().value.size());
  for (const auto& r : reps) m += r.value;
  return m / static_cast<double>(reps.size());
}

GaussianMeanCase isotropic_case(Eigen::Index d, double sigma, Vector a = {}) {
  GaussianMeanCase c{Matrix::Identity(d, d), sigma, Vector::Zero(d), Vector::Zero(d)};
  if (a.size()) c.theta_prime = -a;  // a = Pi theta - theta' with theta = 0
  return c;
}

}  // namespace

TEST(RpGradient, ZeroShiftGivesZero) {
  std::mt19937_64 rng(1);
  Matrix x(5, 2);
  for (Eigen::Index i = 0; i < 5; ++i) x.row(i) = oracles::random_vector(2, rng).transpose();
  const auto g = rp_gradient(unlabeled_batch(x), ShiftOperator::zero(2), Loss::mean_estimation(), vec({1, 2}));
  EXPECT_TRUE(g.value.isZero());
  EXPECT_EQ(g.n, 5u);
  EXPECT_EQ(g.kind, EstimatorKind::RP);
}

TEST(RpGradient, PricingIsMinusTheta) {
  const auto b = unlabeled_batch(Matrix::Random(7, 2));
  const auto g = rp_gradient(b, ShiftOperator::identity(2), Loss::pricing(), vec({0.3, -2}));
  EXPECT_TRUE(g.value.isApprox(vec({-0.3, 2})));
}

TEST(RpGradient, GaussianMeanCaseFormula) {
  Matrix u(3, 2);
  u << 0.1, 0.2, -0.4, 0.0, 1.0, 1.0;
  const Matrix pi = diag({2, 0.5});
  const Vector theta = vec({1, -1}), theta_prime = vec({0.5, 0.5});
  const Vector a = pi * theta - theta_prime;
  Matrix z = u;
  z.rowwise() += (pi * theta).transpose();
  const auto g = rp_gradient(unlabeled_batch(z), ShiftOperator(pi), Loss::mean_estimation(), theta_prime);
  const Vector want = pi.transpose() * (u.colwise().mean().transpose() + a);
  EXPECT_TRUE(g.value.isApprox(want));
}

TEST(RpGradient, ClassOneRowsAreSkippedButCounted) {
  SampleBatch b;
  b.x = Matrix::Ones(4, 2);
  b.y = {0, 1, 1, 0};
  const Vector theta = vec({1, 1});
  const auto g = rp_gradient(b, ShiftOperator::identity(2), Loss::classification(SurrogateKind::quadratic), theta);
  // class 0 rows: s = -1, v = -2, Phi'(-2) = -6, grad_z = 6 theta; averaged over 4 rows.
  EXPECT_TRUE(g.value.isApprox(0.5 * 6.0 * theta));
}

TEST(RpGradient, RejectsBadInput) {
  EXPECT_THROW(rp_gradient(unlabeled_batch(Matrix(0, 2)), ShiftOperator::identity(2), Loss::pricing(), vec({0, 0})),
               std::invalid_argument);
  EXPECT_THROW(rp_gradient(unlabeled_batch(Matrix::Ones(2, 2)), ShiftOperator::identity(3), Loss::pricing(),
                           vec({0, 0, 0})),
               std::invalid_argument);
}

TEST(SfGradient, ZeroScoreGivesZero) {
  const auto model = PerformativeModel::unlabeled(GaussianLaw::isotropic(vec({1, 2}), 1.0), ShiftOperator::identity(2));
  const Vector theta = vec({0.5, 0.5});
  const GaussianScore score(model, theta);
  Matrix z(3, 2);
  z.rowwise() = model.class0_mean(theta).transpose();
  const auto g = sf_gradient(unlabeled_batch(z), score, Loss::mean_estimation(), theta);
  EXPECT_LT(g.value.norm(), 1e-15);
  EXPECT_EQ(g.kind, EstimatorKind::SF);
}

TEST(SfGradient, SingleSampleCubic) {
  const auto model = PerformativeModel::unlabeled(GaussianLaw::isotropic(vec({0}), 1.0), ShiftOperator::identity(1));
  const GaussianScore score(model, vec({0}));
  for (double u : {-1.3, 0.2, 2.0}) {
    const auto g = sf_gradient(unlabeled_batch(Matrix::Constant(1, 1, u)), score, Loss::mean_estimation(), vec({0}));
    EXPECT_NEAR(g.value[0], u * u * u / 2.0, 1e-14);
  }
  const auto b = sf_gradient(unlabeled_batch(Matrix::Constant(1, 1, 2.0)), score, Loss::mean_estimation(), vec({0}), 1.5);
  EXPECT_NEAR(b.value[0], (2.0 - 1.5) * 2.0, 1e-14);
  EXPECT_EQ(b.kind, EstimatorKind::SF_baseline);
  ASSERT_TRUE(b.baseline);
  EXPECT_EQ(*b.baseline, 1.5);
}

TEST(SfGradient, UnavailableWithoutDensity) {
  const auto pooled = PerformativeModel::unlabeled(EmpiricalPool{Matrix::Ones(3, 2)}, ShiftOperator::identity(2));
  EXPECT_THROW(GaussianScore(pooled, vec({0, 0})), std::invalid_argument);
  const auto degenerate =
      PerformativeModel::unlabeled(GaussianLaw::isotropic(vec({0, 0}), 0.0), ShiftOperator::identity(2));
  EXPECT_THROW(GaussianScore(degenerate, vec({0, 0})), std::invalid_argument);
}

TEST(CovRp, Examples) {
  EXPECT_DOUBLE_EQ(cov_rp_analytic(isotropic_case(1, 1.0), 1)(0, 0), 1.0);
  auto c = isotropic_case(2, 1.0);
  c.pi.setZero();
  EXPECT_TRUE(cov_rp_analytic(c, 3).isZero());
  GaussianMeanCase e{diag({1, 2}), 0.5, vec({3, 4}), vec({-1, 0})};
  EXPECT_TRUE(cov_rp_analytic(e, 10).isApprox(diag({0.025, 0.1})));
  // Independent of theta and theta'.
  e.theta = vec({-9, 9});
  EXPECT_TRUE(cov_rp_analytic(e, 10).isApprox(diag({0.025, 0.1})));
}

TEST(CovSf, Examples) {
  EXPECT_DOUBLE_EQ(cov_sf_analytic(isotropic_case(1, 1.0), 1)(0, 0), 3.75);
  for (Eigen::Index d : {2, 5}) {
    GaussianMeanCase c{diag({0.5, 2.0, 1.0, 1.0, 1.0}).topLeftCorner(d, d), 0.7, Vector::Zero(d), Vector::Zero(d)};
    const double dd = static_cast<double>(d);
    const Matrix want = (dd * dd + 6 * dd + 8) * 0.49 / 4.0 * c.pi.transpose() * c.pi / 3.0;
    EXPECT_TRUE(cov_sf_analytic(c, 3).isApprox(want));
  }
  // d = 2: (d^2 + 6d + 8) = 24, 2(d + 4)||a||^2 = 12, ||a||^4 = 1, so (37/4) I + a a^T.
  EXPECT_TRUE(cov_sf_analytic(isotropic_case(2, 1.0, vec({1, 0})), 1).isApprox(diag({10.25, 9.25})));
  EXPECT_THROW(cov_sf_analytic(isotropic_case(2, 0.0), 1), std::invalid_argument);
}

TEST(CovSfBaseline, Examples) {
  const auto one = cov_sf_baseline_optimal(isotropic_case(1, 1.0), 1);
  EXPECT_DOUBLE_EQ(one.covariance(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(one.optimal_m, 3.0);
  EXPECT_DOUBLE_EQ(one.loss_scale_m(), 1.5);
  for (Eigen::Index d : {2, 8, 32, 128}) {
    const auto c = isotropic_case(d, 1.0);
    const double ratio = cov_sf_baseline_optimal(c, 1).covariance.trace() / cov_rp_analytic(c, 1).trace();
    EXPECT_NEAR(ratio, 1.0 + static_cast<double>(d) / 2.0, 1e-12);
  }
  auto z = isotropic_case(3, 2.0, vec({1, 1, 0}));
  const double m_before = cov_sf_baseline_optimal(z, 1).optimal_m;
  z.pi.setZero();
  z.theta_prime = -vec({1, 1, 0});
  const auto zero = cov_sf_baseline_optimal(z, 1);
  EXPECT_TRUE(zero.covariance.isZero());
  EXPECT_DOUBLE_EQ(zero.optimal_m, m_before);
}

TEST(CovSfBaseline, LoewnerBelowPlainSf) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const Eigen::Index d = 1 + k % 5;
    GaussianMeanCase c{oracles::random_psd(d, rng, 1.0, 0.05), 0.3 + 0.1 * k, oracles::random_vector(d, rng),
                       oracles::random_vector(d, rng)};
    const Matrix gap = cov_sf_analytic(c, 4) - cov_sf_baseline_optimal(c, 4).covariance;
    EXPECT_GE(min_eigenvalue(0.5 * (gap + gap.transpose())), -1e-12) << "config " << k;
  }
}

TEST(EmpiricalCovariance, Examples) {
  const auto estimate = [](Vector v) { return GradientEstimate{std::move(v), 1, EstimatorKind::RP, std::nullopt}; };
  const std::vector<GradientEstimate> same(4, estimate(vec({1, 2})));
  EXPECT_TRUE(empirical_covariance(same).isZero());
  const Vector v = vec({1, -3});
  const std::vector<GradientEstimate> pm{estimate(v), estimate(-v)};
  EXPECT_TRUE(empirical_covariance(pm).isApprox(2.0 * v * v.transpose()));
  EXPECT_THROW(empirical_covariance(std::span(pm).first(1)), std::invalid_argument);
}

TEST(MonteCarlo, RpCovarianceMatchesFormula) {
  GaussianMeanCase c{diag({1, 2}), 0.5, vec({0.3, 0.1}), vec({1, 0})};
  const auto reps = replicate_gaussian_mean(c, 10, 200000, 17);
  EXPECT_LT(oracles::relative_error(empirical_covariance(reps.rp), cov_rp_analytic(c, 10)), 0.02);
}

TEST(MonteCarlo, SfCovarianceMatchesFormula) {
  const auto c1 = isotropic_case(1, 1.0);
  const auto r1 = replicate_gaussian_mean(c1, 1, 200000, 23);
  EXPECT_NEAR(empirical_covariance(r1.sf)(0, 0), 3.75, 0.06 * 3.75);
  EXPECT_NEAR(empirical_covariance(r1.sf_baseline)(0, 0), 1.5, 0.06 * 1.5);

  const auto c2 = isotropic_case(2, 1.0, vec({1, 0}));
  const auto r2 = replicate_gaussian_mean(c2, 1, 200000, 29);
  EXPECT_LT(oracles::relative_error(empirical_covariance(r2.sf), diag({10.25, 9.25})), 0.08);
}

TEST(MonteCarlo, BaselineSweepIsMinimizedNearOptimum) {
  const auto c = isotropic_case(1, 1.0);
  const double m_star = cov_sf_baseline_optimal(c, 1).loss_scale_m();
  double best_m = 0.0, best = 1e300;
  for (int k = 0; k <= 20; ++k) {
    const double m = m_star * (0.5 + 0.05 * k);
    // Same seed for every m: the sweep compares baselines on identical draws.
    const auto reps = replicate_gaussian_mean(c, 1, 50000, 31, m);
    const double v = empirical_covariance(reps.sf_baseline)(0, 0);
    if (v < best) best = v, best_m = m;
  }
  EXPECT_NEAR(best_m, m_star, 0.1 * m_star);
}

TEST(Properties, EstimatorsAreUnbiased) {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 5; ++k) {
    const Eigen::Index d = 1 + k % 3;
    GaussianMeanCase c{oracles::random_psd(d, rng, 1.0, 0.1), 0.5 + 0.25 * k, oracles::random_vector(d, rng),
                       oracles::random_vector(d, rng)};
    const Vector want = c.pi.transpose() * c.a();
    const std::size_t reps = 100000;
    const auto r = replicate_gaussian_mean(c, 1, reps, 100 + k);
    for (const auto* set : {&r.rp, &r.sf, &r.sf_baseline}) {
      const Vector se = (empirical_covariance(*set).diagonal() / static_cast<double>(reps)).cwiseSqrt();
      const Vector err = (mean_of(*set) - want).cwiseAbs();
      for (Eigen::Index i = 0; i < d; ++i) EXPECT_LE(err[i], 4.0 * se[i]) << "config " << k << " coord " << i;
    }
  }
}

TEST(Properties, CovarianceOrderingGrowsWithDimension) {
  for (Eigen::Index d : {2, 8, 32}) {
    const auto c = isotropic_case(d, 1.0);
    const auto r = replicate_gaussian_mean(c, 1, 20000, 300 + static_cast<std::uint64_t>(d));
    const double ratio = empirical_covariance(r.sf_baseline).trace() / empirical_covariance(r.rp).trace();
    EXPECT_GE(ratio, (1.0 + static_cast<double>(d) / 2.0) * 0.9) << "d = " << d;
    EXPECT_GE(empirical_covariance(r.sf).trace(), empirical_covariance(r.rp).trace());
  }
}

// Classical + RP term against finite differences of Monte Carlo PR drawn with
// the same base sample at theta +- h.
TEST(Properties, FullGradientMatchesFiniteDifferences) {
  const GaussianClassModel g{vec({0.5, -1}), vec({-1, 1}), 0.7, {}, {}, 0.4};
  Matrix pi(2, 2);
  pi << 0.8, 0.3, -0.2, 0.5;
  const PerformativeModel model(g, ShiftOperator(pi));
  const Loss loss = Loss::classification(SurrogateKind::logistic);
  const auto base = model.draw_base(100000, 77);
  auto pr = [&](const Vector& t) {
    const auto b = model.deploy(base, t);
    double s = 0.0;
    for (Eigen::Index i = 0; i < b.size(); ++i)
      s += loss_value(loss, b.x.row(i).transpose(), b.y[static_cast<std::size_t>(i)], t);
    return s / static_cast<double>(b.size());
  };
  for (const Vector& theta : {vec({0.4, 0.9}), vec({-1.2, 0.3})}) {
    const Vector est = performative_gradient(model.deploy(base, theta), model, loss, theta);
    const Vector fd = oracles::central_difference(pr, theta, 1e-4);
    EXPECT_LE(oracles::relative_error(est, fd), 1e-4);
  }
}
