#include "oracles.hpp"
#include "performa/losses.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace performa;

namespace {

constexpr SurrogateKind kAll[] = {SurrogateKind::quadratic, SurrogateKind::logistic, SurrogateKind::hinge,
                                  SurrogateKind::exponential};

Vector vec(double a, double b) { return (Vector(2) << a, b).finished(); }

}  // namespace

TEST(Surrogate, Values) {
  EXPECT_NEAR(surrogate_value(SurrogateKind::logistic, 0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(surrogate_value(SurrogateKind::quadratic, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(surrogate_value(SurrogateKind::quadratic, -1.0), 4.0);
  EXPECT_DOUBLE_EQ(surrogate_value(SurrogateKind::hinge, 2.0), 0.0);
  EXPECT_DOUBLE_EQ(surrogate_value(SurrogateKind::hinge, -0.5), 1.5);
  EXPECT_DOUBLE_EQ(surrogate_value(SurrogateKind::exponential, 0.0), 1.0);
}

TEST(Surrogate, LogisticIsStableInTheTails) {
  EXPECT_NEAR(surrogate_value(SurrogateKind::logistic, -800.0), 800.0, 1e-12);
  EXPECT_EQ(surrogate_value(SurrogateKind::logistic, 800.0), 0.0);
  EXPECT_TRUE(std::isfinite(surrogate_derivative(SurrogateKind::logistic, -800.0)));
  EXPECT_NEAR(surrogate_derivative(SurrogateKind::logistic, -800.0), -1.0, 1e-15);
}

TEST(Surrogate, HingeKinkSubgradientIsZero) { EXPECT_EQ(surrogate_derivative(SurrogateKind::hinge, 1.0), 0.0); }

TEST(Surrogate, ParsesNames) {
  for (auto k : kAll) EXPECT_EQ(parse_surrogate(to_string(k)), k);
  EXPECT_THROW(parse_surrogate("square"), std::invalid_argument);
}

TEST(LossValue, SpecExamples) {
  const auto logistic = Loss::classification(SurrogateKind::logistic);
  EXPECT_NEAR(loss_value(logistic, vec(3, -7), 1, vec(0, 0)), std::log(2.0), 1e-15);
  // y = 1 with margin exactly on target.
  EXPECT_DOUBLE_EQ(loss_value(Loss::classification(SurrogateKind::quadratic), vec(1, 0), 1, vec(1, 5)), 0.0);
  // y = 0, x^T theta = -2: signed margin +2.
  EXPECT_DOUBLE_EQ(loss_value(Loss::classification(SurrogateKind::hinge), vec(-2, 0), 0, vec(1, 0)), 0.0);
}

TEST(LossValue, ClassOneUsesPositiveMargin) {
  const auto q = Loss::classification(SurrogateKind::quadratic);
  // Phi(+f) for class 1, Phi(-f) for class 0.
  EXPECT_DOUBLE_EQ(loss_value(q, vec(2, 0), 1, vec(1, 0)), 1.0);
  EXPECT_DOUBLE_EQ(loss_value(q, vec(2, 0), 0, vec(1, 0)), 9.0);
}

TEST(GradZ, SpecExamples) {
  for (auto k : kAll)
    EXPECT_TRUE(grad_z(Loss::classification(k), vec(0.3, 0.2), 1, vec(0, 0)).isZero()) << to_string(k);
  const Vector g = grad_z(Loss::classification(SurrogateKind::quadratic), vec(0, 1), 0, vec(1, 0));
  EXPECT_TRUE(g.isApprox(vec(2, 0)));
  const Vector fd = oracles::central_difference(
      [](const Vector& x) { return loss_value(Loss::classification(SurrogateKind::quadratic), x, 0, vec(1, 0)); },
      vec(0, 1), 1e-6);
  EXPECT_LT(oracles::relative_error(fd, g), 1e-6);
  const Vector t = vec(0.4, -0.8);
  EXPECT_TRUE(grad_z(Loss::classification(SurrogateKind::logistic), vec(2, 1), 1, t).isApprox(-0.5 * t));
}

TEST(GradTheta, MirrorsGradZ) {
  EXPECT_TRUE(grad_theta(Loss::classification(SurrogateKind::logistic), vec(0, 0), 1, vec(1, 2)).isZero());
  const Vector g = grad_theta(Loss::classification(SurrogateKind::quadratic), vec(1, 0), 0, vec(0, 1));
  EXPECT_TRUE(g.isApprox(vec(2, 0)));
  const Vector x = vec(0.4, -0.8);
  EXPECT_TRUE(grad_theta(Loss::classification(SurrogateKind::logistic), x, 1, vec(2, 1)).isApprox(-0.5 * x));
}

TEST(PricingLoss, SpecExamples) {
  EXPECT_EQ(pricing_loss(vec(0, 0), vec(0, 0)).value, 0.0);
  const auto p = pricing_loss(vec(1, 2), vec(3, 4));
  EXPECT_DOUBLE_EQ(p.value, -11.0);
  EXPECT_TRUE(p.grad_theta.isApprox(vec(-1, -2)));
  EXPECT_TRUE(p.grad_z.isApprox(vec(-3, -4)));
  EXPECT_THROW(pricing_loss(vec(1, 2), Vector::Zero(3)), std::invalid_argument);
  // The generic Loss path agrees and ignores the label.
  EXPECT_DOUBLE_EQ(loss_value(Loss::pricing(), vec(1, 2), 0, vec(3, 4)), -11.0);
  EXPECT_DOUBLE_EQ(loss_value(Loss::pricing(), vec(1, 2), 1, vec(3, 4)), -11.0);
}

TEST(Predict, StrictlyPositiveMeansClassOne) {
  EXPECT_EQ(predict(vec(1, 0), vec(1, 0)), 1);
  EXPECT_EQ(predict(vec(0, 1), vec(1, 0)), 0);
  EXPECT_EQ(predict(vec(-1, 0), vec(1, 0)), 0);
}

TEST(Properties, SurrogatesAreConvex) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> v(-5.0, 5.0), t01(0.0, 1.0);
  for (auto k : kAll) {
    for (int i = 0; i < 1000; ++i) {
      const double a = v(rng), b = v(rng), t = t01(rng);
      const double lhs = surrogate_value(k, t * a + (1 - t) * b);
      const double rhs = t * surrogate_value(k, a) + (1 - t) * surrogate_value(k, b);
      ASSERT_LE(lhs, rhs + 1e-12) << to_string(k) << " at " << a << ", " << b << ", " << t;
    }
  }
}

TEST(Properties, MarginLossesAreNonIncreasing) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> v(-5.0, 5.0);
  for (auto k : kAll) {
    if (!is_nonincreasing(k)) continue;
    for (int i = 0; i < 1000; ++i) {
      double a = v(rng), b = v(rng);
      if (a > b) std::swap(a, b);
      ASSERT_GE(surrogate_value(k, a), surrogate_value(k, b)) << to_string(k);
      ASSERT_LE(surrogate_derivative(k, a), 1e-12) << to_string(k);
    }
  }
  EXPECT_FALSE(is_nonincreasing(SurrogateKind::quadratic));
}

TEST(Properties, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin;
  for (auto k : kAll) {
    const auto loss = Loss::classification(k);
    int tested = 0;
    while (tested < 100) {
      const Vector x = oracles::random_vector(3, rng);
      const Vector theta = oracles::random_vector(3, rng);
      const std::uint8_t y = coin(rng);
      const double margin = label_sign(y) * x.dot(theta);
      if (k == SurrogateKind::hinge && std::abs(1.0 - margin) <= 1e-3) continue;
      ++tested;
      const Vector fx =
          oracles::central_difference([&](const Vector& z) { return loss_value(loss, z, y, theta); }, x);
      const Vector ft =
          oracles::central_difference([&](const Vector& t) { return loss_value(loss, x, y, t); }, theta);
      const Vector gx = grad_z(loss, x, y, theta), gt = grad_theta(loss, x, y, theta);
      // Absolute floor for gradients that are (nearly) zero, e.g. hinge past the margin.
      EXPECT_LE((fx - gx).norm(), 1e-5 * std::max(gx.norm(), 1e-3)) << to_string(k);
      EXPECT_LE((ft - gt).norm(), 1e-5 * std::max(gt.norm(), 1e-3)) << to_string(k);
    }
  }
}
