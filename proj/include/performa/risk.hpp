#pragma once

// Performative risk PR(theta) = E_theta[l(Z; theta)] and the decoupled risk
// DPR(theta, theta') = E_theta[l(Z; theta')], by Monte Carlo and in closed
// form, plus numerical certificates for convexity, the adversarial
// reformulation and the regularization bound.

#include "performa/estimators.hpp"
#include "performa/losses.hpp"
#include "performa/pushforward.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace performa {

struct RiskEvaluation {
  enum class Method { monte_carlo, closed_form_quadratic, closed_form_pricing };

  double value = 0.0;
  Method method = Method::monte_carlo;
  std::size_t n = 0;
  double std_err = 0.0;
};

namespace detail {
// Running mean and variance; a constant stream gives its value back exactly.
struct Welford {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++count;
    const double delta = v - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (v - mean);
  }

  RiskEvaluation evaluation() const {
    RiskEvaluation r;
    r.n = count;
    r.value = mean;
    if (count > 1) r.std_err = std::sqrt(std::max(0.0, m2 / static_cast<double>(count - 1)) / static_cast<double>(count));
    return r;
  }
};
}  // namespace detail

/// Mean loss at theta_eval over a batch, with the standard error of the mean.
inline RiskEvaluation batch_risk(const SampleBatch& batch, const Loss& loss, const Vector& theta_eval) {
  const auto n = batch.size();
  if (n == 0) throw std::invalid_argument("batch_risk: empty batch");
  detail::Welford acc;
  for (Eigen::Index i = 0; i < n; ++i)
    acc.add(loss_value(loss, batch.x.row(i).transpose(), batch.y[static_cast<std::size_t>(i)], theta_eval));
  return acc.evaluation();
}

inline RiskEvaluation dpr_monte_carlo(const PerformativeModel& model, const Loss& loss,
                                      const Vector& theta, const Vector& theta_prime,
                                      std::size_t n, std::uint64_t seed) {
  require_dim(theta_prime.size(), model.dim(), "dpr_monte_carlo");
  return batch_risk(sample_deployed(model, theta, n, seed), loss, theta_prime);
}

inline RiskEvaluation pr_monte_carlo(const PerformativeModel& model, const Loss& loss,
                                     const Vector& theta, std::size_t n, std::uint64_t seed) {
  return dpr_monte_carlo(model, loss, theta, theta, n, seed);
}

/// PR as a deterministic function of theta: one frozen set of base draws is
/// shifted for every evaluation (common random numbers).
class FrozenRisk {
 public:
  FrozenRisk(PerformativeModel model, Loss loss, std::size_t n, std::uint64_t seed)
      : model_(std::move(model)), loss_(loss), base_(model_.draw_base(n, seed)) {
    is1_.resize(static_cast<Eigen::Index>(base_.y.size()));
    for (std::size_t i = 0; i < base_.y.size(); ++i) is1_[static_cast<Eigen::Index>(i)] = base_.y[i];
  }

  // Linear in the base draws: every sample's z^T theta is u^T theta plus a
  // per-class offset, so one matrix-vector product covers the batch.
  double operator()(const Vector& theta) const {
    require_dim(theta.size(), model_.dim(), "FrozenRisk");
    if (loss_.kind == Loss::Kind::mean_estimation)
      return batch_risk(model_.deploy(base_, theta), loss_, theta).value;
    const Vector rel = theta - model_.anchor();
    const double off0 = theta.dot(model_.shift().apply(rel));
    const double off1 = model_.shift1() ? theta.dot(model_.shift1()->apply(rel)) : 0.0;
    const Eigen::ArrayXd m = (base_.u * theta).array() + off0 + (off1 - off0) * is1_;
    if (loss_.kind == Loss::Kind::pricing) return -m.mean();
    const Eigen::ArrayXd v = (2.0 * is1_ - 1.0) * m;  // signed margins
    switch (loss_.surrogate) {
      case SurrogateKind::quadratic: return (1.0 - v).square().mean();
      case SurrogateKind::logistic: return ((1.0 + (-v.abs()).exp()).log() + (-v).max(0.0)).mean();
      case SurrogateKind::hinge: return (1.0 - v).max(0.0).mean();
      case SurrogateKind::exponential: return (-v).exp().mean();
    }
    return 0.0;
  }

  /// Exact gradient of the frozen objective: classical term plus RP term.
  /// Per sample this is Phi'(v) s (z + Pi^T theta) with z = u + Pi (theta - anchor).
  Vector gradient(const Vector& theta) const {
    require_dim(theta.size(), model_.dim(), "FrozenRisk::gradient");
    if (loss_.kind == Loss::Kind::mean_estimation)
      return performative_gradient(model_.deploy(base_, theta), model_, loss_, theta);
    const double n = static_cast<double>(is1_.size());
    const Vector rel = theta - model_.anchor();
    const Matrix& pi0 = model_.shift().matrix();
    const Vector doff0 = pi0 * rel + pi0.transpose() * theta;
    Vector doff1 = Vector::Zero(theta.size());
    double off1 = 0.0;
    if (model_.shift1()) {
      const Matrix& pi1 = model_.shift1()->matrix();
      doff1 = pi1 * rel + pi1.transpose() * theta;
      off1 = theta.dot(pi1 * rel);
    }
    if (loss_.kind == Loss::Kind::pricing) {
      const double w1 = is1_.mean();
      return -(Vector(base_.u.colwise().mean().transpose()) + (1.0 - w1) * doff0 + w1 * doff1);
    }
    const double off0 = theta.dot(pi0 * rel);
    const Eigen::ArrayXd sign = 2.0 * is1_ - 1.0;
    const Eigen::ArrayXd v = sign * ((base_.u * theta).array() + off0 + (off1 - off0) * is1_);
    Eigen::ArrayXd dphi;
    switch (loss_.surrogate) {
      case SurrogateKind::quadratic: dphi = -2.0 * (1.0 - v); break;
      case SurrogateKind::logistic: dphi = -1.0 / (1.0 + v.exp()); break;
      case SurrogateKind::hinge: dphi = -(v < 1.0).cast<double>(); break;
      case SurrogateKind::exponential: dphi = -(-v).exp(); break;
    }
    const Eigen::ArrayXd w = dphi * sign;
    const double w0_sum = (w * (1.0 - is1_)).sum();
    const double w1_sum = (w * is1_).sum();
    return (base_.u.transpose() * w.matrix() + w0_sum * doff0 + w1_sum * doff1) / n;
  }

  const PerformativeModel& model() const { return model_; }
  const BaseSample& base() const { return base_; }
  const Loss& loss() const { return loss_; }

 private:
  PerformativeModel model_;
  Loss loss_;
  BaseSample base_;
  Eigen::ArrayXd is1_;
};

/// Closed-form PR for the quadratic surrogate with Gaussian classes:
/// rho [||theta||^2_S1 + (1 - m1^T theta)^2] + (1-rho) [||theta||^2_S0 + (m0^T theta + 1)^2]
/// where m0, m1 are the class means under deployment theta.
inline double pr_closed_quadratic(const PerformativeModel& model, const Vector& theta) {
  if (!model.labeled()) throw std::invalid_argument("pr_closed_quadratic: model is unlabeled");
  const auto* g0 = std::get_if<GaussianLaw>(&model.class0());
  const auto* g1 = std::get_if<GaussianLaw>(&model.class1());
  if (!g0 || !g1) throw std::invalid_argument("pr_closed_quadratic: non-Gaussian model");
  require_dim(theta.size(), model.dim(), "pr_closed_quadratic");
  const double rho = model.rho();
  const double m1 = model.class1_mean(theta).dot(theta);
  const double m0 = model.class0_mean(theta).dot(theta);
  const double t1 = theta.dot(g1->cov * theta) + (1.0 - m1) * (1.0 - m1);
  const double t0 = theta.dot(g0->cov * theta) + (m0 + 1.0) * (m0 + 1.0);
  return rho * t1 + (1.0 - rho) * t0;
}

inline double pr_closed_quadratic(const GaussianClassModel& classes, const ShiftOperator& shift,
                                  const Vector& theta) {
  return pr_closed_quadratic(PerformativeModel(classes, shift), theta);
}

/// Pricing: DPR(theta, theta') = -(mu - Pi theta)^T theta'.
inline double dpr_closed_pricing(const Vector& mu, const Matrix& pi, const Vector& theta,
                                 const Vector& theta_prime) {
  return -(mu - pi * theta).dot(theta_prime);
}

inline double pr_closed_pricing(const Vector& mu, const Matrix& pi, const Vector& theta) {
  return dpr_closed_pricing(mu, pi, theta, theta);
}

// --- convexity -------------------------------------------------------------

struct ConvexityProbe {
  Vector a;
  Vector b;
  double t = 0.5;
};

struct ConvexityReport {
  std::size_t probe_pairs = 0;
  std::size_t violations = 0;
  double max_violation = -std::numeric_limits<double>::infinity();
  std::optional<ConvexityProbe> violating_pair;

  bool convex_on_probes() const { return violations == 0; }
};

/// Pairs drawn uniformly in the ball of the given radius. With midpoint set
/// every probe uses t = 1/2, otherwise t ~ U[0,1].
inline std::vector<ConvexityProbe> random_probes(Eigen::Index d, std::size_t count, double radius,
                                                 std::uint64_t seed, bool midpoint = true) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto point = [&] {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
    const double r = radius * std::pow(unif(rng), 1.0 / static_cast<double>(d));
    return Vector(v.normalized() * r);
  };
  std::vector<ConvexityProbe> probes;
  probes.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    ConvexityProbe p;
    p.a = point();
    p.b = point();
    p.t = midpoint ? 0.5 : unif(rng);
    probes.push_back(std::move(p));
  }
  return probes;
}

/// Checks f(t a + (1-t) b) <= t f(a) + (1-t) f(b) + tolerance on every probe.
inline ConvexityReport convexity_profile(const std::function<double(const Vector&)>& risk_fn,
                                         const std::vector<ConvexityProbe>& probes,
                                         double tolerance) {
  ConvexityReport report;
  report.probe_pairs = probes.size();
  for (const auto& p : probes) {
    const double mixed = risk_fn(p.t * p.a + (1.0 - p.t) * p.b);
    const double chord = p.t * risk_fn(p.a) + (1.0 - p.t) * risk_fn(p.b);
    const double gap = mixed - chord;
    if (gap > report.max_violation) {
      report.max_violation = gap;
      if (gap > tolerance) report.violating_pair = p;
    }
    if (gap > tolerance) ++report.violations;
  }
  return report;
}

// --- adversarial reformulation ---------------------------------------------

struct InnerMax {
  double value;
  Vector argmax;
};

namespace detail {
inline void require_adversarial(SurrogateKind s, const ShiftOperator& pi) {
  if (!is_nonincreasing(s))
    throw std::invalid_argument("adversarial form requires a non-increasing surrogate");
  if (!pi.is_symmetric() || !pi.is_pd())
    throw std::invalid_argument("adversarial form requires a symmetric positive definite Pi");
}
}  // namespace detail

/// max over ||delta||_{Pi^-1} <= ||theta||_Pi of Phi(-(u0 + delta)^T theta),
/// attained at delta = Pi theta.
inline InnerMax adversarial_inner_max(SurrogateKind surrogate, const Vector& u0,
                                      const Vector& theta, const ShiftOperator& pi) {
  detail::require_adversarial(surrogate, pi);
  require_dim(u0.size(), pi.dim(), "adversarial_inner_max u0");
  require_dim(theta.size(), pi.dim(), "adversarial_inner_max theta");
  Vector delta = pi.matrix() * theta;
  return {surrogate_value(surrogate, -u0.dot(theta) - theta.dot(delta)), std::move(delta)};
}

/// PR written as a robust objective over the base draws. Class weights are
/// the empirical label frequencies of the draw, so with a shared seed this
/// reduces term by term to pr_monte_carlo.
inline RiskEvaluation pr_adversarial_form(const PerformativeModel& model, const Loss& loss,
                                          const Vector& theta, std::size_t n, std::uint64_t seed) {
  if (!loss.is_classification() || !model.labeled())
    throw std::invalid_argument("pr_adversarial_form: classification model required");
  if (model.shift1()) throw std::invalid_argument("pr_adversarial_form: class 1 must not move");
  detail::require_adversarial(loss.surrogate, model.shift());
  require_dim(theta.size(), model.dim(), "pr_adversarial_form");
  const BaseSample base = model.draw_base(n, seed);
  const Vector anchor_shift = model.shift().apply(-model.anchor());
  detail::Welford acc;
  for (Eigen::Index i = 0; i < base.u.rows(); ++i) {
    const Vector u = base.u.row(i).transpose();
    if (base.y[static_cast<std::size_t>(i)])
      acc.add(surrogate_value(loss.surrogate, u.dot(theta)));
    else
      acc.add(adversarial_inner_max(loss.surrogate, u + anchor_shift, theta, model.shift()).value);
  }
  return acc.evaluation();
}

// --- regularization bound --------------------------------------------------

/// ||Pi^{-1/2} (rho mu1 - (1-rho) mu0)|| / (1 - rho): upper bound on
/// ||theta*||_Pi for the PR minimizer.
inline double regularization_bound(const PerformativeModel& model, const ShiftOperator& pi) {
  if (!model.labeled()) throw std::invalid_argument("regularization_bound: model is unlabeled");
  const double rho = model.rho();
  if (!(rho < 1.0)) throw std::invalid_argument("regularization_bound: rho must be < 1");
  if (!pi.is_symmetric() || !pi.is_pd())
    throw std::invalid_argument("regularization_bound: Pi must be symmetric positive definite (singular Pi)");
  require_dim(pi.dim(), model.dim(), "regularization_bound");
  const Vector zero = Vector::Zero(model.dim());
  const Vector mu_rho = rho * model.class1_mean(zero) - (1.0 - rho) * model.class0_mean(zero);
  return (inverse_sqrt(pi.matrix()) * mu_rho).norm() / (1.0 - rho);
}

inline double regularization_bound(const PerformativeModel& model) {
  return regularization_bound(model, model.shift());
}

inline bool check_bound(const PerformativeModel& model, const Vector& theta_star,
                        double tolerance = 1e-8) {
  return weighted_norm(theta_star, model.shift().matrix()) <=
         regularization_bound(model) + tolerance;
}

}  // namespace performa
