#pragma once

// Monte Carlo estimators of the performative part of the gradient,
// grad_theta DPR(theta, theta') at theta' = the loss parameter, together with
// the closed-form covariances of the Gaussian mean-estimation case.

#include "performa/losses.hpp"
#include "performa/pushforward.hpp"

#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

namespace performa {

enum class EstimatorKind { RP, SF, SF_baseline };

struct GradientEstimate {
  Vector value;
  std::size_t n = 0;
  EstimatorKind kind = EstimatorKind::RP;
  std::optional<double> baseline;
};

/// Reparameterization estimator Pi^T (1/n) sum_{class 0} grad_z l(Z_i; theta).
/// Rows of class 1 do not move, so they contribute nothing; the sum is still
/// normalized by the full batch size.
inline GradientEstimate rp_gradient(const SampleBatch& batch, const ShiftOperator& shift,
                                    const Loss& loss, const Vector& theta) {
  if (batch.size() == 0) throw std::invalid_argument("rp_gradient: empty batch");
  require_dim(batch.dim(), shift.dim(), "rp_gradient batch");
  require_dim(theta.size(), shift.dim(), "rp_gradient theta");
  Vector acc = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto y = batch.y[static_cast<std::size_t>(i)];
    if (y == 0) acc += grad_z(loss, batch.x.row(i).transpose(), y, theta);
  }
  GradientEstimate g;
  g.n = static_cast<std::size_t>(batch.size());
  g.value = shift_jacobian(shift, theta).transpose() * (acc / static_cast<double>(g.n));
  g.kind = EstimatorKind::RP;
  return g;
}

/// grad_theta log p_theta(z) for a Gaussian class-0 law under a linear shift:
/// Pi^T Sigma^{-1} (z - mu - Pi theta).
class GaussianScore {
 public:
  GaussianScore(const PerformativeModel& model, const Vector& deployed) {
    const auto* law = std::get_if<GaussianLaw>(&model.class0());
    if (!law)
      throw std::invalid_argument(
          "score function unavailable: class-0 law has no analytic density");
    Eigen::LDLT<Matrix> ldlt(law->cov);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        min_eigenvalue(law->cov) <= kEigenTolerance)
      throw std::invalid_argument("score function unavailable: degenerate covariance (sigma = 0)");
    center_ = model.class0_mean(deployed);
    weight_ = model.shift().matrix().transpose() * ldlt.solve(Matrix::Identity(law->cov.rows(), law->cov.cols()));
  }

  template <class X>
  Vector operator()(const X& z) const { return weight_ * (z - center_); }

 private:
  Vector center_;
  Matrix weight_;
};

/// Score-function estimator (1/n) sum_{class 0} (l(Z_i; theta) - m) score(Z_i).
inline GradientEstimate sf_gradient(const SampleBatch& batch, const GaussianScore& score,
                                    const Loss& loss, const Vector& theta,
                                    std::optional<double> baseline = std::nullopt) {
  if (batch.size() == 0) throw std::invalid_argument("sf_gradient: empty batch");
  require_dim(theta.size(), batch.dim(), "sf_gradient theta");
  const double m = baseline.value_or(0.0);
  Vector acc = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const auto y = batch.y[static_cast<std::size_t>(i)];
    if (y != 0) continue;
    const auto z = batch.x.row(i).transpose();
    acc += (loss_value(loss, z, y, theta) - m) * score(z);
  }
  GradientEstimate g;
  g.n = static_cast<std::size_t>(batch.size());
  g.value = acc / static_cast<double>(g.n);
  g.kind = baseline ? EstimatorKind::SF_baseline : EstimatorKind::SF;
  g.baseline = baseline;
  return g;
}

/// Gaussian mean-estimation case: l(z; theta') = ||z - theta'||^2 / 2,
/// Z = U + Pi theta, U ~ N(0, sigma^2 I).
struct GaussianMeanCase {
  Matrix pi;
  double sigma = 1.0;
  Vector theta;
  Vector theta_prime;

  Eigen::Index dim() const { return pi.rows(); }
  Vector a() const { return pi * theta - theta_prime; }
};

namespace detail {
inline void require_sigma(double sigma, const char* what) {
  if (!(sigma > 0.0)) throw std::invalid_argument(std::string(what) + ": sigma must be > 0");
}
}  // namespace detail

inline Matrix cov_rp_analytic(const GaussianMeanCase& c, std::size_t n) {
  return c.sigma * c.sigma * c.pi.transpose() * c.pi / static_cast<double>(n);
}

inline Matrix cov_sf_analytic(const GaussianMeanCase& c, std::size_t n) {
  detail::require_sigma(c.sigma, "cov_sf_analytic");
  const double d = static_cast<double>(c.dim());
  const Vector a = c.a();
  const double a2 = a.squaredNorm();
  const double s2 = c.sigma * c.sigma;
  const double diag = ((d * d + 6.0 * d + 8.0) * s2 + 2.0 * (d + 4.0) * a2 + a2 * a2 / s2) / 4.0;
  Matrix inner = diag * Matrix::Identity(c.dim(), c.dim()) + a * a.transpose();
  return c.pi.transpose() * inner * c.pi / static_cast<double>(n);
}

struct BaselineOptimum {
  Matrix covariance;
  /// Optimal baseline on the ||U + a||^2 scale, i.e. twice the loss scale.
  double optimal_m;
  /// The same optimum expressed on the loss scale accepted by sf_gradient.
  double loss_scale_m() const { return optimal_m / 2.0; }
};

inline BaselineOptimum cov_sf_baseline_optimal(const GaussianMeanCase& c, std::size_t n) {
  detail::require_sigma(c.sigma, "cov_sf_baseline_optimal");
  const double d = static_cast<double>(c.dim());
  const Vector a = c.a();
  const double a2 = a.squaredNorm();
  const double s2 = c.sigma * c.sigma;
  Matrix inner = ((1.0 + d / 2.0) * s2 + a2) * Matrix::Identity(c.dim(), c.dim()) + a * a.transpose();
  return {c.pi.transpose() * inner * c.pi / static_cast<double>(n), (d + 2.0) * s2 + a2};
}

/// Unbiased (Bessel-corrected) sample covariance of the estimate vectors.
inline Matrix empirical_covariance(std::span<const GradientEstimate> reps) {
  if (reps.size() < 2) throw std::invalid_argument("empirical_covariance: need >= 2 replications");
  const auto d = reps.front().value.size();
  Vector mean = Vector::Zero(d);
  for (const auto& r : reps) {
    require_dim(r.value.size(), d, "empirical_covariance");
    mean += r.value;
  }
  mean /= static_cast<double>(reps.size());
  Matrix cov = Matrix::Zero(d, d);
  for (const auto& r : reps) {
    const Vector c = r.value - mean;
    cov.selfadjointView<Eigen::Lower>().rankUpdate(c);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  return cov / static_cast<double>(reps.size() - 1);
}

struct EstimatorReplications {
  std::vector<GradientEstimate> rp;
  std::vector<GradientEstimate> sf;
  std::vector<GradientEstimate> sf_baseline;
};

/// Independent replications of the RP, SF and SF-with-baseline estimators in
/// the Gaussian mean case, all three computed on the same batch per replication.
/// Replication r uses seed derive_seed(seed, r).
inline EstimatorReplications replicate_gaussian_mean(const GaussianMeanCase& c, std::size_t n,
                                                     std::size_t replications, std::uint64_t seed,
                                                     std::optional<double> baseline = std::nullopt) {
  detail::require_sigma(c.sigma, "replicate_gaussian_mean");
  require_dim(c.theta.size(), c.dim(), "replicate_gaussian_mean theta");
  require_dim(c.theta_prime.size(), c.dim(), "replicate_gaussian_mean theta_prime");
  const auto model = PerformativeModel::unlabeled(GaussianLaw::isotropic(Vector::Zero(c.dim()), c.sigma),
                                                  ShiftOperator(c.pi));
  const Loss loss = Loss::mean_estimation();
  const GaussianScore score(model, c.theta);
  const double m = baseline.value_or(cov_sf_baseline_optimal(c, n).loss_scale_m());
  EstimatorReplications out;
  out.rp.reserve(replications);
  out.sf.reserve(replications);
  out.sf_baseline.reserve(replications);
  for (std::size_t r = 0; r < replications; ++r) {
    const auto batch = sample_deployed(model, c.theta, n, derive_seed(seed, r));
    out.rp.push_back(rp_gradient(batch, model.shift(), loss, c.theta_prime));
    out.sf.push_back(sf_gradient(batch, score, loss, c.theta_prime));
    out.sf_baseline.push_back(sf_gradient(batch, score, loss, c.theta_prime, m));
  }
  return out;
}

/// Classical term (1/n) sum grad_theta l(Z_i; theta).
inline Vector classical_gradient(const SampleBatch& batch, const Loss& loss, const Vector& theta) {
  if (batch.size() == 0) throw std::invalid_argument("classical_gradient: empty batch");
  Vector acc = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    acc += grad_theta(loss, batch.x.row(i).transpose(), batch.y[static_cast<std::size_t>(i)], theta);
  return acc / static_cast<double>(batch.size());
}

/// Full performative gradient estimate: classical term plus the RP term.
inline Vector performative_gradient(const SampleBatch& batch, const ShiftOperator& shift,
                                    const Loss& loss, const Vector& theta) {
  return classical_gradient(batch, loss, theta) + rp_gradient(batch, shift, loss, theta).value;
}

/// Same as above, with the class-1 shift of the model included when present.
inline Vector performative_gradient(const SampleBatch& batch, const PerformativeModel& model,
                                    const Loss& loss, const Vector& theta) {
  Vector g = performative_gradient(batch, model.shift(), loss, theta);
  if (model.shift1()) {
    Vector acc = Vector::Zero(theta.size());
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
      const auto y = batch.y[static_cast<std::size_t>(i)];
      if (y == 1) acc += grad_z(loss, batch.x.row(i).transpose(), y, theta);
    }
    g += model.shift1()->matrix().transpose() * acc / static_cast<double>(batch.size());
  }
  return g;
}

}  // namespace performa
