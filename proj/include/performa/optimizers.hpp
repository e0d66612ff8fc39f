#pragma once

// Deploy / sample / update loops: RRM, RGD, RRGD, SFPerfGD, RPPerfGD and
// RPPerfGD with online (diagonal, ridge) estimation of the shift operator.

#include "performa/estimators.hpp"
#include "performa/risk.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace performa {

enum class Algorithm { RRM, RGD, RRGD, SFPerfGD, RPPerfGD, RPPerfGD_learn };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::RRM: return "RRM";
    case Algorithm::RGD: return "RGD";
    case Algorithm::RRGD: return "RRGD";
    case Algorithm::SFPerfGD: return "SFPerfGD";
    case Algorithm::RPPerfGD: return "RPPerfGD";
    case Algorithm::RPPerfGD_learn: return "RPPerfGD_learn";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (auto a : {Algorithm::RRM, Algorithm::RGD, Algorithm::RRGD, Algorithm::SFPerfGD,
                 Algorithm::RPPerfGD, Algorithm::RPPerfGD_learn})
    if (name == to_string(a)) return a;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "'");
}

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::RGD;
  double step_size = 0.1;
  double reg_lambda = 0.0;  // ridge on the loss (RRGD)
  double pi_lambda = 0.0;   // ridge of the Pi estimate (RPPerfGD_learn)
  std::size_t num_iter = 100;
  std::size_t n = 1000;
  std::size_t eval_n = 0;   // accuracy batch size, 0 means n
  Vector theta0;
  std::uint64_t seed = 0;
  double divergence_threshold = 1e6;
  bool track_pi = false;    // estimate Pi along the run even if unused

  void validate(Eigen::Index d) const {
    if (!(step_size >= 0.0)) throw std::invalid_argument("OptimizerConfig: step size must be >= 0");
    if (reg_lambda < 0.0 || pi_lambda < 0.0)
      throw std::invalid_argument("OptimizerConfig: ridge parameters must be >= 0");
    if (num_iter == 0) throw std::invalid_argument("OptimizerConfig: num_iter must be >= 1");
    if (n == 0) throw std::invalid_argument("OptimizerConfig: n must be >= 1");
    require_dim(theta0.size(), d, "OptimizerConfig theta0");
  }
};

struct IterationRecord {
  std::size_t iteration = 0;
  Vector theta;  // deployed parameter
  double train_risk = 0.0;
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> pi_error;
  bool diverged = false;
};

struct RunRecord {
  std::vector<IterationRecord> iterations;
  Vector final_theta;
  std::optional<Matrix> pi_hat;
  bool diverged = false;
  std::uint64_t seed = 0;
};

// --- Pi estimation ---------------------------------------------------------

/// Sufficient statistics of the class-0 rows seen at each deployment.
class PiEstimatorState {
 public:
  explicit PiEstimatorState(Eigen::Index d, std::optional<Vector> mu_hat = std::nullopt)
      : pi_hat_(Matrix::Zero(d, d)), mu_hat_(std::move(mu_hat)) {
    if (mu_hat_) require_dim(mu_hat_->size(), d, "PiEstimatorState mu_hat");
  }

  Eigen::Index dim() const { return pi_hat_.rows(); }
  const Matrix& pi_hat() const { return pi_hat_; }
  const std::optional<Vector>& mu_hat() const { return mu_hat_; }
  std::size_t deployments() const { return thetas_.size(); }

  /// Appends one deployment and refits the diagonal ridge estimate
  ///   argmin_Pi sum_j sum_l ||x_jl - mu_hat - Pi theta_j||^2 + lambda ||Pi||^2.
  /// mu_hat is fixed at the first deployment with class-0 rows, as their mean
  /// de-shifted by the estimate in force at that time.
  const Matrix& update(const Vector& theta, const Matrix& class0_rows, double lambda) {
    require_dim(theta.size(), dim(), "update_pi_estimate theta");
    if (class0_rows.rows() > 0) require_dim(class0_rows.cols(), dim(), "update_pi_estimate rows");
    if (lambda < 0.0) throw std::invalid_argument("update_pi_estimate: lambda must be >= 0");
    const auto n0 = class0_rows.rows();
    thetas_.push_back(theta);
    sums_.push_back(n0 > 0 ? Vector(class0_rows.colwise().sum().transpose()) : Vector::Zero(dim()));
    counts_.push_back(static_cast<double>(n0));
    if (!mu_hat_ && n0 > 0)
      mu_hat_ = Vector(sums_.back() / static_cast<double>(n0) - pi_hat_ * theta);
    if (!mu_hat_) return pi_hat_;

    Matrix next = Matrix::Zero(dim(), dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
      double num = 0.0;
      double den = lambda;
      for (std::size_t j = 0; j < thetas_.size(); ++j) {
        const double t = thetas_[j][i];
        num += t * (sums_[j][i] - counts_[j] * (*mu_hat_)[i]);
        den += counts_[j] * t * t;
      }
      next(i, i) = den > 0.0 ? num / den : 0.0;
    }
    pi_hat_ = std::move(next);
    return pi_hat_;
  }

 private:
  Matrix pi_hat_;
  std::optional<Vector> mu_hat_;
  std::vector<Vector> thetas_;
  std::vector<Vector> sums_;
  std::vector<double> counts_;
};

inline Matrix class0_rows(const SampleBatch& batch) {
  Matrix rows(batch.count(0), batch.dim());
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    if (batch.y[static_cast<std::size_t>(i)] == 0) rows.row(k++) = batch.x.row(i);
  return rows;
}

inline const Matrix& update_pi_estimate(PiEstimatorState& state, const Vector& theta_k,
                                        const Matrix& class0, double lambda) {
  return state.update(theta_k, class0, lambda);
}

// --- deterministic minimization --------------------------------------------

struct MinimizeResult {
  Vector x;
  std::size_t iterations = 0;
  bool converged = false;
  bool diverged = false;
};

inline constexpr int kMaxHalvings = 60;

/// Gradient descent with Armijo backtracking; the step doubles after every
/// accepted move so unbounded objectives escape quickly.
inline MinimizeResult minimize_gd(const std::function<double(const Vector&)>& f,
                                  const std::function<Vector(const Vector&)>& grad, Vector x,
                                  double initial_step, double grad_tol, std::size_t max_iter,
                                  double divergence_threshold = 1e6) {
  MinimizeResult out;
  double step = initial_step > 0.0 ? initial_step : 1.0;
  double fx = f(x);
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const Vector g = grad(x);
    const double g2 = g.squaredNorm();
    if (!std::isfinite(g2) || !std::isfinite(fx)) break;
    if (std::sqrt(g2) < grad_tol) {
      out.converged = true;
      break;
    }
    Vector trial = x - step * g;
    double ft = f(trial);
    for (int halvings = 0; !(ft <= fx - 1e-4 * step * g2) && halvings < kMaxHalvings; ++halvings) {
      step *= 0.5;
      trial = x - step * g;
      ft = f(trial);
    }
    if (!(ft <= fx - 1e-4 * step * g2)) {
      // No further decrease representable: stationary to machine precision.
      out.converged = std::sqrt(g2) < 1e3 * grad_tol;
      break;
    }
    x = std::move(trial);
    fx = ft;
    step *= 2.0;
    if (x.norm() > divergence_threshold) {
      out.diverged = true;
      break;
    }
  }
  out.x = std::move(x);
  return out;
}

// --- single steps ----------------------------------------------------------

/// theta - eta * (mean grad_theta l + reg * theta); the ridge term applies to RRGD.
inline Vector step_rgd(const Vector& theta, const SampleBatch& batch, const Loss& loss,
                       const OptimizerConfig& cfg) {
  Vector g = classical_gradient(batch, loss, theta);
  if (cfg.algorithm == Algorithm::RRGD) g += cfg.reg_lambda * theta;
  return theta - cfg.step_size * g;
}

struct RrmStep {
  Vector theta;
  bool diverged = false;
};

inline constexpr double kRrmGradTol = 1e-6;
inline constexpr std::size_t kRrmMaxInner = 10000;

/// argmin_{theta'} of the empirical DPR on the fixed batch.
inline RrmStep step_rrm(const Vector& theta, const SampleBatch& batch, const Loss& loss,
                        const OptimizerConfig& cfg) {
  auto f = [&](const Vector& t) { return batch_risk(batch, loss, t).value; };
  auto g = [&](const Vector& t) { return classical_gradient(batch, loss, t); };
  auto res = minimize_gd(f, g, theta, cfg.step_size, kRrmGradTol, kRrmMaxInner,
                         cfg.divergence_threshold);
  return {res.x, res.diverged || !res.converged};
}

/// theta - eta (grad1 + grad2), grad2 = (1/n) Pi^T sum_{class 0} grad_x l.
inline Vector step_rpperfgd(const Vector& theta, const SampleBatch& batch, const Loss& loss,
                            const Matrix& pi, const OptimizerConfig& cfg) {
  const Vector g1 = classical_gradient(batch, loss, theta);
  const Vector g2 = rp_gradient(batch, ShiftOperator(pi), loss, theta).value;
  return theta - cfg.step_size * (g1 + g2);
}

inline Vector step_sfperfgd(const Vector& theta, const SampleBatch& batch, const Loss& loss,
                            const PerformativeModel& model, const OptimizerConfig& cfg) {
  const Vector g1 = classical_gradient(batch, loss, theta);
  const Vector g2 = sf_gradient(batch, GaussianScore(model, batch.deployed), loss, theta).value;
  return theta - cfg.step_size * (g1 + g2);
}

inline double accuracy(const SampleBatch& batch, const Vector& theta) {
  if (batch.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < batch.size(); ++i)
    hits += predict(batch.x.row(i).transpose(), theta) == batch.y[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

/// K rounds of deploy -> sample -> step. Deterministic in cfg.seed.
inline RunRecord run(const PerformativeModel& model, const Loss& loss, const OptimizerConfig& cfg) {
  cfg.validate(model.dim());
  if (cfg.algorithm == Algorithm::SFPerfGD) GaussianScore(model, cfg.theta0);  // fail early

  RunRecord rec;
  rec.seed = cfg.seed;
  const bool learn = cfg.algorithm == Algorithm::RPPerfGD_learn;
  std::optional<PiEstimatorState> pi_state;
  if (learn || cfg.track_pi) pi_state.emplace(model.dim());
  const Matrix& pi_true = model.shift().matrix();
  const std::size_t eval_n = cfg.eval_n ? cfg.eval_n : cfg.n;

  Vector theta = cfg.theta0;
  for (std::size_t k = 0; k < cfg.num_iter; ++k) {
    const SampleBatch batch = sample_deployed(model, theta, cfg.n, derive_seed(cfg.seed, 2 * k));
    IterationRecord it;
    it.iteration = k;
    it.theta = theta;
    it.train_risk = batch_risk(batch, loss, theta).value;
    if (model.labeled() && loss.is_classification())
      it.accuracy = accuracy(sample_deployed(model, theta, eval_n, derive_seed(cfg.seed, 2 * k + 1)), theta);

    Vector next;
    bool inner_diverged = false;
    switch (cfg.algorithm) {
      case Algorithm::RGD:
      case Algorithm::RRGD: next = step_rgd(theta, batch, loss, cfg); break;
      case Algorithm::RRM: {
        auto s = step_rrm(theta, batch, loss, cfg);
        next = std::move(s.theta);
        inner_diverged = s.diverged;
        break;
      }
      case Algorithm::RPPerfGD: next = step_rpperfgd(theta, batch, loss, pi_true, cfg); break;
      case Algorithm::RPPerfGD_learn:
        next = step_rpperfgd(theta, batch, loss, pi_state->pi_hat(), cfg);
        break;
      case Algorithm::SFPerfGD: next = step_sfperfgd(theta, batch, loss, model, cfg); break;
    }
    if (pi_state) {
      pi_state->update(theta, class0_rows(batch), cfg.pi_lambda);
      it.pi_error = (pi_state->pi_hat() - pi_true).norm();
    }
    theta = std::move(next);
    it.diverged = inner_diverged || !all_finite(theta) || theta.norm() > cfg.divergence_threshold;
    rec.iterations.push_back(std::move(it));
    if (rec.iterations.back().diverged) {
      rec.diverged = true;
      break;
    }
  }
  rec.final_theta = theta;
  if (pi_state) rec.pi_hat = pi_state->pi_hat();
  return rec;
}

}  // namespace performa
