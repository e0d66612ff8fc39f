#pragma once

// Performative effects as push-forward measures: under deployment theta the
// class-0 covariates are Z = U0 + Pi (theta - anchor) and class 1 is left
// untouched (or moved by its own shift operator when one is configured).

#include "performa/linalg.hpp"
#include "performa/random.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

namespace performa {

class ShiftOperator {
 public:
  ShiftOperator() = default;

  explicit ShiftOperator(Matrix pi) : pi_(std::move(pi)) {
    if (pi_.rows() != pi_.cols())
      throw std::invalid_argument("ShiftOperator: matrix must be square");
    if (!all_finite(pi_))
      throw std::invalid_argument("ShiftOperator: non-finite entry");
    is_symmetric_ = (pi_ - pi_.transpose()).cwiseAbs().maxCoeff() <= 1e-12 || pi_.size() == 0;
    if (pi_.size() > 0) {
      double lo = min_eigenvalue(0.5 * (pi_ + pi_.transpose()));
      is_psd_ = is_symmetric_ && lo >= -kEigenTolerance;
      is_pd_ = is_symmetric_ && lo > kEigenTolerance;
    }
  }

  static ShiftOperator diagonal(const Vector& diag) {
    return ShiftOperator(Matrix(diag.asDiagonal()));
  }
  static ShiftOperator zero(Eigen::Index d) { return ShiftOperator(Matrix::Zero(d, d)); }
  static ShiftOperator identity(Eigen::Index d) {
    return ShiftOperator(Matrix::Identity(d, d));
  }

  const Matrix& matrix() const { return pi_; }
  Eigen::Index dim() const { return pi_.rows(); }
  bool is_symmetric() const { return is_symmetric_; }
  bool is_psd() const { return is_psd_; }
  bool is_pd() const { return is_pd_; }

  Vector apply(const Vector& theta) const {
    require_dim(theta.size(), dim(), "ShiftOperator::apply");
    return pi_ * theta;
  }

 private:
  Matrix pi_;
  bool is_symmetric_ = true;
  bool is_psd_ = true;
  bool is_pd_ = false;
};

/// Jacobian of theta -> Pi theta. Constant in theta for the linear family.
inline Matrix shift_jacobian(const ShiftOperator& shift, const Vector& theta) {
  require_dim(theta.size(), shift.dim(), "shift_jacobian");
  return shift.matrix();
}

struct GaussianLaw {
  Vector mean;
  Matrix cov;
  Matrix factor;  // symmetric square root of cov

  static GaussianLaw isotropic(Vector mean, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
      throw std::invalid_argument("GaussianLaw: sigma must be finite and >= 0");
    const auto d = mean.size();
    GaussianLaw law;
    law.cov = Matrix::Identity(d, d) * sigma * sigma;
    law.factor = Matrix::Identity(d, d) * sigma;
    law.mean = std::move(mean);
    return law;
  }

  static GaussianLaw full(Vector mean, Matrix cov) {
    require_dim(cov.rows(), mean.size(), "GaussianLaw covariance");
    require_dim(cov.cols(), mean.size(), "GaussianLaw covariance");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
        min_eigenvalue(cov) < -kEigenTolerance)
      throw std::invalid_argument("GaussianLaw: covariance must be symmetric PSD");
    GaussianLaw law;
    law.factor = sqrt_psd(cov);
    law.cov = std::move(cov);
    law.mean = std::move(mean);
    return law;
  }
};

/// Rows are resampled with replacement.
struct EmpiricalPool {
  Matrix rows;
};

using ClassLaw = std::variant<GaussianLaw, EmpiricalPool>;

inline Eigen::Index law_dim(const ClassLaw& law) {
  return std::visit(
      [](const auto& l) -> Eigen::Index {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianLaw>)
          return l.mean.size();
        else
          return l.rows.cols();
      },
      law);
}

inline Vector law_mean(const ClassLaw& law) {
  return std::visit(
      [](const auto& l) -> Vector {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianLaw>)
          return l.mean;
        else
          return l.rows.colwise().mean().transpose();
      },
      law);
}

inline ClassLaw translate(const ClassLaw& law, const Vector& offset) {
  return std::visit(
      [&](const auto& l) -> ClassLaw {
        auto out = l;
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianLaw>)
          out.mean += offset;
        else
          out.rows.rowwise() += offset.transpose();
        return out;
      },
      law);
}

namespace detail {

template <class Row>
void draw_into(const ClassLaw& law, Rng& rng, Row&& out) {
  if (const auto* g = std::get_if<GaussianLaw>(&law)) {
    std::normal_distribution<double> normal;
    Vector z(g->mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    out = (g->mean + g->factor * z).transpose();
  } else {
    const auto& pool = std::get<EmpiricalPool>(law).rows;
    std::uniform_int_distribution<Eigen::Index> pick(0, pool.rows() - 1);
    out = pool.row(pick(rng));
  }
}

}  // namespace detail

/// Class-conditional Gaussian description in the form used by the
/// experiments: isotropic sigma unless a full covariance is supplied.
struct GaussianClassModel {
  Vector mu0;
  Vector mu1;
  double sigma = 1.0;
  std::optional<Matrix> cov0;
  std::optional<Matrix> cov1;
  double rho = 0.5;

  GaussianLaw law0() const {
    return cov0 ? GaussianLaw::full(mu0, *cov0) : GaussianLaw::isotropic(mu0, sigma);
  }
  GaussianLaw law1() const {
    return cov1 ? GaussianLaw::full(mu1, *cov1) : GaussianLaw::isotropic(mu1, sigma);
  }
};

struct SampleBatch {
  Matrix x;                        // n x d, one row per sample
  std::vector<std::uint8_t> y;     // labels in {0,1}
  Vector deployed;                 // theta the batch was drawn under

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
  Eigen::Index count(std::uint8_t label) const {
    Eigen::Index c = 0;
    for (auto v : y) c += (v == label);
    return c;
  }
};

/// Base draws before the performative shift is applied. Reusing one
/// BaseSample across several theta gives common random numbers.
struct BaseSample {
  Matrix u;
  std::vector<std::uint8_t> y;
};

class PerformativeModel {
 public:
  /// Labeled two-class model. Class 1 is the identity unless shift1 is given.
  PerformativeModel(ClassLaw class0, ClassLaw class1, double rho, ShiftOperator shift,
                    std::optional<ShiftOperator> shift1 = std::nullopt)
      : class0_(std::move(class0)),
        class1_(std::move(class1)),
        rho_(rho),
        shift_(std::move(shift)),
        shift1_(std::move(shift1)) {
    if (!(rho_ > 0.0 && rho_ < 1.0))
      throw std::invalid_argument("PerformativeModel: rho must lie in (0,1)");
    validate();
  }

  PerformativeModel(const GaussianClassModel& g, ShiftOperator shift,
                    std::optional<ShiftOperator> shift1 = std::nullopt)
      : PerformativeModel(g.law0(), g.law1(), g.rho, std::move(shift), std::move(shift1)) {}

  /// Single population (no labels): every row is "class 0" and moves.
  static PerformativeModel unlabeled(ClassLaw population, ShiftOperator shift) {
    return PerformativeModel(std::move(population), std::move(shift));
  }

  Eigen::Index dim() const { return shift_.dim(); }
  double rho() const { return rho_; }
  bool labeled() const { return class1_.has_value(); }
  const ClassLaw& class0() const { return class0_; }
  const ClassLaw& class1() const {
    if (!class1_) throw std::logic_error("PerformativeModel: unlabeled model has no class 1");
    return *class1_;
  }
  const ShiftOperator& shift() const { return shift_; }
  const std::optional<ShiftOperator>& shift1() const { return shift1_; }
  const Vector& anchor() const { return anchor_; }

  /// Mean of class 0 under deployment theta.
  Vector class0_mean(const Vector& theta) const {
    return law_mean(class0_) + shift_.apply(theta - anchor_);
  }
  Vector class1_mean(const Vector& theta) const {
    Vector m = law_mean(class1());
    if (shift1_) m += shift1_->apply(theta - anchor_);
    return m;
  }

  BaseSample draw_base(std::size_t n, std::uint64_t seed) const {
    if (n == 0) throw std::invalid_argument("draw_base: n must be >= 1");
    BaseSample base;
    base.u.resize(static_cast<Eigen::Index>(n), dim());
    base.y.assign(n, 0);
    Rng label_rng(derive_seed(seed, stream::labels));
    Rng rng0(derive_seed(seed, stream::class0));
    Rng rng1(derive_seed(seed, stream::class1));
    std::bernoulli_distribution coin(rho_);
    for (std::size_t i = 0; i < n; ++i) {
      const bool one = labeled() && coin(label_rng);
      base.y[i] = one ? 1 : 0;
      detail::draw_into(one ? *class1_ : class0_, one ? rng1 : rng0,
                        base.u.row(static_cast<Eigen::Index>(i)));
    }
    return base;
  }

  SampleBatch deploy(const BaseSample& base, const Vector& theta) const {
    require_dim(theta.size(), dim(), "deploy");
    if (!all_finite(theta)) throw std::invalid_argument("deploy: non-finite theta");
    const Vector rel = theta - anchor_;
    const Vector move0 = shift_.matrix() * rel;
    const Vector move1 = shift1_ ? Vector(shift1_->matrix() * rel) : Vector::Zero(dim());
    SampleBatch batch;
    batch.x = base.u;
    batch.y = base.y;
    batch.deployed = theta;
    for (Eigen::Index i = 0; i < batch.x.rows(); ++i)
      batch.x.row(i) += (batch.y[static_cast<std::size_t>(i)] ? move1 : move0).transpose();
    return batch;
  }

  /// Equivalent model whose base variable is the law at theta_bar.
  PerformativeModel relocalize(const Vector& theta_bar) const {
    require_dim(theta_bar.size(), dim(), "relocalize");
    PerformativeModel out = *this;
    const Vector rel = theta_bar - anchor_;
    out.class0_ = translate(class0_, shift_.apply(rel));
    if (class1_ && shift1_) out.class1_ = translate(*class1_, shift1_->apply(rel));
    out.anchor_ = theta_bar;
    return out;
  }

 private:
  PerformativeModel(ClassLaw population, ShiftOperator shift)
      : class0_(std::move(population)), rho_(0.0), shift_(std::move(shift)) {
    validate();
  }

  void validate() {
    const auto d = shift_.dim();
    require_dim(law_dim(class0_), d, "PerformativeModel class 0");
    if (class1_) require_dim(law_dim(*class1_), d, "PerformativeModel class 1");
    if (shift1_) require_dim(shift1_->dim(), d, "PerformativeModel shift1");
    for (const ClassLaw* law : {&class0_, class1_ ? &*class1_ : nullptr}) {
      if (const auto* pool = law ? std::get_if<EmpiricalPool>(law) : nullptr)
        if (pool->rows.rows() == 0)
          throw std::invalid_argument("PerformativeModel: empty empirical pool");
    }
    anchor_ = Vector::Zero(d);
  }

  ClassLaw class0_;
  std::optional<ClassLaw> class1_;
  double rho_;
  ShiftOperator shift_;
  std::optional<ShiftOperator> shift1_;
  Vector anchor_;
};

/// n labeled rows drawn under deployment theta; deterministic in rng_seed.
inline SampleBatch sample_deployed(const PerformativeModel& model, const Vector& theta,
                                   std::size_t n, std::uint64_t rng_seed) {
  require_dim(theta.size(), model.dim(), "sample_deployed");
  if (!all_finite(theta)) throw std::invalid_argument("sample_deployed: non-finite theta");
  return model.deploy(model.draw_base(n, rng_seed), theta);
}

inline PerformativeModel relocalize(const PerformativeModel& model, const Vector& theta_bar) {
  return model.relocalize(theta_bar);
}

}  // namespace performa
