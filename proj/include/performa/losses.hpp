#pragma once

#include "performa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace performa {

enum class SurrogateKind { quadratic, logistic, hinge, exponential };

/// Phi(v) on the signed margin v.
inline double surrogate_value(SurrogateKind kind, double v) {
  switch (kind) {
    case SurrogateKind::quadratic: return (1.0 - v) * (1.0 - v);
    case SurrogateKind::logistic: return std::log1p(std::exp(-std::abs(v))) + std::max(0.0, -v);
    case SurrogateKind::hinge: return std::max(0.0, 1.0 - v);
    case SurrogateKind::exponential: return std::exp(-v);
  }
  return 0.0;
}

/// Phi'(v). The hinge kink at v = 1 uses the subgradient 0.
inline double surrogate_derivative(SurrogateKind kind, double v) {
  switch (kind) {
    case SurrogateKind::quadratic: return -2.0 * (1.0 - v);
    case SurrogateKind::logistic:
      if (v >= 0.0) {
        const double e = std::exp(-v);
        return -e / (1.0 + e);
      }
      return -1.0 / (1.0 + std::exp(v));
    case SurrogateKind::hinge: return v < 1.0 ? -1.0 : 0.0;
    case SurrogateKind::exponential: return -std::exp(-v);
  }
  return 0.0;
}

inline bool is_nonincreasing(SurrogateKind kind) { return kind != SurrogateKind::quadratic; }

inline std::string_view to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::quadratic: return "quadratic";
    case SurrogateKind::logistic: return "logistic";
    case SurrogateKind::hinge: return "hinge";
    case SurrogateKind::exponential: return "exponential";
  }
  return "?";
}

inline SurrogateKind parse_surrogate(std::string_view name) {
  if (name == "quadratic") return SurrogateKind::quadratic;
  if (name == "logistic") return SurrogateKind::logistic;
  if (name == "hinge") return SurrogateKind::hinge;
  if (name == "exponential") return SurrogateKind::exponential;
  throw std::invalid_argument("unknown surrogate loss '" + std::string(name) + "'");
}

/// Per-sample loss l(z; theta).
///  - classification: Phi(s x^T theta) with s = +1 for y = 1 and s = -1 for y = 0
///  - pricing:        -z^T theta (labels ignored)
///  - mean_estimation: ||z - theta||^2 / 2 (labels ignored)
struct Loss {
  enum class Kind { classification, pricing, mean_estimation };

  Kind kind = Kind::classification;
  SurrogateKind surrogate = SurrogateKind::logistic;

  static Loss classification(SurrogateKind s) { return {Kind::classification, s}; }
  static Loss pricing() { return {Kind::pricing, SurrogateKind::logistic}; }
  static Loss mean_estimation() { return {Kind::mean_estimation, SurrogateKind::logistic}; }

  bool is_classification() const { return kind == Kind::classification; }
};

inline double label_sign(std::uint8_t y) { return y ? 1.0 : -1.0; }

template <class X, class T>
double loss_value(const Loss& loss, const X& x, std::uint8_t y, const T& theta) {
  switch (loss.kind) {
    case Loss::Kind::classification:
      return surrogate_value(loss.surrogate, label_sign(y) * x.dot(theta));
    case Loss::Kind::pricing: return -x.dot(theta);
    case Loss::Kind::mean_estimation: return 0.5 * (x - theta).squaredNorm();
  }
  return 0.0;
}

/// Gradient in the sample z (first argument of the loss).
template <class X, class T>
Vector grad_z(const Loss& loss, const X& x, std::uint8_t y, const T& theta) {
  switch (loss.kind) {
    case Loss::Kind::classification: {
      const double s = label_sign(y);
      return s * surrogate_derivative(loss.surrogate, s * x.dot(theta)) * theta;
    }
    case Loss::Kind::pricing: return -theta;
    case Loss::Kind::mean_estimation: return x - theta;
  }
  return Vector();
}

/// Gradient in the model parameter (second argument of the loss).
template <class X, class T>
Vector grad_theta(const Loss& loss, const X& x, std::uint8_t y, const T& theta) {
  switch (loss.kind) {
    case Loss::Kind::classification: {
      const double s = label_sign(y);
      return s * surrogate_derivative(loss.surrogate, s * x.dot(theta)) * x;
    }
    case Loss::Kind::pricing: return -x;
    case Loss::Kind::mean_estimation: return theta - x;
  }
  return Vector();
}

struct PricingEvaluation {
  double value;
  Vector grad_z;
  Vector grad_theta;
};

inline PricingEvaluation pricing_loss(const Vector& z, const Vector& theta) {
  require_dim(z.size(), theta.size(), "pricing_loss");
  return {-z.dot(theta), -theta, -z};
}

/// Prediction rule sign(x^T theta): class 1 iff strictly positive.
template <class X>
std::uint8_t predict(const X& x, const Vector& theta) {
  return x.dot(theta) > 0.0 ? 1 : 0;
}

}  // namespace performa
