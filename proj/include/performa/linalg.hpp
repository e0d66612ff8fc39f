#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace performa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Eigenvalue tolerance shared by the PSD/PD classification.
inline constexpr double kEigenTolerance = 1e-10;
// Floor applied to eigenvalues before taking inverse square roots.
inline constexpr double kEigenFloor = 1e-12;

inline bool all_finite(const Vector& v) { return v.allFinite(); }
inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(got) + ", expected " +
                                std::to_string(want) + ")");
}

inline double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Symmetric Pi^{-1/2} by eigendecomposition. Eigenvalues are floored at
/// kEigenFloor, so callers must reject singular inputs themselves.
inline Matrix inverse_sqrt(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues().cwiseMax(kEigenFloor).cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix sqrt_psd(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// ||v||_A = sqrt(v^T A v); A is expected PSD.
inline double weighted_norm(const Vector& v, const Matrix& a) {
  return std::sqrt(std::max(0.0, v.dot(a * v)));
}

}  // namespace performa
