// Shared numeric types, error hierarchy and dense linear-algebra helpers.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>

namespace lrlab {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base class of everything the library throws on bad input.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition of a library operation (bad argument, support violation, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A request exceeded a resource cap (Hilbert-space dimension, enumeration budget).
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent experiment configuration. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline constexpr Index kDefaultMaxDimension = 4096;

/// Largest dense Hilbert-space dimension accepted. LRLAB_MAX_DIM overrides the default.
inline Index max_dimension() {
  if (const char* env = std::getenv("LRLAB_MAX_DIM")) {
    char* end = nullptr;
    const long long value = std::strtoll(env, &end, 10);
    if (end != env && *end == '\0' && value > 0) return static_cast<Index>(value);
  }
  return kDefaultMaxDimension;
}

inline void check_dimension(Index dim, const std::string& what) {
  const Index cap = max_dimension();
  if (dim > cap) {
    throw ResourceError(what + " has Hilbert-space dimension " + std::to_string(dim) +
                        ", above the cap of " + std::to_string(cap) +
                        " (set LRLAB_MAX_DIM to override)");
  }
}

inline bool all_finite(const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j).real()) || !std::isfinite(m(i, j).imag())) return false;
  return true;
}

inline double max_abs_entry(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// max |M - M^dagger| over entries.
inline double hermiticity_defect(const Matrix& m) {
  return max_abs_entry(m - m.adjoint());
}

inline bool is_real(const Matrix& m) {
  return m.size() == 0 || m.imag().cwiseAbs().maxCoeff() == 0.0;
}

/// Largest absolute eigenvalue of a Hermitian matrix (only the lower triangle is read).
inline double hermitian_spectral_radius(const Matrix& h) {
  if (h.size() == 0) return 0.0;
  if (is_real(h)) {
    const RealMatrix re = h.real();
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(re, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw Error("eigenvalue computation failed");
    return std::max(std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(re.rows() - 1)));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw Error("eigenvalue computation failed");
  const auto& ev = es.eigenvalues();
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

/// Operator norm (largest singular value).
///
/// Hermitian and anti-Hermitian inputs, detected to round-off, go through a
/// Hermitian eigenvalue solve; everything else through the spectrum of M^dagger M.
inline double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (!all_finite(m)) throw DomainError("operator_norm: matrix has non-finite entries");
  if (m.rows() != m.cols()) {
    Eigen::BDCSVD<Matrix> svd(m);
    return svd.singularValues()(0);
  }
  const double scale = max_abs_entry(m);
  if (scale == 0.0) return 0.0;
  const double eps = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  if (max_abs_entry(m - m.adjoint()) <= eps) return hermitian_spectral_radius(m);
  if (max_abs_entry(m + m.adjoint()) <= eps) return hermitian_spectral_radius(Complex(0, 1) * m);
  const Matrix gram = m.adjoint() * m;
  return std::sqrt(hermitian_spectral_radius(gram));
}

/// Eigendecomposition H = V diag(E) V^dagger of a Hermitian matrix, used for exact
/// unitary conjugation e^{itH} X e^{-itH}.
class SpectralDecomposition {
 public:
  SpectralDecomposition() = default;

  explicit SpectralDecomposition(const Matrix& h) {
    if (!all_finite(h)) throw DomainError("eigendecomposition: non-finite Hamiltonian");
    if (is_real(h)) {
      const RealMatrix re = h.real();
      Eigen::SelfAdjointEigenSolver<RealMatrix> es(re);
      if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
      energies_ = es.eigenvalues();
      vectors_ = es.eigenvectors().cast<Complex>();
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> es(h);
      if (es.info() != Eigen::Success) throw Error("eigendecomposition failed");
      energies_ = es.eigenvalues();
      vectors_ = es.eigenvectors();
    }
  }

  const RealVector& energies() const noexcept { return energies_; }
  const Matrix& vectors() const noexcept { return vectors_; }
  Index dim() const noexcept { return energies_.size(); }

  /// X -> V^dagger X V
  Matrix to_eigenbasis(const Matrix& x) const { return vectors_.adjoint() * x * vectors_; }
  /// X' -> V X' V^dagger
  Matrix from_eigenbasis(const Matrix& x) const { return vectors_ * x * vectors_.adjoint(); }

  /// e^{itE_j} X'_{jk} e^{-itE_k} applied to an eigenbasis matrix.
  Matrix phase_eigenbasis(const Matrix& x_eig, double t) const {
    const Index n = dim();
    Eigen::VectorXcd phase(n);
    for (Index j = 0; j < n; ++j) phase(j) = std::polar(1.0, t * energies_(j));
    Matrix out(n, n);
    for (Index k = 0; k < n; ++k) {
      const Complex ck = std::conj(phase(k));
      for (Index j = 0; j < n; ++j) out(j, k) = phase(j) * x_eig(j, k) * ck;
    }
    return out;
  }

  /// e^{itH} X e^{-itH}
  Matrix conjugate(const Matrix& x, double t) const {
    if (t == 0.0) return x;
    return from_eigenbasis(phase_eigenbasis(to_eigenbasis(x), t));
  }

  /// e^{-itH}
  Matrix unitary(double t) const {
    const Index n = dim();
    Eigen::VectorXcd phase(n);
    for (Index j = 0; j < n; ++j) phase(j) = std::polar(1.0, -t * energies_(j));
    return vectors_ * phase.asDiagonal() * vectors_.adjoint();
  }

 private:
  RealVector energies_;
  Matrix vectors_;
};

}  // namespace lrlab
