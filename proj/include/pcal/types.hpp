#ifndef PCAL_TYPES_HPP
#define PCAL_TYPES_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pcal {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Relative threshold below which a lifted entry counts as zero.
inline constexpr double kSupportTol = 1e-9;
inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kUnitaryTol = 1e-10;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class Field { complex, real };

inline const char* to_string(Field f) { return f == Field::real ? "real" : "complex"; }

inline Field field_from_string(const std::string& s) {
  if (s == "complex") return Field::complex;
  if (s == "real") return Field::real;
  throw Error("unknown field '" + s + "' (expected complex or real)");
}

inline double max_abs(const CMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool all_finite(const CMatrix& m) {
  return m.real().allFinite() && m.imag().allFinite();
}

/// Dense Hermitian matrix. The stored entries are exactly Hermitian: the
/// diagonal is real and the lower triangle is the conjugate of the upper.
class HermitianMatrix {
 public:
  HermitianMatrix() = default;
  explicit HermitianMatrix(Index dim) : m_(CMatrix::Zero(dim, dim)) {}

  /// Checks max |Z_ij - conj(Z_ji)| <= tol * max(1, max |Z_ij|), then
  /// removes the residual asymmetry.
  static HermitianMatrix from(const CMatrix& m, double tol = kHermitianTol) {
    if (m.rows() != m.cols()) throw DimensionError("HermitianMatrix: matrix is not square");
    const double asym = max_abs(m - m.adjoint());
    if (!(asym <= tol * std::max(1.0, max_abs(m)))) {
      throw NumericalError("HermitianMatrix: input is not Hermitian (asymmetry " +
                           std::to_string(asym) + ")");
    }
    return symmetrized(m);
  }

  /// Hermitian part (M + M')/2 with no validation.
  static HermitianMatrix symmetrized(const CMatrix& m) {
    if (m.rows() != m.cols()) throw DimensionError("HermitianMatrix: matrix is not square");
    HermitianMatrix h;
    h.m_ = 0.5 * (m + m.adjoint());
    for (Index i = 0; i < h.m_.rows(); ++i) h.m_(i, i) = Complex(h.m_(i, i).real(), 0.0);
    return h;
  }

  static HermitianMatrix identity(Index dim) {
    HermitianMatrix h;
    h.m_ = CMatrix::Identity(dim, dim);
    return h;
  }

  Index dim() const { return m_.rows(); }
  const CMatrix& matrix() const { return m_; }
  Complex operator()(Index i, Index j) const { return m_(i, j); }

  double trace() const { return m_.diagonal().real().sum(); }
  double frobenius_norm() const { return m_.norm(); }
  double l1_norm() const { return m_.cwiseAbs().sum(); }

  double min_eigenvalue() const {
    if (dim() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
  }

  HermitianMatrix operator+(const HermitianMatrix& o) const { return raw(m_ + o.m_); }
  HermitianMatrix operator-(const HermitianMatrix& o) const { return raw(m_ - o.m_); }
  HermitianMatrix operator-() const { return raw(-m_); }
  HermitianMatrix operator*(double c) const { return raw(c * m_); }
  friend HermitianMatrix operator*(double c, const HermitianMatrix& h) { return h * c; }

 private:
  static HermitianMatrix raw(CMatrix m) {
    HermitianMatrix h;
    h.m_ = std::move(m);
    return h;
  }

  CMatrix m_;
};

/// Real part of the Frobenius inner product, sum conj(A_ij) B_ij.
inline double real_inner(const CMatrix& a, const CMatrix& b) {
  return (a.real().cwiseProduct(b.real()) + a.imag().cwiseProduct(b.imag())).sum();
}

}  // namespace pcal

#endif  // PCAL_TYPES_HPP
