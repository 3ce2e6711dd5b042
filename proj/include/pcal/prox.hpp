#ifndef PCAL_PROX_HPP
#define PCAL_PROX_HPP

#include <optional>

#include "lifting.hpp"
#include "types.hpp"

namespace pcal {

namespace detail {

inline CMatrix clamp_psd(const CMatrix& h) {
  if (h.rows() == 0) return h;
  if (!all_finite(h)) throw NumericalError("PSD projection: non-finite input");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  if (es.info() != Eigen::Success) throw NumericalError("PSD projection: eigendecomposition failed");
  const RVector lam = es.eigenvalues().cwiseMax(0.0);
  const CMatrix& v = es.eigenvectors();
  return v * lam.cast<Complex>().asDiagonal() * v.adjoint();
}

inline Complex soft_threshold(Complex z, double t) {
  const double a = std::abs(z);
  if (a <= t) return Complex(0.0, 0.0);
  return z * ((a - t) / a);
}

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

}  // namespace detail

/// Frobenius-nearest PSD matrix: eigenvalues clamped at zero.
inline HermitianMatrix prox_psd(const HermitianMatrix& h) {
  return HermitianMatrix::symmetrized(detail::clamp_psd(h.matrix()));
}

/// Projection onto {E [a b'; b C] E' : a real, b free, C PSD}: the trailing
/// block of E'ZE is clamped, the first row and column are kept.
///
/// With `face` (orthonormal columns, in the coordinates of E's trailing
/// columns) C is further confined to face * PSD * face'.
inline HermitianMatrix prox_structure(const HermitianMatrix& z, const EigBasis& e,
                                      const std::optional<CMatrix>& face = std::nullopt) {
  if (z.dim() != e.dim()) throw DimensionError("prox_structure: dimension mismatch");
  const Index d = z.dim();
  if (face && face->rows() != d - 1) throw DimensionError("prox_structure: face dimension mismatch");
  const CMatrix& em = e.matrix();
  CMatrix w = HermitianMatrix::symmetrized(em.adjoint() * z.matrix() * em).matrix();
  if (d > 1) {
    if (face) {
      const CMatrix& v = *face;
      w.bottomRightCorner(d - 1, d - 1) =
          v * detail::clamp_psd(v.adjoint() * w.bottomRightCorner(d - 1, d - 1) * v) * v.adjoint();
    } else {
      w.bottomRightCorner(d - 1, d - 1) = detail::clamp_psd(w.bottomRightCorner(d - 1, d - 1));
    }
  }
  return HermitianMatrix::symmetrized(em * w * em.adjoint());
}

/// Projection onto {Z : E'ZE + shift e_1 e_1' PSD}. For shift >= 0 this is a
/// subset of the exact structure set (b in range(C) by the Schur complement).
/// A face confines E'ZE to span(e_1, face).
inline HermitianMatrix prox_range_restricted(const HermitianMatrix& z, const EigBasis& e, double shift,
                                             const std::optional<CMatrix>& face = std::nullopt) {
  if (z.dim() != e.dim()) throw DimensionError("prox_range_restricted: dimension mismatch");
  const Index d = z.dim();
  if (face && face->rows() != d - 1) throw DimensionError("prox_range_restricted: face dimension mismatch");
  CMatrix basis = e.matrix();
  if (face) {
    CMatrix b(d, face->cols() + 1);
    b.col(0) = basis.col(0);
    b.rightCols(face->cols()) = basis.rightCols(d - 1) * *face;
    basis = std::move(b);
  }
  CMatrix w = HermitianMatrix::symmetrized(basis.adjoint() * z.matrix() * basis).matrix();
  w(0, 0) += shift;
  w = detail::clamp_psd(w);
  w(0, 0) -= shift;
  return HermitianMatrix::symmetrized(basis * w * basis.adjoint());
}

/// Projection onto the Frobenius ball of the given radius.
inline HermitianMatrix project_ball(const HermitianMatrix& z, double radius) {
  const double n = z.frobenius_norm();
  return n <= radius ? z : z * (radius / n);
}

/// Entrywise prox of t (Tr + lambda ||.||_1). Off-diagonal entries are
/// soft-thresholded by t lambda; a diagonal entry d becomes
/// soft(d - t, t lambda).
inline HermitianMatrix prox_l1_trace(const HermitianMatrix& z, double t, double lambda) {
  if (!(t > 0.0)) throw Error("prox_l1_trace: step must be positive");
  if (!(lambda >= 0.0)) throw Error("prox_l1_trace: lambda must be >= 0");
  const Index d = z.dim();
  const double tl = t * lambda;
  CMatrix out(d, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) {
      out(i, j) = i == j ? Complex(detail::soft_threshold(z(i, i).real() - t, tl), 0.0)
                         : detail::soft_threshold(z(i, j), tl);
    }
  }
  return HermitianMatrix::symmetrized(out);
}

/// Prox of t * G: on the support z - t S_ij, off the support soft(z, t).
inline HermitianMatrix prox_g(const HermitianMatrix& z, double t, const SupportPattern& omega, const SignMatrix& s) {
  if (!(t > 0.0)) throw Error("prox_g: step must be positive");
  if (z.dim() != omega.dim() || z.dim() != s.dim()) throw DimensionError("prox_g: dimension mismatch");
  const Index d = z.dim();
  CMatrix out(d, d);
  for (Index j = 0; j < d; ++j) {
    for (Index i = 0; i < d; ++i) {
      out(i, j) = omega.mask(i, j) ? z(i, j) - t * s.entries(i, j) : detail::soft_threshold(z(i, j), t);
    }
  }
  return HermitianMatrix::symmetrized(out);
}

}  // namespace pcal

#endif  // PCAL_PROX_HPP
