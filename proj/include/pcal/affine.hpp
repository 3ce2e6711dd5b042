#ifndef PCAL_AFFINE_HPP
#define PCAL_AFFINE_HPP

#include <optional>
#include <vector>

#include "lifting.hpp"
#include "types.hpp"

namespace pcal {

namespace detail {

// Hermitian D x D <-> real 2D^2 coordinates [vec(Re Z); vec(Im Z)]. With
// this layout Re<A, B> is the Euclidean dot product of the coordinates.
inline RVector flatten(const CMatrix& z) {
  const Index n = z.size();
  RVector v(2 * n);
  v.head(n) = Eigen::Map<const RVector>(z.real().eval().data(), n);
  v.tail(n) = Eigen::Map<const RVector>(z.imag().eval().data(), n);
  return v;
}

inline CMatrix unflatten(const RVector& v, Index dim) {
  const Index n = dim * dim;
  CMatrix z(dim, dim);
  z.real() = Eigen::Map<const RMatrix>(v.data(), dim, dim);
  z.imag() = Eigen::Map<const RMatrix>(v.data() + n, dim, dim);
  return z;
}

}  // namespace detail

/// The affine set {Z Hermitian : A(Z) = b}, where each real row of A is a
/// functional Z -> Re<R_r, Z> with R_r Hermitian. The pseudo-inverse of the
/// Gram matrix A A* is cached at construction.
class AffineConstraintSet {
 public:
  /// Eigenvalues of A A* below this fraction of the largest are treated as zero.
  static constexpr double kRankTol = 1e-10;

  AffineConstraintSet(Index dim, RMatrix rows, RVector rhs, Field field = Field::complex)
      : dim_(dim), a_(std::move(rows)), b_(std::move(rhs)), field_(field) {
    if (a_.rows() != b_.size()) throw DimensionError("AffineConstraintSet: row count differs from rhs size");
    if (a_.cols() != 2 * dim_ * dim_) throw DimensionError("AffineConstraintSet: row length differs from 2 D^2");
    factorize();
  }

  Index dim() const { return dim_; }
  Index row_count() const { return a_.rows(); }
  Index rank() const { return rank_; }
  Field field() const { return field_; }
  const RVector& rhs() const { return b_; }
  const RMatrix& operator_matrix() const { return a_; }

  /// False when b is outside the range of A, i.e. the set is empty.
  bool consistent() const { return consistent_; }

  RVector apply(const CMatrix& z) const {
    check(z);
    if (a_.rows() == 0) return RVector();
    return a_ * detail::flatten(z);
  }

  CMatrix adjoint(const RVector& w) const {
    if (w.size() != a_.rows()) throw DimensionError("AffineConstraintSet::adjoint: size mismatch");
    if (a_.rows() == 0) return CMatrix::Zero(dim_, dim_);
    return detail::unflatten(a_.transpose() * w, dim_);
  }

  /// Z - A*((A A*)^+ (A(Z) - b)). Least-squares projection when the set is empty.
  HermitianMatrix project(const HermitianMatrix& z) const {
    check(z.matrix());
    if (a_.rows() == 0) return field_ == Field::real ? real_part(z) : z;
    RVector v = detail::flatten(z.matrix());
    if (field_ == Field::real) v.tail(dim_ * dim_).setZero();
    const RVector r = a_ * v - b_;
    v -= a_.transpose() * (gram_pinv_ * r);
    return HermitianMatrix::symmetrized(detail::unflatten(v, dim_));
  }

  double residual_norm(const CMatrix& z) const {
    if (a_.rows() == 0) return 0.0;
    return (apply(z) - b_).norm();
  }

  /// Frobenius distance from Z to the set.
  double distance(const HermitianMatrix& z) const { return (z - project(z)).frobenius_norm(); }

 private:
  static HermitianMatrix real_part(const HermitianMatrix& z) {
    return HermitianMatrix::symmetrized(z.matrix().real().cast<Complex>());
  }

  void check(const CMatrix& z) const {
    if (z.rows() != dim_ || z.cols() != dim_) throw DimensionError("AffineConstraintSet: matrix dimension mismatch");
  }

  void factorize() {
    if (a_.rows() == 0) {
      rank_ = 0;
      consistent_ = true;
      return;
    }
    const RMatrix gram = a_ * a_.transpose();
    Eigen::SelfAdjointEigenSolver<RMatrix> es(gram);
    const RVector& ev = es.eigenvalues();
    const double cutoff = kRankTol * std::max(ev.maxCoeff(), 0.0);
    RVector inv = RVector::Zero(ev.size());
    rank_ = 0;
    for (Index i = 0; i < ev.size(); ++i) {
      if (ev(i) > cutoff && ev(i) > 0.0) {
        inv(i) = 1.0 / ev(i);
        ++rank_;
      }
    }
    const RMatrix& q = es.eigenvectors();
    gram_pinv_ = q * inv.asDiagonal() * q.transpose();
    RVector in_range = RVector::Zero(b_.size());
    for (Index i = 0; i < ev.size(); ++i) {
      if (inv(i) != 0.0) in_range += q.col(i) * q.col(i).dot(b_);
    }
    consistent_ = (b_ - in_range).norm() <= 1e-8 * std::max(1.0, b_.norm());
  }

  Index dim_;
  RMatrix a_;
  RVector b_;
  Field field_;
  RMatrix gram_pinv_;
  Index rank_ = 0;
  bool consistent_ = true;
};

/// Rows m_i' Z_{k,l} m_i = g_{i,k,l} for every i and k <= l (real and
/// imaginary parts for k < l, real part only for k = l), optionally followed
/// by Tr(Z) = trace_value. The real field drops the imaginary rows.
inline AffineConstraintSet lifted_measurement_constraints(const MeasurementEnsemble& ens, Index L,
                                                          const MeasurementTensor& g,
                                                          std::optional<double> trace_value = std::nullopt,
                                                          Field field = Field::complex) {
  if (L <= 0) throw DimensionError("lifted_measurement_constraints: L must be positive");
  if (static_cast<Index>(g.size()) != ens.M()) throw DimensionError("lifted_measurement_constraints: M mismatch");
  const Index n = ens.N;
  const Index d = L * n;
  const Index per = field == Field::real ? L * (L + 1) / 2 : L * L;
  const Index nrows = ens.M() * per + (trace_value ? 1 : 0);
  RMatrix rows(nrows, 2 * d * d);
  RVector rhs(nrows);
  Index r = 0;
  for (Index i = 0; i < ens.M(); ++i) {
    const CVector& m = ens.vectors[static_cast<size_t>(i)];
    const CMatrix mm = m * m.adjoint();
    const CMatrix& gi = g[static_cast<size_t>(i)];
    if (gi.rows() != L || gi.cols() != L) throw DimensionError("lifted_measurement_constraints: block size");
    for (Index k = 0; k < L; ++k) {
      for (Index l = k; l < L; ++l) {
        CMatrix p = CMatrix::Zero(d, d);
        p.block(k * n, l * n, n, n) = mm;
        const CMatrix re_row = 0.5 * (p + p.adjoint());
        rows.row(r) = detail::flatten(re_row).transpose();
        rhs(r++) = gi(k, l).real();
        if (l != k && field == Field::complex) {
          const Complex j(0.0, 1.0);
          const CMatrix im_row = 0.5 * (j * p + (j * p).adjoint());
          rows.row(r) = detail::flatten(im_row).transpose();
          rhs(r++) = gi(k, l).imag();
        }
      }
    }
  }
  if (trace_value) {
    rows.row(r) = detail::flatten(CMatrix::Identity(d, d)).transpose();
    rhs(r++) = *trace_value;
  }
  return AffineConstraintSet(d, std::move(rows), std::move(rhs), field);
}

inline AffineConstraintSet lifted_measurement_constraints(const MeasurementEnsemble& ens,
                                                          const CrossMeasurements& g,
                                                          std::optional<double> trace_value = std::nullopt,
                                                          Field field = Field::complex) {
  return lifted_measurement_constraints(ens, g.L(), g.tensor(), trace_value, field);
}

/// Homogeneous measurement rows plus Tr(Z) = p.
inline AffineConstraintSet nullspace_constraints(const MeasurementEnsemble& ens, Index L, double p,
                                                 Field field = Field::complex) {
  const MeasurementTensor zeros(static_cast<size_t>(ens.M()), CMatrix::Zero(L, L));
  return lifted_measurement_constraints(ens, L, zeros, p, field);
}

/// Tr(Z) = p alone.
inline AffineConstraintSet trace_constraint(Index dim, double p, Field field = Field::complex) {
  RMatrix rows(1, 2 * dim * dim);
  rows.row(0) = detail::flatten(CMatrix::Identity(dim, dim)).transpose();
  RVector rhs(1);
  rhs(0) = p;
  return AffineConstraintSet(dim, std::move(rows), std::move(rhs), field);
}

inline HermitianMatrix project_affine(const HermitianMatrix& z, const AffineConstraintSet& a) {
  return a.project(z);
}

}  // namespace pcal

#endif  // PCAL_AFFINE_HPP
