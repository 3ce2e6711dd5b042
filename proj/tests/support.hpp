// Shared helpers and independent reference computations for the tests.
#ifndef PCAL_TESTS_SUPPORT_HPP
#define PCAL_TESTS_SUPPORT_HPP

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pcal/pcal.hpp"

namespace testing_support {

using namespace pcal;

struct Rng {
  std::mt19937_64 gen;
  std::normal_distribution<double> normal{0.0, 1.0};

  explicit Rng(std::uint64_t seed) : gen(seed) {}

  double gauss() { return normal(gen); }
  Complex cgauss() { return {normal(gen), normal(gen)}; }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(gen); }

  CVector cvector(Index n) {
    CVector v(n);
    for (Index i = 0; i < n; ++i) v(i) = cgauss();
    return v;
  }
  RVector rvector(Index n) {
    RVector v(n);
    for (Index i = 0; i < n; ++i) v(i) = gauss();
    return v;
  }
  CMatrix cmatrix(Index r, Index c) {
    CMatrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = cgauss();
    return m;
  }
  HermitianMatrix hermitian(Index d) {
    const CMatrix a = cmatrix(d, d);
    return HermitianMatrix::symmetrized(0.5 * (a + a.adjoint()));
  }
  /// B B' with B of the given column count.
  HermitianMatrix psd(Index d, Index rank) {
    const CMatrix b = cmatrix(d, rank);
    return HermitianMatrix::symmetrized(b * b.adjoint());
  }
  /// Haar-ish unitary from the QR factor of a Gaussian matrix.
  CMatrix unitary(Index d) {
    Eigen::HouseholderQR<CMatrix> qr(cmatrix(d, d));
    return qr.householderQ() * CMatrix::Identity(d, d);
  }
  /// K-sparse complex vector with exactly zero off-support entries.
  CVector sparse(Index n, Index k) {
    std::vector<Index> idx(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), gen);
    CVector v = CVector::Zero(n);
    for (Index i = 0; i < k; ++i) v(idx[static_cast<size_t>(i)]) = cgauss();
    return v;
  }
  MeasurementEnsemble ensemble(Index n, Index m) {
    std::vector<CVector> ms;
    std::vector<double> ph;
    for (Index i = 0; i < m; ++i) {
      ms.push_back(cvector(n));
      ph.push_back(uniform(0.0, 2.0 * M_PI));
    }
    return MeasurementEnsemble::from_vectors(n, std::move(ms), std::move(ph));
  }
};

/// m' Z_{k,l} m written out entry by entry.
inline Complex quad_form_block(const CMatrix& z, const CVector& m, Index k, Index l, Index n) {
  Complex s = 0.0;
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) s += std::conj(m(a)) * z(k * n + a, l * n + b) * m(b);
  return s;
}

/// G computed from its definition, with the support and signs taken from x.
inline double g_reference(const CMatrix& z, const CVector& x) {
  const Index d = x.size();
  double xmax = 0.0;
  for (Index i = 0; i < d; ++i) xmax = std::max(xmax, std::abs(x(i)));
  double s = 0.0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      const Complex xij = x(i) * std::conj(x(j));
      if (std::abs(xij) > kSupportTol * xmax * xmax) {
        s += (std::conj(xij / std::abs(xij)) * z(i, j)).real();
      } else {
        s += std::abs(z(i, j));
      }
    }
  }
  return s;
}

/// Dimension of {Z Hermitian : m_i' Z_{k,l} m_i = 0 for all i, k, l}, from
/// the singular values of the explicitly assembled real constraint matrix
/// acting on a real basis of the Hermitian matrices.
inline Index homogeneous_nullity(const MeasurementEnsemble& ens, Index L, Field field = Field::complex) {
  const Index n = ens.N, d = L * n, m = ens.M();
  std::vector<CMatrix> basis;
  for (Index i = 0; i < d; ++i) {
    CMatrix e = CMatrix::Zero(d, d);
    e(i, i) = 1.0;
    basis.push_back(e);
    for (Index j = i + 1; j < d; ++j) {
      CMatrix r = CMatrix::Zero(d, d);
      r(i, j) = r(j, i) = 1.0;
      basis.push_back(r);
      if (field == Field::complex) {
        CMatrix c = CMatrix::Zero(d, d);
        c(i, j) = Complex(0, 1);
        c(j, i) = Complex(0, -1);
        basis.push_back(c);
      }
    }
  }
  RMatrix a(2 * m * L * L, static_cast<Index>(basis.size()));
  for (size_t c = 0; c < basis.size(); ++c) {
    Index r = 0;
    for (Index i = 0; i < m; ++i) {
      for (Index k = 0; k < L; ++k) {
        for (Index l = 0; l < L; ++l) {
          const Complex v = quad_form_block(basis[c], ens.vectors[static_cast<size_t>(i)], k, l, n);
          a(r++, static_cast<Index>(c)) = v.real();
          a(r++, static_cast<Index>(c)) = v.imag();
        }
      }
    }
  }
  if (a.rows() == 0) return a.cols();
  Eigen::JacobiSVD<RMatrix> svd(a);
  const RVector& sv = svd.singularValues();
  const double cut = 1e-9 * sv(0);
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i) rank += sv(i) > cut;
  return a.cols() - rank;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace testing_support

#endif  // PCAL_TESTS_SUPPORT_HPP
