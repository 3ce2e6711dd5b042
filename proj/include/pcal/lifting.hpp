#ifndef PCAL_LIFTING_HPP
#define PCAL_LIFTING_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "types.hpp"

namespace pcal {

// ---------------------------------------------------------------------------
// Signals and measurements
// ---------------------------------------------------------------------------

/// L signals of dimension N sharing the per-signal sparsity K, plus their
/// stacked joint vector [x_1; ...; x_L].
struct SignalSet {
  Index N = 0;
  Index L = 0;
  Index K = 0;
  std::vector<CVector> signals;
  CVector joint;

  /// Validates equal lengths and equal support size. An entry is on the
  /// support when its modulus exceeds support_tol times the largest modulus
  /// over all signals.
  static SignalSet from_signals(std::vector<CVector> xs, double support_tol = kSupportTol) {
    if (xs.empty()) throw DimensionError("SignalSet: no signals");
    SignalSet s;
    s.N = xs.front().size();
    s.L = static_cast<Index>(xs.size());
    double scale = 0.0;
    for (const auto& x : xs) {
      if (x.size() != s.N) throw DimensionError("SignalSet: signals differ in length");
      if (!x.allFinite()) throw NumericalError("SignalSet: non-finite signal entry");
      if (x.size() > 0) scale = std::max(scale, x.cwiseAbs().maxCoeff());
    }
    const double thr = support_tol * scale;
    for (Index l = 0; l < s.L; ++l) {
      const Index k = (xs[l].cwiseAbs().array() > thr).count();
      if (l == 0) {
        s.K = k;
      } else if (k != s.K) {
        throw DimensionError("SignalSet: signals have different sparsity");
      }
    }
    s.joint.resize(s.N * s.L);
    for (Index l = 0; l < s.L; ++l) s.joint.segment(l * s.N, s.N) = xs[l];
    s.signals = std::move(xs);
    return s;
  }

  SignalSet scaled(double c) const {
    std::vector<CVector> xs;
    for (const auto& x : signals) xs.push_back(c * x);
    return from_signals(std::move(xs));
  }
};

struct MeasurementEnsemble {
  Index N = 0;
  std::vector<CVector> vectors;
  std::optional<std::vector<double>> phases;

  Index M() const { return static_cast<Index>(vectors.size()); }

  static MeasurementEnsemble from_vectors(Index N, std::vector<CVector> ms,
                                          std::optional<std::vector<double>> phases = std::nullopt) {
    MeasurementEnsemble e;
    e.N = N;
    for (const auto& m : ms) {
      if (m.size() != N) throw DimensionError("MeasurementEnsemble: vector length differs from N");
      if (!m.allFinite()) throw NumericalError("MeasurementEnsemble: non-finite entry");
      if (m.squaredNorm() == 0.0) throw NumericalError("MeasurementEnsemble: zero measurement vector");
    }
    if (phases && phases->size() != ms.size()) {
      throw DimensionError("MeasurementEnsemble: phase count differs from M");
    }
    e.vectors = std::move(ms);
    e.phases = std::move(phases);
    return e;
  }

  /// The first `count` measurements (with their phases).
  MeasurementEnsemble prefix(Index count) const {
    MeasurementEnsemble e;
    e.N = N;
    e.vectors.assign(vectors.begin(), vectors.begin() + count);
    if (phases) e.phases = std::vector<double>(phases->begin(), phases->begin() + count);
    return e;
  }
};

/// y_{i,l}, one row per measurement and one column per signal.
struct MeasurementTable {
  CMatrix values;
};

/// Per-measurement L x L blocks, g[i](k, l) = g_{i,k,l}. Not necessarily
/// conjugate symmetric when produced from an arbitrary matrix.
using MeasurementTensor = std::vector<CMatrix>;

/// Cross measurements g_{i,k,l} = y_{i,k} conj(y_{i,l}). Conjugate symmetry
/// and the real, nonnegative diagonal hold exactly by construction.
class CrossMeasurements {
 public:
  Index M() const { return static_cast<Index>(g_.size()); }
  Index L() const { return L_; }
  const MeasurementTensor& tensor() const { return g_; }
  const CMatrix& block(Index i) const { return g_[static_cast<size_t>(i)]; }

  static CrossMeasurements from_table(const MeasurementTable& y) {
    CrossMeasurements c;
    c.L_ = y.values.cols();
    c.g_.reserve(static_cast<size_t>(y.values.rows()));
    for (Index i = 0; i < y.values.rows(); ++i) {
      CMatrix b(c.L_, c.L_);
      for (Index k = 0; k < c.L_; ++k) {
        b(k, k) = Complex(std::norm(y.values(i, k)), 0.0);
        for (Index l = k + 1; l < c.L_; ++l) {
          b(k, l) = y.values(i, k) * std::conj(y.values(i, l));
          b(l, k) = std::conj(b(k, l));
        }
      }
      c.g_.push_back(std::move(b));
    }
    return c;
  }

  /// Single-signal data from squared magnitudes |y_i|^2.
  static CrossMeasurements from_magnitudes(const std::vector<double>& mags) {
    CrossMeasurements c;
    c.L_ = 1;
    for (double v : mags) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error("CrossMeasurements: magnitudes must be finite and >= 0");
      CMatrix b(1, 1);
      b(0, 0) = Complex(v, 0.0);
      c.g_.push_back(std::move(b));
    }
    return c;
  }

  /// All-zero data for M measurements of L signals.
  static CrossMeasurements zeros(Index M, Index L) {
    CrossMeasurements c;
    c.L_ = L;
    c.g_.assign(static_cast<size_t>(M), CMatrix::Zero(L, L));
    return c;
  }

 private:
  Index L_ = 0;
  MeasurementTensor g_;
};

// ---------------------------------------------------------------------------
// Lifted structure
// ---------------------------------------------------------------------------

struct SupportPattern {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  Index dim() const { return mask.rows(); }
  Index count() const { return mask.count(); }
};

/// Entrywise phase of a lifted matrix, zero off the support.
struct SignMatrix {
  CMatrix entries;
  Index dim() const { return entries.rows(); }
};

/// Unitary basis whose first column is x / ||x||_2.
class EigBasis {
 public:
  const CMatrix& matrix() const { return e_; }
  Index dim() const { return e_.rows(); }
  CVector leading() const { return e_.col(0); }

  /// Wraps a caller-supplied unitary matrix. Its first column must be a
  /// unit-modulus multiple of x / ||x||.
  static EigBasis from_columns(const CMatrix& e, const CVector& x, double tol = kUnitaryTol) {
    if (e.rows() != e.cols() || e.rows() != x.size()) throw DimensionError("EigBasis: dimension mismatch");
    const Index d = e.rows();
    if (max_abs(e.adjoint() * e - CMatrix::Identity(d, d)) > tol) {
      throw NumericalError("EigBasis: matrix is not unitary");
    }
    const double nx = x.norm();
    if (nx == 0.0) throw Error("EigBasis: zero signal");
    const double overlap = std::abs(e.col(0).dot(x / nx));
    if (std::abs(overlap - 1.0) > tol) throw NumericalError("EigBasis: first column is not aligned with x");
    EigBasis b;
    b.e_ = e;
    return b;
  }

 private:
  friend EigBasis build_eigbasis(const CVector& x);
  CMatrix e_;
};

/// X = x x'.
inline HermitianMatrix lift(const CVector& x) {
  if (x.size() == 0) throw DimensionError("lift: empty vector");
  if (!x.allFinite()) throw NumericalError("lift: non-finite entry");
  return HermitianMatrix::symmetrized(x * x.adjoint());
}

/// Householder completion: E = (I - 2 v v'/(v'v)) diag(-phi, 1, ..., 1) with
/// u = x/||x||, phi = u_0/|u_0| (1 when u_0 = 0) and v = u + phi e_1. The
/// first column of E is exactly u; x = e_1 gives the identity.
inline EigBasis build_eigbasis(const CVector& x) {
  const double nx = x.norm();
  if (x.size() == 0 || !(nx > 0.0)) throw Error("build_eigbasis: zero signal");
  const Index d = x.size();
  const CVector u = x / nx;
  const Complex phi = std::abs(u(0)) > 0.0 ? u(0) / std::abs(u(0)) : Complex(1.0, 0.0);
  CVector v = u;
  v(0) += phi;
  CMatrix h = CMatrix::Identity(d, d) - (2.0 / v.squaredNorm()) * (v * v.adjoint());
  h.col(0) *= -phi;
  EigBasis b;
  b.e_ = std::move(h);
  return b;
}

inline double support_threshold(const CMatrix& x, double support_tol) {
  return support_tol * max_abs(x);
}

/// True where |X_ij| exceeds support_tol times the largest entry modulus.
inline SupportPattern support_pattern(const HermitianMatrix& x, double support_tol = kSupportTol) {
  SupportPattern p;
  const double thr = support_threshold(x.matrix(), support_tol);
  p.mask = x.matrix().cwiseAbs().array() > thr;
  if (thr == 0.0) p.mask.setConstant(false);
  return p;
}

inline SignMatrix sign_matrix(const HermitianMatrix& x, double support_tol = kSupportTol) {
  const SupportPattern p = support_pattern(x, support_tol);
  SignMatrix s;
  s.entries = CMatrix::Zero(x.dim(), x.dim());
  for (Index j = 0; j < x.dim(); ++j) {
    for (Index i = 0; i < x.dim(); ++i) {
      if (p.mask(i, j)) s.entries(i, j) = x(i, j) / std::abs(x(i, j));
    }
  }
  return s;
}

/// ||Z off the support||_1 + Re<S, Z on the support>.
inline double g_objective(const CMatrix& z, const SupportPattern& omega, const SignMatrix& s) {
  if (z.rows() != omega.dim() || z.cols() != omega.dim() || s.dim() != omega.dim()) {
    throw DimensionError("g_objective: dimension mismatch");
  }
  double off = 0.0;
  double on = 0.0;
  for (Index j = 0; j < z.cols(); ++j) {
    for (Index i = 0; i < z.rows(); ++i) {
      if (omega.mask(i, j)) {
        on += s.entries(i, j).real() * z(i, j).real() + s.entries(i, j).imag() * z(i, j).imag();
      } else {
        off += std::abs(z(i, j));
      }
    }
  }
  return off + on;
}

inline double g_objective(const HermitianMatrix& z, const SupportPattern& omega, const SignMatrix& s) {
  return g_objective(z.matrix(), omega, s);
}

/// Tr(Z) + lambda * sum |Z_ij|.
inline double f_lambda(const HermitianMatrix& z, double lambda) {
  if (!(lambda >= 0.0)) throw Error("f_lambda: lambda must be >= 0");
  return z.trace() + lambda * z.l1_norm();
}

// ---------------------------------------------------------------------------
// Measurement operators
// ---------------------------------------------------------------------------

/// y_{i,l} = exp(j theta_i) m_i' x_l, theta_i = 0 when the ensemble has no phases.
inline MeasurementTable simulate_measurements(const SignalSet& sig, const MeasurementEnsemble& ens) {
  if (sig.N != ens.N) throw DimensionError("simulate_measurements: signal and ensemble dimension differ");
  MeasurementTable t;
  t.values = CMatrix::Zero(ens.M(), sig.L);
  for (Index i = 0; i < ens.M(); ++i) {
    const Complex rot = ens.phases ? std::polar(1.0, (*ens.phases)[static_cast<size_t>(i)])
                                   : Complex(1.0, 0.0);
    for (Index l = 0; l < sig.L; ++l) {
      t.values(i, l) = rot * ens.vectors[static_cast<size_t>(i)].dot(sig.signals[static_cast<size_t>(l)]);
    }
  }
  return t;
}

inline CrossMeasurements cross_measure(const MeasurementTable& y) { return CrossMeasurements::from_table(y); }

/// out[i](k, l) = m_i' Z_{k,l} m_i over the N x N blocks of Z.
inline MeasurementTensor measure_lifted(const CMatrix& z, const MeasurementEnsemble& ens, Index L) {
  if (L <= 0 || z.rows() != z.cols() || z.rows() % L != 0 || z.rows() / L != ens.N) {
    throw DimensionError("measure_lifted: matrix dimension is not L * N");
  }
  const Index n = ens.N;
  MeasurementTensor out;
  out.reserve(ens.vectors.size());
  for (const auto& m : ens.vectors) {
    CMatrix b(L, L);
    for (Index k = 0; k < L; ++k) {
      for (Index l = 0; l < L; ++l) b(k, l) = m.dot(z.block(k * n, l * n, n, n) * m);
    }
    out.push_back(std::move(b));
  }
  return out;
}

inline MeasurementTensor measure_lifted(const HermitianMatrix& z, const MeasurementEnsemble& ens, Index L) {
  return measure_lifted(z.matrix(), ens, L);
}

/// Adjoint of measure_lifted under Re<.,.>: sum_i,k,l w[i](k,l) * (m_i m_i' in block (k,l)).
inline CMatrix measure_lifted_adjoint(const MeasurementTensor& w, const MeasurementEnsemble& ens, Index L) {
  if (static_cast<Index>(w.size()) != ens.M()) throw DimensionError("measure_lifted_adjoint: M mismatch");
  const Index n = ens.N;
  CMatrix z = CMatrix::Zero(L * n, L * n);
  for (size_t i = 0; i < w.size(); ++i) {
    if (w[i].rows() != L || w[i].cols() != L) throw DimensionError("measure_lifted_adjoint: block size");
    const CMatrix mm = ens.vectors[i] * ens.vectors[i].adjoint();
    for (Index k = 0; k < L; ++k) {
      for (Index l = 0; l < L; ++l) z.block(k * n, l * n, n, n) += w[i](k, l) * mm;
    }
  }
  return z;
}

/// Whether Dhat = E [a b'; b C] E' lies in the exact structure set: a real,
/// C PSD and b in range(C), each within rank_tol.
inline bool sd_membership(const HermitianMatrix& dhat, const EigBasis& e, double rank_tol) {
  if (dhat.dim() != e.dim()) throw DimensionError("sd_membership: dimension mismatch");
  const Index d = dhat.dim();
  const CMatrix w = e.matrix().adjoint() * dhat.matrix() * e.matrix();
  if (std::abs(w(0, 0).imag()) > rank_tol) return false;
  if (d == 1) return true;
  const CVector b = w.col(0).tail(d - 1);
  const CMatrix c = 0.5 * (w.bottomRightCorner(d - 1, d - 1) + w.bottomRightCorner(d - 1, d - 1).adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(c);
  const RVector& ev = es.eigenvalues();
  if (ev(0) < -rank_tol) return false;
  // b at rounding level of the whole matrix counts as zero
  const double bn = b.norm();
  if (bn <= rank_tol * w.norm()) return true;
  const double cnorm = std::max(std::abs(ev(0)), std::abs(ev(d - 2)));
  CVector residual = b;
  for (Index k = 0; k < d - 1; ++k) {
    if (ev(k) > rank_tol * cnorm) {
      const CVector q = es.eigenvectors().col(k);
      residual -= q * q.dot(b);
    }
  }
  return residual.norm() <= rank_tol * std::max(bn, w.norm());
}

}  // namespace pcal

#endif  // PCAL_LIFTING_HPP
