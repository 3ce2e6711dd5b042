#ifndef PCAL_RECOVERY_HPP
#define PCAL_RECOVERY_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "admm.hpp"
#include "affine.hpp"
#include "lifting.hpp"
#include "types.hpp"

namespace pcal {

/// Recovered signals count as exact below this recovery_error.
inline constexpr double kSuccessThreshold = 1e-3;

struct RecoveryResult {
  HermitianMatrix xhat_lifted;
  CVector xhat;
  /// ||Xhat - X||_F / ||X||_F, NaN without ground truth.
  double relative_matrix_error = std::numeric_limits<double>::quiet_NaN();
  /// recovery_error of xhat against the ground truth, NaN without it.
  double signal_error = std::numeric_limits<double>::quiet_NaN();
  /// mu_2 / mu_1 of Xhat.
  double rank_gap = 0.0;
  SolveReport report;

  bool succeeded() const { return signal_error < kSuccessThreshold; }
};

/// Leading eigenpair scaled to sqrt(max(mu_1, 0)) v_1, with the
/// largest-modulus entry rotated to the positive real axis.
inline CVector extract_signals(const HermitianMatrix& xhat) {
  const Index d = xhat.dim();
  if (d == 0) return CVector();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(xhat.matrix());
  const double mu = es.eigenvalues()(d - 1);
  CVector v = es.eigenvectors().col(d - 1) * std::sqrt(std::max(mu, 0.0));
  Index imax = 0;
  v.cwiseAbs().maxCoeff(&imax);
  const double a = std::abs(v(imax));
  if (a > 0.0) {
    v *= std::conj(v(imax)) / a;
    v(imax) = a;
  }
  return v;
}

inline std::vector<CVector> split_signals(const CVector& joint, Index N, Index L) {
  if (joint.size() != N * L) throw DimensionError("split_signals: length is not N * L");
  std::vector<CVector> out;
  for (Index l = 0; l < L; ++l) out.emplace_back(joint.segment(l * N, N));
  return out;
}

/// min over phi of ||x - exp(j phi) xhat|| / ||x||.
inline double recovery_error(const CVector& x_true, const CVector& x_hat) {
  if (x_true.size() != x_hat.size()) throw DimensionError("recovery_error: length mismatch");
  const double nx = x_true.norm();
  if (!(nx > 0.0)) throw Error("recovery_error: zero reference signal");
  const Complex ip = x_hat.dot(x_true);
  const Complex rot = std::abs(ip) > 0.0 ? ip / std::abs(ip) : Complex(1.0, 0.0);
  return (x_true - rot * x_hat).norm() / nx;
}

namespace detail {

inline RecoveryResult finish_recovery(SolveResult res, const std::optional<CVector>& truth) {
  RecoveryResult out;
  out.xhat_lifted = std::move(res.solution);
  out.report = std::move(res.report);
  out.xhat = extract_signals(out.xhat_lifted);
  if (out.xhat_lifted.dim() > 1) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(out.xhat_lifted.matrix(), Eigen::EigenvaluesOnly);
    const Index d = out.xhat_lifted.dim();
    const double mu1 = es.eigenvalues()(d - 1);
    out.rank_gap = mu1 > 0.0 ? std::max(es.eigenvalues()(d - 2), 0.0) / mu1 : 0.0;
  }
  if (truth) {
    const HermitianMatrix x = lift(*truth);
    out.relative_matrix_error = (out.xhat_lifted - x).frobenius_norm() / x.frobenius_norm();
    out.signal_error = recovery_error(*truth, out.xhat);
  }
  return out;
}

}  // namespace detail

/// min Tr(Z) + lambda ||Z||_1 over PSD Z matching every cross measurement.
inline RecoveryResult solve_phasecal(const CrossMeasurements& g, const MeasurementEnsemble& ens, double lambda,
                                     const SolveConfig& config, const std::optional<CVector>& truth = std::nullopt) {
  if (!(lambda >= 0.0)) throw Error("solve_phasecal: lambda must be >= 0");
  if (g.M() != ens.M()) throw DimensionError("solve_phasecal: measurement count mismatch");
  for (Index i = 0; i < g.M(); ++i) {
    if (max_abs(g.block(i) - g.block(i).adjoint()) > 0.0) throw Error("solve_phasecal: data is not conjugate symmetric");
  }
  if (truth && truth->size() != g.L() * ens.N) throw DimensionError("solve_phasecal: ground truth length");
  const AffineConstraintSet affine = lifted_measurement_constraints(ens, g, std::nullopt, config.field);
  return detail::finish_recovery(admm_solve(L1TraceObjective{lambda}, affine, PsdCone{}, config), truth);
}

inline RecoveryResult solve_cprl(const std::vector<double>& magnitudes, const MeasurementEnsemble& ens, double lambda,
                                 const SolveConfig& config, const std::optional<CVector>& truth = std::nullopt) {
  for (double v : magnitudes) {
    if (!(v >= 0.0)) throw Error("solve_cprl: magnitudes must be >= 0");
  }
  return solve_phasecal(CrossMeasurements::from_magnitudes(magnitudes), ens, lambda, config, truth);
}

inline RecoveryResult solve_phaselift(const std::vector<double>& magnitudes, const MeasurementEnsemble& ens,
                                      const SolveConfig& config, const std::optional<CVector>& truth = std::nullopt) {
  return solve_cprl(magnitudes, ens, 0.0, config, truth);
}

/// |y_i|^2 of a single signal, the phaseless data.
inline std::vector<double> squared_magnitudes(const MeasurementTable& y) {
  if (y.values.cols() != 1) throw DimensionError("squared_magnitudes: requires a single signal");
  std::vector<double> out;
  for (Index i = 0; i < y.values.rows(); ++i) out.push_back(std::norm(y.values(i, 0)));
  return out;
}

}  // namespace pcal

#endif  // PCAL_RECOVERY_HPP
