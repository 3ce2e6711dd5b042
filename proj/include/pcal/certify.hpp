#ifndef PCAL_CERTIFY_HPP
#define PCAL_CERTIFY_HPP

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

#include "admm.hpp"
#include "affine.hpp"
#include "lifting.hpp"
#include "types.hpp"

namespace pcal {

enum class GStatus { finite, unbounded_below, infeasible, not_computed };

inline const char* to_string(GStatus s) {
  switch (s) {
    case GStatus::finite: return "finite";
    case GStatus::unbounded_below: return "unbounded-below";
    case GStatus::infeasible: return "infeasible";
    case GStatus::not_computed: return "not-computed";
  }
  return "unknown";
}

/// Optimal value of a relaxed direction program, or why there is none.
struct GValue {
  GStatus status = GStatus::not_computed;
  double value = std::numeric_limits<double>::quiet_NaN();

  static GValue finite(double v) { return {GStatus::finite, v}; }
  static GValue unbounded_below() { return {GStatus::unbounded_below, -kInf}; }
  static GValue infeasible() { return {GStatus::infeasible, std::numeric_limits<double>::quiet_NaN()}; }
  bool is_finite() const { return status == GStatus::finite; }
};

/// Settings for the three relaxed solves.
struct CertifyOptions {
  SolveConfig solver{};
  /// G values within [-eps_g, eps_g] count as zero.
  double eps_g = 1e-6;
  /// rank_tol handed to sd_membership for the tightness flags.
  double membership_tol = 1e-8;
  /// When a relaxed minimizer lies outside the exact structure set, look for
  /// a point of the range-restricted subset whose G is within
  /// tightening_tol * max(1, |G|) of the relaxed optimum.
  bool tighten = true;
  double tightening_tol = 1e-4;
  double tightening_probe_shift = 100.0;
  double tightening_max_shift = 1e6;
  /// A trace-zero minimizer with |G| <= eps_g but Frobenius norm at least
  /// this large is a nonzero null direction and blocks recovery.
  double degenerate_norm = 1e-3;
  /// Confine the trailing block to the face forced by the measurements
  /// (forced_face). Same optimum, much faster ADMM convergence for L >= 2.
  bool reduce_face = true;
  /// Replaces the Householder completion when set.
  std::optional<EigBasis> basis;
  /// Solves over the range-restricted subset {E'ZE + shift e1 e1' PSD}
  /// instead of the relaxed structure set.
  std::optional<double> range_restriction_shift;
};

struct DpResult {
  HermitianMatrix solution;
  SolveReport report;
  GValue g;
};

/// Everything the certification needs from the ground truth.
struct LiftedTruth {
  HermitianMatrix x;
  SupportPattern omega;
  SignMatrix sign;
  EigBasis basis;

  static LiftedTruth from(const SignalSet& sig, const std::optional<EigBasis>& basis = std::nullopt) {
    if (!(sig.joint.norm() > 0.0)) throw Error("certification: zero signal");
    LiftedTruth t{lift(sig.joint), {}, {}, basis ? *basis : build_eigbasis(sig.joint)};
    if (t.basis.dim() != t.x.dim()) throw DimensionError("certification: basis dimension mismatch");
    t.omega = support_pattern(t.x);
    t.sign = sign_matrix(t.x);
    return t;
  }
};

/// Range left to the trailing block C of E'ZE on the measurement nullspace,
/// as orthonormal columns in the coordinates of E's trailing columns;
/// nullopt when nothing is forced (always for L = 1).
///
/// With P_i = I_L (x) m_i every point has P_i' Z P_i = 0. Writing Z in the
/// basis E and taking v orthogonal to a_i = P_i' x kills all terms but
/// v' Q_i' C Q_i v with Q_i = U' P_i, so C Q_i v = 0 for PSD C. Each such
/// vector is removed from the range of C; the feasible set is unchanged.
inline std::optional<CMatrix> forced_face(const MeasurementEnsemble& ens, const EigBasis& e, Index L,
                                          double rank_tol = 1e-9) {
  const Index n = ens.N, d = e.dim();
  if (L < 2 || d < 2 || ens.M() == 0) return std::nullopt;
  if (d != L * n) throw DimensionError("forced_face: basis dimension is not L * N");
  const CMatrix u = e.matrix().rightCols(d - 1);
  const CVector x = e.leading();
  CMatrix killed(d - 1, ens.M() * L);
  Index cols = 0;
  for (Index i = 0; i < ens.M(); ++i) {
    const CVector& m = ens.vectors[static_cast<size_t>(i)];
    CMatrix p = CMatrix::Zero(d, L);
    for (Index k = 0; k < L; ++k) p.block(k * n, k, n, 1) = m;
    const CVector a = p.adjoint() * x;
    // Orthogonal complement of a in C^L; all of C^L when a vanishes.
    CMatrix perp;
    if (a.norm() <= 1e-12 * m.norm()) {
      perp = CMatrix::Identity(L, L);
    } else {
      Eigen::HouseholderQR<CMatrix> qr(a);
      perp = (qr.householderQ() * CMatrix::Identity(L, L)).rightCols(L - 1);
    }
    const CMatrix q = u.adjoint() * p * perp;
    for (Index c = 0; c < q.cols(); ++c) {
      const double nq = q.col(c).norm();
      if (nq > 0.0) killed.col(cols++) = q.col(c) / nq;
    }
  }
  if (cols == 0) return std::nullopt;
  Eigen::JacobiSVD<CMatrix> svd(killed.leftCols(cols), Eigen::ComputeFullU);
  const RVector& sv = svd.singularValues();
  Index rank = 0;
  for (Index k = 0; k < sv.size(); ++k) rank += sv(k) > rank_tol * sv(0);
  return CMatrix(svd.matrixU().rightCols(d - 1 - rank));
}

/// Minimizes G over {measurement rows = 0, Tr Z = p, Z in the relaxed
/// structure set}; p = 0 adds ||Z||_F <= 1.
inline DpResult solve_dp(const SignalSet& sig, const MeasurementEnsemble& ens, int p, const SolveConfig& config,
                         const CertifyOptions& opts = {}) {
  if (p < -1 || p > 1) throw Error("solve_dp: p must be -1, 0 or 1");
  if (sig.N != ens.N) throw DimensionError("solve_dp: signal and ensemble dimension differ");
  const LiftedTruth truth = LiftedTruth::from(sig, opts.basis);
  const AffineConstraintSet affine = nullspace_constraints(ens, sig.L, static_cast<double>(p), config.field);
  const std::optional<CMatrix> face = opts.reduce_face ? forced_face(ens, truth.basis, sig.L) : std::nullopt;
  ConeSet cone = StructureSet{truth.basis, p == 0 ? std::optional<double>(1.0) : std::nullopt, face};
  if (opts.range_restriction_shift) {
    if (p == 0) throw Error("solve_dp: the range-restricted set is only defined for p = +-1");
    cone = RangeRestrictedSet{truth.basis, *opts.range_restriction_shift, face};
  }
  SolveConfig cfg = config;
  if (p == 1) cfg.early_negative_threshold = -kInf;

  SolveResult res = admm_solve(GObjective{truth.omega, truth.sign}, affine, cone, cfg);
  DpResult out{std::move(res.solution), std::move(res.report), {}};
  switch (out.report.status) {
    case SolveStatus::early_negative:
    case SolveStatus::unbounded: out.g = GValue::unbounded_below(); break;
    case SolveStatus::infeasible: out.g = GValue::infeasible(); break;
    default: out.g = GValue::finite(out.report.objective); break;
  }
  return out;
}

struct LambdaVerdict {
  bool recovery = false;
  double lambda_low = 0.0;
  double lambda_up = kInf;
  GValue g0;
  GValue gm1;
  GValue gp1;
  /// Indexed by p + 1, i.e. {p = -1, p = 0, p = 1}.
  std::array<bool, 3> tight{false, false, false};
  std::array<std::optional<SolveReport>, 3> reports;
  /// G(restricted point) - G(relaxed minimizer) when a tightening solve ran.
  std::array<std::optional<double>, 3> tightening_gap;
  bool degenerate_p0 = false;

  bool all_tight() const { return tight[0] && tight[1] && tight[2]; }
  int iters_total() const {
    int n = 0;
    for (const auto& r : reports) n += r ? r->iters : 0;
    return n;
  }
};

struct TighteningResult {
  bool tight = false;
  std::optional<double> gap;
  HermitianMatrix solution;
  int iters = 0;
};

/// Decides whether the relaxed optimum of the p = +-1 program is attained,
/// within tolerance, inside the exact structure set. The relaxed minimizer
/// itself is tested first; otherwise the range-restricted program is solved
/// at a probe shift, the O(1/shift) gap is extrapolated to the shift that
/// meets the tolerance, and that solve's point is tested.
inline TighteningResult tighten_dp(const SignalSet& sig, const MeasurementEnsemble& ens, int p, const DpResult& relaxed,
                                   const CertifyOptions& opts) {
  TighteningResult out;
  out.solution = relaxed.solution;
  if (relaxed.g.status == GStatus::infeasible) {
    out.tight = true;
    return out;
  }
  const EigBasis& basis = *opts.basis;
  if (sd_membership(relaxed.solution, basis, opts.membership_tol)) {
    out.tight = true;
    return out;
  }
  if (!opts.tighten || !relaxed.g.is_finite() || p == 0) return out;

  const double g = relaxed.g.value;
  const double allowed = opts.tightening_tol * std::max(1.0, std::abs(g));
  CertifyOptions restricted = opts;
  SolveConfig cfg = opts.solver;
  cfg.early_negative_threshold = -kInf;
  auto attempt = [&](double shift) -> std::optional<DpResult> {
    restricted.range_restriction_shift = shift;
    DpResult r = solve_dp(sig, ens, p, cfg, restricted);
    out.iters += r.report.iters;
    if (!r.g.is_finite() || r.report.status != SolveStatus::converged) return std::nullopt;
    return r;
  };

  double shift = opts.tightening_probe_shift;
  for (int round = 0; round < 2; ++round) {
    const std::optional<DpResult> r = attempt(shift);
    if (!r) return out;
    const double gap = r->g.value - g;
    out.gap = gap;
    if (gap <= allowed && sd_membership(r->solution, basis, opts.membership_tol)) {
      out.tight = true;
      out.solution = r->solution;
      return out;
    }
    if (gap <= 0.0 || shift >= opts.tightening_max_shift) return out;
    shift = std::min(opts.tightening_max_shift, 2.0 * shift * gap / allowed);
  }
  return out;
}

/// Recoverability and the admissible lambda range from the three relaxed
/// solves, in the order p = 0, -1, 1 with early return on failure.
inline LambdaVerdict pcal_lambda(const SignalSet& sig, const MeasurementEnsemble& ens, const CertifyOptions& opts = {}) {
  LambdaVerdict v;
  const LiftedTruth truth = LiftedTruth::from(sig, opts.basis);
  CertifyOptions local = opts;
  local.basis = truth.basis;
  local.range_restriction_shift.reset();
  const double eps = opts.eps_g;
  auto record = [&](int p, const DpResult& r) {
    const size_t k = static_cast<size_t>(p + 1);
    v.reports[k] = r.report;
    const TighteningResult t = tighten_dp(sig, ens, p, r, local);
    v.tight[k] = t.tight;
    v.tightening_gap[k] = t.gap;
  };
  auto solve = [&](int p) {
    CertifyOptions o = local;
    if (p != 0) o.range_restriction_shift = opts.range_restriction_shift;
    return solve_dp(sig, ens, p, opts.solver, o);
  };

  if (!opts.range_restriction_shift) {
    DpResult r0 = solve(0);
    // G is positively homogeneous and the p = 0 set is a cone cut by the
    // unit ball, so a negative optimum sits on the sphere. A converged
    // minimizer deep inside the ball therefore means the optimum is G(0) = 0;
    // its own G is rounding noise of order tol * dim. Unconverged runs only
    // get the same treatment inside the dead band.
    const bool inside = r0.solution.frobenius_norm() < opts.degenerate_norm;
    if (r0.g.is_finite() && inside &&
        (r0.report.status == SolveStatus::converged || std::abs(r0.g.value) <= eps)) {
      r0.solution = HermitianMatrix(r0.solution.dim());
      r0.g = GValue::finite(0.0);
    }
    v.g0 = r0.g;
    record(0, r0);
    if (r0.g.status == GStatus::unbounded_below) return v;
    if (r0.g.is_finite()) {
      if (r0.g.value < -eps) return v;
      if (std::abs(r0.g.value) <= eps && r0.solution.frobenius_norm() >= opts.degenerate_norm) {
        v.degenerate_p0 = true;
        return v;
      }
    }
  } else {
    // Range-restricted runs reuse the relaxed trace-zero decision.
    v.tight[1] = true;
  }

  const DpResult rm = solve(-1);
  v.gm1 = rm.g;
  record(-1, rm);
  if (rm.g.status == GStatus::infeasible) {
    v.lambda_low = 0.0;
  } else if (rm.g.status == GStatus::unbounded_below || rm.g.value <= eps) {
    return v;
  } else {
    v.lambda_low = 1.0 / rm.g.value;
  }

  const DpResult rp = solve(1);
  v.gp1 = rp.g;
  record(1, rp);
  if (rp.g.status == GStatus::unbounded_below) {
    v.lambda_up = 0.0;
  } else if (rp.g.is_finite() && rp.g.value < -eps) {
    v.lambda_up = -1.0 / rp.g.value;
  }
  v.recovery = v.lambda_low < v.lambda_up;
  return v;
}

/// The four conditions for exact recovery at this lambda, read off a verdict.
inline bool lambda_admissible(double lambda, const LambdaVerdict& v) {
  if (!v.recovery) return false;
  const bool c1 = !std::isfinite(v.lambda_up) || lambda < v.lambda_up;
  const bool m1_vacuous = v.gm1.status == GStatus::infeasible;
  const bool c2 = m1_vacuous || (v.gm1.is_finite() && v.gm1.value > 0.0);
  const bool c3 = m1_vacuous || lambda > v.lambda_low;
  const bool c4 = !v.degenerate_p0 && v.g0.status != GStatus::unbounded_below &&
                  v.g0.status != GStatus::not_computed;
  return c1 && c2 && c3 && c4;
}

/// Reference interval (sqrt(K) ||x||_1 + 1, N^2 / 4) for a single real
/// signal normalized to unit norm.
inline std::pair<double, double> li_reference_bounds(const SignalSet& sig) {
  if (sig.L != 1) throw Error("li_reference_bounds: requires a single signal");
  const CVector& x = sig.signals.front();
  if (x.imag().cwiseAbs().maxCoeff() != 0.0) throw Error("li_reference_bounds: requires a real-valued signal");
  const double nx = x.norm();
  if (!(nx > 0.0)) throw Error("li_reference_bounds: zero signal");
  const double l1 = x.real().cwiseAbs().sum() / nx;
  const double n = static_cast<double>(sig.N);
  return {std::sqrt(static_cast<double>(sig.K)) * l1 + 1.0, n * n / 4.0};
}

}  // namespace pcal

#endif  // PCAL_CERTIFY_HPP
