#ifndef PCAL_ADMM_HPP
#define PCAL_ADMM_HPP

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "affine.hpp"
#include "lifting.hpp"
#include "prox.hpp"
#include "types.hpp"

namespace pcal {

enum class SolveStatus { converged, early_negative, infeasible, unbounded, iter_cap };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::early_negative: return "early-negative";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    case SolveStatus::iter_cap: return "iter-cap";
  }
  return "unknown";
}

inline SolveStatus solve_status_from_string(const std::string& s) {
  for (auto st : {SolveStatus::converged, SolveStatus::early_negative, SolveStatus::infeasible,
                  SolveStatus::unbounded, SolveStatus::iter_cap}) {
    if (s == to_string(st)) return st;
  }
  throw Error("unknown solve status '" + s + "'");
}

struct SolveConfig {
  double step = 1.0;
  double tol_primal = 1e-7;
  double tol_dual = 1e-7;
  int max_iters = 50000;
  /// Objective level at which a (nearly) feasible iterate stops the solve.
  /// Negative infinity disables the early exit.
  double early_negative_threshold = -1e-4;
  double feas_tol_for_early_exit = 1e-6;
  int infeasibility_stall_window = 500;
  bool adaptive_step = true;
  int balance_interval = 20;
  int history_stride = 10;
  Field field = Field::complex;

  void validate() const {
    if (!(step > 0.0)) throw Error("SolveConfig: step must be positive");
    if (!(tol_primal > 0.0) || !(tol_dual > 0.0) || !(feas_tol_for_early_exit > 0.0)) {
      throw Error("SolveConfig: tolerances must be positive");
    }
    if (max_iters < 1) throw Error("SolveConfig: max_iters must be >= 1");
    if (!(early_negative_threshold < 0.0)) throw Error("SolveConfig: early_negative_threshold must be negative");
    if (infeasibility_stall_window < 1 || balance_interval < 1 || history_stride < 1) {
      throw Error("SolveConfig: window sizes must be >= 1");
    }
  }
};

struct SolveReport {
  SolveStatus status = SolveStatus::iter_cap;
  int iters = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  /// Distance of the returned point to the affine set, relative to max(1, ||Z||).
  double constraint_violation = 0.0;
  double final_step = 0.0;
  std::vector<double> objective_history;
  std::vector<double> primal_history;
};

// Objective pieces with closed-form proximal maps.
struct L1TraceObjective {
  double lambda = 0.0;
};
struct GObjective {
  SupportPattern omega;
  SignMatrix sign;
};
struct ZeroObjective {};
using ProxSpec = std::variant<L1TraceObjective, GObjective, ZeroObjective>;

inline double objective_value(const ProxSpec& spec, const HermitianMatrix& z) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, L1TraceObjective>) {
          return f_lambda(z, o.lambda);
        } else if constexpr (std::is_same_v<T, GObjective>) {
          return g_objective(z, o.omega, o.sign);
        } else {
          return 0.0;
        }
      },
      spec);
}

inline HermitianMatrix apply_prox(const ProxSpec& spec, const HermitianMatrix& z, double t) {
  return std::visit(
      [&](const auto& o) -> HermitianMatrix {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, L1TraceObjective>) {
          return prox_l1_trace(z, t, o.lambda);
        } else if constexpr (std::is_same_v<T, GObjective>) {
          return prox_g(z, t, o.omega, o.sign);
        } else {
          return z;
        }
      },
      spec);
}

// Projectable convex sets.
struct PsdCone {};
struct StructureSet {
  EigBasis basis;
  /// Frobenius-ball normalization applied after the structure projection.
  std::optional<double> ball_radius;
  /// Range allowed for the trailing block, see prox_structure.
  std::optional<CMatrix> face;
};
struct RangeRestrictedSet {
  EigBasis basis;
  double shift = 1.0;
  std::optional<CMatrix> face;
};
using ConeSet = std::variant<PsdCone, StructureSet, RangeRestrictedSet>;

inline HermitianMatrix project_cone(const ConeSet& cone, const HermitianMatrix& z) {
  return std::visit(
      [&](const auto& c) -> HermitianMatrix {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, PsdCone>) {
          return prox_psd(z);
        } else if constexpr (std::is_same_v<T, StructureSet>) {
          HermitianMatrix p = prox_structure(z, c.basis, c.face);
          return c.ball_radius ? project_ball(p, *c.ball_radius) : p;
        } else {
          return prox_range_restricted(z, c.basis, c.shift, c.face);
        }
      },
      cone);
}

struct SolveResult {
  HermitianMatrix solution;
  SolveReport report;
};

namespace detail {

inline HermitianMatrix real_part(const HermitianMatrix& z) {
  return HermitianMatrix::symmetrized(z.matrix().real().cast<Complex>());
}

}  // namespace detail

/// Three-block consensus ADMM for min h(Z) s.t. Z in the affine set and in
/// the cone set. Each block keeps its own copy and scaled dual; the
/// consensus is the average of copy plus dual. The returned matrix is the
/// cone-block copy, which lies exactly in the cone set.
inline SolveResult admm_solve(const ProxSpec& objective, const AffineConstraintSet& affine, const ConeSet& cone,
                              const SolveConfig& config,
                              const std::optional<HermitianMatrix>& warm_start = std::nullopt) {
  config.validate();
  const Index d = affine.dim();
  const bool real_field = config.field == Field::real;
  auto fieldwise = [&](HermitianMatrix z) { return real_field ? detail::real_part(z) : z; };

  SolveResult result;
  SolveReport& rep = result.report;

  HermitianMatrix zbar = warm_start ? *warm_start : HermitianMatrix(d);
  if (zbar.dim() != d) throw DimensionError("admm_solve: warm start dimension mismatch");
  std::array<HermitianMatrix, 3> z{zbar, zbar, zbar};
  std::array<HermitianMatrix, 3> u{HermitianMatrix(d), HermitianMatrix(d), HermitianMatrix(d)};
  double rho = config.step;

  if (!affine.consistent()) {
    rep.status = SolveStatus::infeasible;
    rep.constraint_violation = affine.distance(zbar) / std::max(1.0, zbar.frobenius_norm());
    rep.objective = objective_value(objective, zbar);
    rep.final_step = rho;
    result.solution = zbar;
    return result;
  }

  const double obj0 = objective_value(objective, zbar);
  const double unbounded_level = -1e6 * (1.0 + std::abs(obj0));
  const int window = config.infeasibility_stall_window;
  CMatrix y_window_start = CMatrix::Zero(3 * d, d);
  double path_length = 0.0;
  double r_window_start = kInf;
  double displacement_prev = kInf;
  int drifting_windows = 0;
  int balance_interval = config.balance_interval;
  int next_balance = balance_interval;

  auto stacked_duals = [&]() {
    CMatrix y(3 * d, d);
    for (int j = 0; j < 3; ++j) y.block(j * d, 0, d, d) = rho * u[j].matrix();
    return y;
  };

  for (int it = 1; it <= config.max_iters; ++it) {
    const double t = 1.0 / rho;
    z[0] = fieldwise(apply_prox(objective, zbar - u[0], t));
    z[1] = affine.project(zbar - u[1]);
    z[2] = fieldwise(project_cone(cone, zbar - u[2]));

    HermitianMatrix znew = (z[0] + u[0] + z[1] + u[1] + z[2] + u[2]) * (1.0 / 3.0);
    double r2 = 0.0;
    double zmax = znew.frobenius_norm();
    double u2 = 0.0;
    for (int j = 0; j < 3; ++j) {
      const HermitianMatrix diff = z[j] - znew;
      r2 += diff.frobenius_norm() * diff.frobenius_norm();
      u[j] = u[j] + diff;
      zmax = std::max(zmax, z[j].frobenius_norm());
      u2 += u[j].frobenius_norm() * u[j].frobenius_norm();
    }
    const double r = std::sqrt(r2);
    const double s = rho * std::sqrt(3.0) * (znew - zbar).frobenius_norm();
    zbar = std::move(znew);
    if (!all_finite(zbar.matrix())) {
      throw NumericalError("admm_solve: non-finite iterate at iteration " + std::to_string(it));
    }

    const double r_rel = r / std::max(1.0, zmax);
    const double s_rel = s / std::max(1.0, rho * std::sqrt(u2));
    const double obj = objective_value(objective, z[2]);
    const double viol = (z[2] - z[1]).frobenius_norm() / std::max(1.0, z[2].frobenius_norm());
    path_length += rho * r;

    rep.iters = it;
    rep.primal_residual = r_rel;
    rep.dual_residual = s_rel;
    rep.objective = obj;
    rep.constraint_violation = viol;
    if (it % config.history_stride == 0) {
      rep.objective_history.push_back(obj);
      rep.primal_history.push_back(r_rel);
    }

    if (obj <= config.early_negative_threshold && viol <= config.feas_tol_for_early_exit) {
      rep.status = SolveStatus::early_negative;
      break;
    }
    if (obj < unbounded_level && viol <= config.feas_tol_for_early_exit) {
      rep.status = SolveStatus::unbounded;
      break;
    }
    if (r_rel <= config.tol_primal && s_rel <= config.tol_dual) {
      rep.status = SolveStatus::converged;
      break;
    }

    // Infeasibility: the residual settles at a positive level while the
    // unscaled duals keep drifting in one direction at a constant rate.
    if (it % window == 0) {
      const CMatrix y = stacked_duals();
      const double displacement = (y - y_window_start).norm();
      const bool stalled = r_rel > 100.0 * config.tol_primal &&
                           std::abs(r_rel - r_window_start) <= 0.01 * r_window_start;
      const bool drifting = path_length > 0.0 && displacement >= 0.9 * path_length &&
                            displacement >= 0.9 * displacement_prev;
      drifting_windows = stalled && drifting ? drifting_windows + 1 : 0;
      if (drifting_windows >= 3) {
        rep.status = SolveStatus::infeasible;
        break;
      }
      y_window_start = y;
      path_length = 0.0;
      r_window_start = r_rel;
      displacement_prev = displacement;
    }

    // Residual balancing. Each change stretches the interval by half so the
    // step settles; unbounded switching makes the iterates cycle.
    if (config.adaptive_step && it == next_balance) {
      double factor = 1.0;
      if (r_rel > 10.0 * s_rel && rho < 1e6) factor = 2.0;
      if (s_rel > 10.0 * r_rel && rho > 1e-6) factor = 0.5;
      if (factor != 1.0) {
        rho *= factor;
        for (auto& uj : u) uj = uj * (1.0 / factor);
        balance_interval += (balance_interval + 1) / 2;
      }
      next_balance = it + balance_interval;
    }
  }
  rep.final_step = rho;
  result.solution = z[2];
  return result;
}

}  // namespace pcal

#endif  // PCAL_ADMM_HPP
