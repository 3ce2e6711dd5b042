#ifndef PCAL_SERIALIZE_HPP
#define PCAL_SERIALIZE_HPP

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "certify.hpp"
#include "format.hpp"
#include "instance.hpp"
#include "recovery.hpp"

namespace pcal {

using Json = nlohmann::json;

inline constexpr int kInstanceFormatVersion = 1;

namespace detail {

inline Json complex_to_json(const CVector& v) {
  std::vector<double> re(static_cast<size_t>(v.size())), im(static_cast<size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) {
    re[static_cast<size_t>(i)] = v(i).real();
    im[static_cast<size_t>(i)] = v(i).imag();
  }
  return Json{{"real", re}, {"imag", im}};
}

inline CVector complex_from_json(const Json& j) {
  const auto re = j.at("real").get<std::vector<double>>();
  const auto im = j.at("imag").get<std::vector<double>>();
  if (re.size() != im.size()) throw Error("complex vector: real and imag lengths differ");
  CVector v(static_cast<Index>(re.size()));
  for (size_t i = 0; i < re.size(); ++i) v(static_cast<Index>(i)) = Complex(re[i], im[i]);
  return v;
}

/// Reals do not survive JSON as numbers when non-finite.
inline Json number_or_token(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline double number_from_json(const Json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  return j.get<double>();
}

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw Error(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(where + ": unknown key '" + key + "'");
  }
}

}  // namespace detail

inline Json instance_to_json(const Instance& inst) {
  Json sig = Json::array();
  for (const auto& x : inst.signals.signals) sig.push_back(detail::complex_to_json(x));
  Json ens = Json::array();
  for (const auto& m : inst.ensemble.vectors) ens.push_back(detail::complex_to_json(m));
  Json j;
  j["version"] = kInstanceFormatVersion;
  j["provenance"] = {{"generator", "gen_instance"}, {"seed", inst.seed}, {"N", inst.N}, {"K", inst.K},
                     {"L", inst.L},                 {"M", inst.M},       {"field", to_string(inst.field)}};
  j["N"] = inst.N;
  j["K"] = inst.K;
  j["L"] = inst.L;
  j["M"] = inst.M;
  j["field"] = to_string(inst.field);
  j["signals"] = std::move(sig);
  j["ensemble"] = std::move(ens);
  j["phases"] = inst.ensemble.phases ? *inst.ensemble.phases : std::vector<double>{};
  return j;
}

inline Instance instance_from_json(const Json& j) {
  detail::reject_unknown_keys(j, {"version", "provenance", "N", "K", "L", "M", "field", "signals", "ensemble", "phases"},
                              "instance");
  const int version = j.at("version").get<int>();
  if (version != kInstanceFormatVersion) {
    throw Error("instance: unsupported format version " + std::to_string(version));
  }
  Instance inst;
  inst.N = j.at("N").get<Index>();
  inst.L = j.at("L").get<Index>();
  inst.M = j.at("M").get<Index>();
  inst.field = field_from_string(j.at("field").get<std::string>());
  inst.seed = j.at("provenance").at("seed").get<std::uint64_t>();

  std::vector<CVector> xs;
  for (const auto& s : j.at("signals")) xs.push_back(detail::complex_from_json(s));
  if (static_cast<Index>(xs.size()) != inst.L) throw DimensionError("instance: signal count differs from L");
  inst.signals = SignalSet::from_signals(std::move(xs));
  if (inst.signals.N != inst.N) throw DimensionError("instance: signal length differs from N");
  inst.K = inst.signals.K;
  if (j.contains("K") && j.at("K").get<Index>() != inst.K) throw DimensionError("instance: K disagrees with the signals");

  std::vector<CVector> ms;
  for (const auto& m : j.at("ensemble")) ms.push_back(detail::complex_from_json(m));
  if (static_cast<Index>(ms.size()) != inst.M) throw DimensionError("instance: ensemble size differs from M");
  std::optional<std::vector<double>> phases;
  const auto ph = j.value("phases", std::vector<double>{});
  if (!ph.empty() || inst.M == 0) phases = ph;
  inst.ensemble = MeasurementEnsemble::from_vectors(inst.N, std::move(ms), std::move(phases));
  return inst;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("'" + path + "': " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out.flush()) throw Error("write failed for '" + path + "'");
}

inline Json report_to_json(const SolveReport& r) {
  return {{"status", to_string(r.status)},
          {"iters", r.iters},
          {"primal_residual", detail::number_or_token(r.primal_residual)},
          {"dual_residual", detail::number_or_token(r.dual_residual)},
          {"objective", detail::number_or_token(r.objective)},
          {"constraint_violation", detail::number_or_token(r.constraint_violation)},
          {"final_step", detail::number_or_token(r.final_step)}};
}

inline Json verdict_to_json(const LambdaVerdict& v) {
  auto g = [](const GValue& x) { return format_g(x); };
  Json per_p = Json::object();
  const char* names[3] = {"pm1", "p0", "pp1"};
  for (size_t k = 0; k < 3; ++k) {
    Json e = {{"tight", v.tight[k]}};
    e["report"] = v.reports[k] ? report_to_json(*v.reports[k]) : Json(nullptr);
    e["tightening_gap"] = v.tightening_gap[k] ? detail::number_or_token(*v.tightening_gap[k]) : Json(nullptr);
    per_p[names[k]] = std::move(e);
  }
  return {{"recovery", v.recovery},
          {"lambda_low", detail::number_or_token(v.lambda_low)},
          {"lambda_up", detail::number_or_token(v.lambda_up)},
          {"G0", g(v.g0)},
          {"Gm1", g(v.gm1)},
          {"Gp1", g(v.gp1)},
          {"degenerate_p0", v.degenerate_p0},
          {"iters_total", v.iters_total()},
          {"solves", std::move(per_p)}};
}

inline Json recovery_to_json(const RecoveryResult& r, double lambda, Index N, Index L) {
  Json xs = Json::array();
  for (const auto& x : split_signals(r.xhat, N, L)) xs.push_back(detail::complex_to_json(x));
  return {{"lambda", lambda},
          {"xhat", std::move(xs)},
          {"signal_error", detail::number_or_token(r.signal_error)},
          {"relative_matrix_error", detail::number_or_token(r.relative_matrix_error)},
          {"succeeded", r.succeeded()},
          {"rank_gap", r.rank_gap},
          {"report", report_to_json(r.report)}};
}

/// Overrides any subset of SolveConfig fields from a JSON object.
inline void apply_solver_overrides(SolveConfig& c, const Json& j) {
  detail::reject_unknown_keys(j,
                              {"step", "tol_primal", "tol_dual", "max_iters", "early_negative_threshold",
                               "feas_tol_for_early_exit", "infeasibility_stall_window", "adaptive_step",
                               "balance_interval", "history_stride"},
                              "solver");
  auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = detail::number_from_json(j.at(k));
  };
  num("step", c.step);
  num("tol_primal", c.tol_primal);
  num("tol_dual", c.tol_dual);
  num("early_negative_threshold", c.early_negative_threshold);
  num("feas_tol_for_early_exit", c.feas_tol_for_early_exit);
  if (j.contains("max_iters")) c.max_iters = j.at("max_iters").get<int>();
  if (j.contains("infeasibility_stall_window")) c.infeasibility_stall_window = j.at("infeasibility_stall_window").get<int>();
  if (j.contains("adaptive_step")) c.adaptive_step = j.at("adaptive_step").get<bool>();
  if (j.contains("balance_interval")) c.balance_interval = j.at("balance_interval").get<int>();
  if (j.contains("history_stride")) c.history_stride = j.at("history_stride").get<int>();
  c.validate();
}

inline Json solver_to_json(const SolveConfig& c) {
  return {{"step", c.step},
          {"tol_primal", c.tol_primal},
          {"tol_dual", c.tol_dual},
          {"max_iters", c.max_iters},
          {"early_negative_threshold", detail::number_or_token(c.early_negative_threshold)},
          {"feas_tol_for_early_exit", c.feas_tol_for_early_exit},
          {"infeasibility_stall_window", c.infeasibility_stall_window},
          {"adaptive_step", c.adaptive_step},
          {"balance_interval", c.balance_interval},
          {"history_stride", c.history_stride}};
}

inline void apply_certify_overrides(CertifyOptions& o, const Json& j) {
  detail::reject_unknown_keys(j,
                              {"eps_g", "membership_tol", "degenerate_norm", "tighten", "tightening_tol",
                               "tightening_probe_shift", "tightening_max_shift", "reduce_face"},
                              "certify");
  auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = detail::number_from_json(j.at(k));
  };
  num("eps_g", o.eps_g);
  num("membership_tol", o.membership_tol);
  num("degenerate_norm", o.degenerate_norm);
  num("tightening_tol", o.tightening_tol);
  num("tightening_probe_shift", o.tightening_probe_shift);
  num("tightening_max_shift", o.tightening_max_shift);
  if (j.contains("tighten")) o.tighten = j.at("tighten").get<bool>();
  if (j.contains("reduce_face")) o.reduce_face = j.at("reduce_face").get<bool>();
  if (!(o.eps_g >= 0.0) || !(o.membership_tol > 0.0) || !(o.degenerate_norm > 0.0) || !(o.tightening_tol > 0.0) ||
      !(o.tightening_probe_shift > 0.0) || !(o.tightening_max_shift >= o.tightening_probe_shift)) {
    throw Error("certify: invalid option value");
  }
}

inline Json certify_to_json(const CertifyOptions& o) {
  return {{"eps_g", o.eps_g},
          {"membership_tol", o.membership_tol},
          {"degenerate_norm", o.degenerate_norm},
          {"tighten", o.tighten},
          {"tightening_tol", o.tightening_tol},
          {"tightening_probe_shift", o.tightening_probe_shift},
          {"tightening_max_shift", o.tightening_max_shift},
          {"reduce_face", o.reduce_face}};
}

}  // namespace pcal

#endif  // PCAL_SERIALIZE_HPP
