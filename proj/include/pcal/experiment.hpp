#ifndef PCAL_EXPERIMENT_HPP
#define PCAL_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "certify.hpp"
#include "format.hpp"
#include "instance.hpp"
#include "recovery.hpp"
#include "serialize.hpp"

namespace pcal {

/// How the consistency run picks lambda for a certified-recoverable instance.
/// multiple_of_low: 2 lambda_low whenever that is below lambda_up.
/// mid: geometric mean whenever lambda_up is finite.
enum class LambdaPolicy { mid, multiple_of_low };

inline const char* to_string(LambdaPolicy p) { return p == LambdaPolicy::mid ? "mid" : "multiple-of-low"; }

inline LambdaPolicy lambda_policy_from_string(const std::string& s) {
  if (s == "mid") return LambdaPolicy::mid;
  if (s == "multiple-of-low") return LambdaPolicy::multiple_of_low;
  throw Error("unknown lambda policy '" + s + "' (expected mid or multiple-of-low)");
}

struct OutputPaths {
  std::string csv;
  /// Defaults to csv + ".manifest".
  std::string manifest;
  std::string consistency_csv;
  std::string consistency_summary_csv;
  std::string plot_dir;

  std::string manifest_path() const { return manifest.empty() && !csv.empty() ? csv + ".manifest" : manifest; }
};

struct ExperimentConfig {
  Index N = 16;
  std::vector<Index> L{1, 2};
  std::vector<double> rho{0.05, 0.1, 0.15, 0.2, 0.25};
  std::vector<double> delta{0.6, 1.2};
  int trials = 10;
  std::uint64_t seed = 1;
  Field field = Field::complex;
  /// Used by the certifier.
  SolveConfig solver{};
  /// Used by the direct recovery solves of the consistency run.
  SolveConfig recovery_solver{};
  CertifyOptions certify{};
  LambdaPolicy lambda_policy = LambdaPolicy::multiple_of_low;
  /// Tried for instances the certifier rejects.
  std::vector<double> lambda_grid{0.1, 1.0, 10.0, 100.0};
  /// Off by default so that tables are reproducible byte for byte.
  bool record_wall_time = false;
  OutputPaths output;

  void validate() const {
    if (N < 1) throw Error("config: N must be >= 1");
    if (trials < 0) throw Error("config: trials must be >= 0");
    for (Index l : L) {
      if (l < 1) throw Error("config: every L must be >= 1");
    }
    for (double r : rho) {
      if (!(r > 0.0) || !std::isfinite(r)) throw Error("config: every rho must be positive");
    }
    for (double d : delta) {
      if (!(d >= 0.0) || !std::isfinite(d)) throw Error("config: every delta must be >= 0");
    }
    for (double l : lambda_grid) {
      if (!(l >= 0.0) || !std::isfinite(l)) throw Error("config: lambda_grid entries must be finite and >= 0");
    }
    solver.validate();
    recovery_solver.validate();
  }

  /// Everything that determines the results, i.e. all but the output paths.
  Json to_json(bool with_output = true) const {
    Json j = {{"N", N},
              {"L", L},
              {"rho", rho},
              {"delta", delta},
              {"trials", trials},
              {"seed", seed},
              {"field", to_string(field)},
              {"solver", solver_to_json(solver)},
              {"recovery_solver", solver_to_json(recovery_solver)},
              {"certify", certify_to_json(certify)},
              {"lambda_policy", to_string(lambda_policy)},
              {"lambda_grid", lambda_grid},
              {"record_wall_time", record_wall_time}};
    if (with_output) {
      j["output"] = {{"csv", output.csv},
                     {"manifest", output.manifest},
                     {"consistency_csv", output.consistency_csv},
                     {"consistency_summary_csv", output.consistency_summary_csv},
                     {"plot_dir", output.plot_dir}};
    }
    return j;
  }

  static ExperimentConfig from_json(const Json& j) {
    detail::reject_unknown_keys(j,
                                {"N", "L", "rho", "delta", "trials", "seed", "field", "solver", "recovery_solver",
                                 "certify", "lambda_policy", "lambda_grid", "record_wall_time", "output"},
                                "config");
    ExperimentConfig c;
    if (j.contains("N")) c.N = j.at("N").get<Index>();
    if (j.contains("L")) c.L = j.at("L").get<std::vector<Index>>();
    if (j.contains("rho")) c.rho = j.at("rho").get<std::vector<double>>();
    if (j.contains("delta")) c.delta = j.at("delta").get<std::vector<double>>();
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("field")) c.field = field_from_string(j.at("field").get<std::string>());
    if (j.contains("solver")) apply_solver_overrides(c.solver, j.at("solver"));
    if (j.contains("recovery_solver")) apply_solver_overrides(c.recovery_solver, j.at("recovery_solver"));
    if (j.contains("certify")) apply_certify_overrides(c.certify, j.at("certify"));
    if (j.contains("lambda_policy")) c.lambda_policy = lambda_policy_from_string(j.at("lambda_policy").get<std::string>());
    if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("record_wall_time")) c.record_wall_time = j.at("record_wall_time").get<bool>();
    if (j.contains("output")) {
      const Json& o = j.at("output");
      detail::reject_unknown_keys(o, {"csv", "manifest", "consistency_csv", "consistency_summary_csv", "plot_dir"},
                                  "output");
      c.output.csv = o.value("csv", "");
      c.output.manifest = o.value("manifest", "");
      c.output.consistency_csv = o.value("consistency_csv", "");
      c.output.consistency_summary_csv = o.value("consistency_summary_csv", "");
      c.output.plot_dir = o.value("plot_dir", "");
    }
    c.validate();
    return c;
  }

  std::string fingerprint() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json(false).dump())));
    return buf;
  }

  /// Certifier options with the solver settings and field applied.
  CertifyOptions certify_options() const {
    CertifyOptions o = certify;
    o.solver = solver;
    o.solver.field = field;
    return o;
  }

  SolveConfig recovery_config() const {
    SolveConfig c = recovery_solver;
    c.field = field;
    return c;
  }
};

/// One (N, L, rho, delta) point of the grid.
struct CellKey {
  Index N = 0;
  Index L = 0;
  double rho = 0.0;
  double delta = 0.0;
  Index M = 0;
  Index K = 0;

  bool operator==(const CellKey&) const = default;
};

/// M = round(delta N), K = max(1, round(rho M)).
inline CellKey make_cell(Index N, Index L, double rho, double delta) {
  CellKey c{N, L, rho, delta, 0, 0};
  c.M = static_cast<Index>(std::llround(delta * static_cast<double>(N)));
  c.K = std::max<Index>(1, static_cast<Index>(std::llround(rho * static_cast<double>(c.M))));
  if (c.K > N) {
    throw Error("grid: rho = " + format_double(rho) + ", delta = " + format_double(delta) + " gives K = " +
                std::to_string(c.K) + " > N");
  }
  return c;
}

/// Cells in L-major, then rho, then delta order.
inline std::vector<CellKey> grid_cells(const ExperimentConfig& cfg) {
  std::vector<CellKey> out;
  for (Index l : cfg.L) {
    for (double r : cfg.rho) {
      for (double d : cfg.delta) out.push_back(make_cell(cfg.N, l, r, d));
    }
  }
  return out;
}

/// Instance seed of a trial. Depends on the cell coordinates rather than the
/// grid position, so adding cells to a grid leaves the others unchanged.
inline std::uint64_t trial_seed(std::uint64_t base, const CellKey& c, int trial) {
  std::uint64_t h = mix64(base);
  for (std::uint64_t v : {static_cast<std::uint64_t>(c.N), static_cast<std::uint64_t>(c.L),
                          std::bit_cast<std::uint64_t>(c.rho), std::bit_cast<std::uint64_t>(c.delta),
                          static_cast<std::uint64_t>(trial)}) {
    h = mix64(h ^ v);
  }
  return h;
}

/// One row of the sweep table. Per-solve arrays are indexed by p + 1.
struct TrialRecord {
  CellKey cell;
  int trial = 0;
  std::uint64_t seed = 0;
  bool recovery = false;
  double lambda_low = 0.0;
  double lambda_up = kInf;
  GValue g0;
  GValue gm1;
  GValue gp1;
  std::array<bool, 3> tight{false, false, false};
  std::array<StageStatus, 3> status{};
  int iters_total = 0;
  double wall_ms = 0.0;

  bool aborted() const {
    return std::any_of(status.begin(), status.end(), [](const StageStatus& s) { return s.aborted; });
  }
  bool all_tight() const { return tight[0] && tight[1] && tight[2]; }
};

inline bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

inline bool operator==(const GValue& a, const GValue& b) { return a.status == b.status && same_value(a.value, b.value); }

inline bool operator==(const TrialRecord& a, const TrialRecord& b) {
  return a.cell == b.cell && a.trial == b.trial && a.seed == b.seed && a.recovery == b.recovery &&
         same_value(a.lambda_low, b.lambda_low) && same_value(a.lambda_up, b.lambda_up) && a.g0 == b.g0 &&
         a.gm1 == b.gm1 && a.gp1 == b.gp1 && a.tight == b.tight && a.status == b.status &&
         a.iters_total == b.iters_total && same_value(a.wall_ms, b.wall_ms);
}

inline TrialRecord record_from_verdict(const CellKey& cell, int trial, std::uint64_t seed, const LambdaVerdict& v) {
  TrialRecord r;
  r.cell = cell;
  r.trial = trial;
  r.seed = seed;
  r.recovery = v.recovery;
  r.lambda_low = v.lambda_low;
  r.lambda_up = v.lambda_up;
  r.g0 = v.g0;
  r.gm1 = v.gm1;
  r.gp1 = v.gp1;
  r.tight = v.tight;
  for (size_t k = 0; k < 3; ++k) {
    if (v.reports[k]) r.status[k].status = v.reports[k]->status;
  }
  r.iters_total = v.iters_total();
  return r;
}

/// Trials of one cell plus the aggregates the protocol reports.
struct CellResult {
  CellKey cell;
  std::vector<TrialRecord> trials;

  int recovered() const {
    return static_cast<int>(std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.recovery; }));
  }
  double probability() const {
    return trials.empty() ? 0.0 : static_cast<double>(recovered()) / static_cast<double>(trials.size());
  }
  /// Highest lower bound over recovered trials; NaN when none recovered.
  double lambda_low() const {
    double v = std::numeric_limits<double>::quiet_NaN();
    for (const auto& t : trials) {
      if (t.recovery) v = std::isnan(v) ? t.lambda_low : std::max(v, t.lambda_low);
    }
    return v;
  }
  /// Lowest upper bound over recovered trials; NaN when none recovered.
  double lambda_up() const {
    double v = std::numeric_limits<double>::quiet_NaN();
    for (const auto& t : trials) {
      if (t.recovery) v = std::isnan(v) ? t.lambda_up : std::min(v, t.lambda_up);
    }
    return v;
  }
  /// Trials left out of the aggregated bounds.
  int excluded() const { return static_cast<int>(trials.size()) - recovered(); }
  double fraction_unbounded_up() const {
    const int n = recovered();
    if (n == 0) return 0.0;
    const auto c = std::count_if(trials.begin(), trials.end(),
                                 [](const auto& t) { return t.recovery && std::isinf(t.lambda_up); });
    return static_cast<double>(c) / n;
  }
  double fraction_tight() const {
    const int n = recovered();
    if (n == 0) return 0.0;
    const auto c = std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.recovery && t.all_tight(); });
    return static_cast<double>(c) / n;
  }
  bool partial() const {
    return std::any_of(trials.begin(), trials.end(), [](const auto& t) { return t.aborted(); });
  }
  double wall_ms() const {
    double s = 0.0;
    for (const auto& t : trials) s += t.wall_ms;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Sweep table

inline constexpr const char* kSweepHeader =
    "N,L,M,K,rho,delta,trial,seed,recovery,lambda_low,lambda_up,G0,Gm1,Gp1,tight_p0,tight_pm1,tight_pp1,"
    "status_p0,status_pm1,status_pp1,iters_total,wall_ms";

inline std::string csv_row(const TrialRecord& t) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream os;
  os << t.cell.N << ',' << t.cell.L << ',' << t.cell.M << ',' << t.cell.K << ',' << format_double(t.cell.rho) << ','
     << format_double(t.cell.delta) << ',' << t.trial << ',' << t.seed << ',' << b(t.recovery) << ','
     << format_double(t.lambda_low) << ',' << format_double(t.lambda_up) << ',' << format_g(t.g0) << ','
     << format_g(t.gm1) << ',' << format_g(t.gp1) << ',' << b(t.tight[1]) << ',' << b(t.tight[0]) << ','
     << b(t.tight[2]) << ',' << format_stage(t.status[1]) << ',' << format_stage(t.status[0]) << ','
     << format_stage(t.status[2]) << ',' << t.iters_total << ',' << format_double(t.wall_ms);
  return os.str();
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    const size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline TrialRecord parse_csv_row(std::string_view line) {
  const auto f = split_fields(line);
  if (f.size() != 22) throw Error("sweep table: expected 22 fields, got " + std::to_string(f.size()));
  TrialRecord t;
  t.cell.N = parse_integer<Index>(f[0]);
  t.cell.L = parse_integer<Index>(f[1]);
  t.cell.M = parse_integer<Index>(f[2]);
  t.cell.K = parse_integer<Index>(f[3]);
  t.cell.rho = parse_double(f[4]);
  t.cell.delta = parse_double(f[5]);
  t.trial = parse_integer<int>(f[6]);
  t.seed = parse_integer<std::uint64_t>(f[7]);
  t.recovery = parse_bool(f[8]);
  t.lambda_low = parse_double(f[9]);
  t.lambda_up = parse_double(f[10]);
  t.g0 = parse_g(f[11]);
  t.gm1 = parse_g(f[12]);
  t.gp1 = parse_g(f[13]);
  t.tight[1] = parse_bool(f[14]);
  t.tight[0] = parse_bool(f[15]);
  t.tight[2] = parse_bool(f[16]);
  t.status[1] = parse_stage(f[17]);
  t.status[0] = parse_stage(f[18]);
  t.status[2] = parse_stage(f[19]);
  t.iters_total = parse_integer<int>(f[20]);
  t.wall_ms = parse_double(f[21]);
  return t;
}

inline std::string sweep_csv(const std::vector<CellResult>& cells) {
  std::string s = std::string(kSweepHeader) + "\n";
  for (const auto& c : cells) {
    for (const auto& t : c.trials) s += csv_row(t) + "\n";
  }
  return s;
}

/// Consecutive rows with the same cell form one CellResult.
inline std::vector<CellResult> group_cells(const std::vector<TrialRecord>& rows) {
  std::vector<CellResult> out;
  for (const auto& r : rows) {
    if (out.empty() || !(out.back().cell == r.cell)) out.push_back(CellResult{r.cell, {}});
    out.back().trials.push_back(r);
  }
  return out;
}

inline std::vector<TrialRecord> parse_sweep_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kSweepHeader) throw Error("sweep table: missing or unexpected header");
  std::vector<TrialRecord> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      rows.push_back(parse_csv_row(line));
    } catch (const Error& e) {
      throw Error("sweep table line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

inline std::vector<CellResult> read_sweep_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return group_cells(parse_sweep_csv(in));
}

// ---------------------------------------------------------------------------
// Running trials

/// Worker count from PCAL_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("PCAL_WORKERS"); env && *env) {
    const int n = parse_integer<int>(env);
    if (n < 1) throw Error("PCAL_WORKERS must be >= 1");
    return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(0..n-1) on a pool of workers; the first exception is rethrown
/// after all workers stop.
inline void parallel_for(size_t n, unsigned workers, const std::function<void(size_t)>& f) {
  if (workers <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < std::min<size_t>(workers, n); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline Instance trial_instance(const ExperimentConfig& cfg, const CellKey& cell, int trial) {
  return gen_instance(cell.N, cell.K, cell.L, cell.M, trial_seed(cfg.seed, cell, trial), cfg.field);
}

/// Certifies one trial. Solver failures are recorded in the row, not thrown.
inline TrialRecord run_trial(const ExperimentConfig& cfg, const CellKey& cell, int trial,
                             LambdaVerdict* verdict_out = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const Instance inst = trial_instance(cfg, cell, trial);
  TrialRecord rec;
  try {
    const LambdaVerdict v = pcal_lambda(inst.signals, inst.ensemble, cfg.certify_options());
    rec = record_from_verdict(cell, trial, inst.seed, v);
    if (verdict_out) *verdict_out = v;
  } catch (const std::exception& e) {
    std::cerr << "trial " << trial << " of cell L=" << cell.L << " rho=" << format_double(cell.rho)
              << " delta=" << format_double(cell.delta) << " aborted: " << e.what() << "\n";
    rec = TrialRecord{};
    rec.cell = cell;
    rec.trial = trial;
    rec.seed = inst.seed;
    for (auto& s : rec.status) s.aborted = true;
    if (verdict_out) *verdict_out = LambdaVerdict{};
  }
  if (cfg.record_wall_time) {
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  }
  return rec;
}

struct RunOptions {
  /// Keep cells already listed in the manifest and run only the rest.
  bool resume = false;
  /// 0 means worker_count().
  unsigned workers = 0;
  /// Called once per finished cell, in grid order.
  std::function<void(const CellResult&)> on_cell;
};

namespace detail {

inline std::string manifest_header(const ExperimentConfig& cfg) {
  return "# sweep manifest v1 fingerprint=" + cfg.fingerprint();
}

inline std::string manifest_line(const CellKey& c) {
  return "N=" + std::to_string(c.N) + " L=" + std::to_string(c.L) + " rho=" + format_double(c.rho) +
         " delta=" + format_double(c.delta);
}

/// Completed cells of an earlier run that can be reused: the longest prefix
/// of the grid that is both in the manifest and fully present in the table.
inline std::vector<CellResult> resumable_cells(const ExperimentConfig& cfg, const std::vector<CellKey>& grid) {
  const std::string manifest = cfg.output.manifest_path();
  std::ifstream mf(manifest);
  if (!mf) return {};
  std::string line;
  if (!std::getline(mf, line)) return {};
  if (line != manifest_header(cfg)) {
    throw Error("resume: '" + manifest + "' was written for a different configuration");
  }
  std::vector<std::string> done;
  while (std::getline(mf, line)) {
    if (!line.empty()) done.push_back(line);
  }
  std::vector<CellResult> existing;
  try {
    existing = read_sweep_csv(cfg.output.csv);
  } catch (const Error&) {
    return {};
  }
  std::vector<CellResult> keep;
  for (size_t i = 0; i < grid.size() && i < done.size() && i < existing.size(); ++i) {
    if (done[i] != manifest_line(grid[i]) || !(existing[i].cell == grid[i]) ||
        static_cast<int>(existing[i].trials.size()) != cfg.trials) {
      break;
    }
    keep.push_back(std::move(existing[i]));
  }
  return keep;
}

/// Replaces `path` atomically with `text`.
inline void replace_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  write_text_file(tmp, text);
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

/// Runs every trial of every cell through the certifier. With an output CSV
/// configured, each cell's rows are appended as soon as it and all earlier
/// cells are complete, followed by a manifest line; rows always appear in
/// grid order whatever the worker count.
inline std::vector<CellResult> run_transition(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const std::vector<CellKey> grid = grid_cells(cfg);
  const bool persist = !cfg.output.csv.empty();
  const std::string manifest = cfg.output.manifest_path();

  std::vector<CellResult> kept;
  if (persist && opts.resume) kept = detail::resumable_cells(cfg, grid);
  std::ofstream csv, mf;
  if (persist) {
    if (const auto dir = std::filesystem::path(cfg.output.csv).parent_path(); !dir.empty()) {
      std::filesystem::create_directories(dir);
    }
    std::string mtext = detail::manifest_header(cfg) + "\n";
    for (const auto& c : kept) mtext += detail::manifest_line(c.cell) + "\n";
    detail::replace_file(cfg.output.csv, sweep_csv(kept));
    detail::replace_file(manifest, mtext);
    csv.open(cfg.output.csv, std::ios::binary | std::ios::app);
    mf.open(manifest, std::ios::binary | std::ios::app);
    if (!csv || !mf) throw Error("cannot append to '" + cfg.output.csv + "'");
  }

  std::vector<CellResult> results(grid.size());
  std::vector<int> pending(grid.size(), cfg.trials);
  for (size_t i = 0; i < kept.size(); ++i) {
    results[i] = kept[i];
    pending[i] = 0;
    if (opts.on_cell) opts.on_cell(results[i]);
  }
  for (size_t i = kept.size(); i < grid.size(); ++i) {
    results[i].cell = grid[i];
    results[i].trials.resize(static_cast<size_t>(cfg.trials));
  }

  std::vector<std::pair<size_t, int>> tasks;
  for (size_t i = kept.size(); i < grid.size(); ++i) {
    for (int t = 0; t < cfg.trials; ++t) tasks.emplace_back(i, t);
  }

  std::mutex mutex;
  size_t next_write = kept.size();
  auto flush_ready = [&] {
    while (next_write < grid.size() && pending[next_write] == 0) {
      const CellResult& c = results[next_write];
      if (persist) {
        for (const auto& t : c.trials) csv << csv_row(t) << '\n';
        csv.flush();
        mf << detail::manifest_line(c.cell) << '\n';
        mf.flush();
        if (!csv || !mf) throw Error("write failed for '" + cfg.output.csv + "'");
      }
      if (opts.on_cell) opts.on_cell(c);
      ++next_write;
    }
  };
  {
    std::lock_guard<std::mutex> lock(mutex);
    flush_ready();
  }
  parallel_for(tasks.size(), opts.workers ? opts.workers : worker_count(), [&](size_t k) {
    const auto [cell, trial] = tasks[k];
    TrialRecord rec = run_trial(cfg, grid[cell], trial);
    std::lock_guard<std::mutex> lock(mutex);
    results[cell].trials[static_cast<size_t>(trial)] = std::move(rec);
    --pending[cell];
    flush_ready();
  });
  return results;
}

// ---------------------------------------------------------------------------
// Certifier against direct recovery

/// Lambda for a certified-recoverable verdict; nullopt when the certifier
/// rejected the instance. A zero lower bound with no upper bound uses 1.
inline std::optional<double> choose_lambda(const LambdaVerdict& v, LambdaPolicy policy) {
  if (!v.recovery) return std::nullopt;
  const double low = v.lambda_low, up = v.lambda_up;
  const double twice = low > 0.0 ? 2.0 * low : std::min(1.0, 0.5 * up);
  if (std::isinf(up)) return twice;
  const double mid = low > 0.0 ? std::sqrt(low * up) : 0.5 * up;
  if (policy == LambdaPolicy::mid) return mid;
  return twice < up ? twice : mid;
}

struct ConsistencyRecord {
  TrialRecord trial;
  /// Lambda of the reported solve: the chosen one, or for rejected instances
  /// the grid value with the smallest error.
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double solver_error = std::numeric_limits<double>::quiet_NaN();
  bool solver_success = false;
  bool agree() const { return trial.recovery == solver_success; }
};

struct ConsistencyCell {
  CellKey cell;
  int trials = 0;
  int both_recover = 0;
  int certifier_only = 0;
  int solver_only = 0;
  int neither = 0;
  double agreement() const { return trials ? static_cast<double>(both_recover + neither) / trials : 1.0; }
};

struct ConsistencyResult {
  std::vector<ConsistencyRecord> records;
  std::vector<ConsistencyCell> cells;

  int agreeing() const {
    return static_cast<int>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.agree(); }));
  }
  double agreement() const {
    return records.empty() ? 1.0 : static_cast<double>(agreeing()) / static_cast<double>(records.size());
  }
};

inline ConsistencyRecord run_consistency_trial(const ExperimentConfig& cfg, const CellKey& cell, int trial,
                                               LambdaPolicy policy) {
  LambdaVerdict v;
  ConsistencyRecord out;
  out.trial = run_trial(cfg, cell, trial, &v);
  if (out.trial.aborted()) return out;
  const Instance inst = trial_instance(cfg, cell, trial);
  const CrossMeasurements g = cross_measure(simulate_measurements(inst.signals, inst.ensemble));
  const SolveConfig rc = cfg.recovery_config();
  auto attempt = [&](double lambda) {
    const RecoveryResult r = solve_phasecal(g, inst.ensemble, lambda, rc, inst.signals.joint);
    if (std::isnan(out.solver_error) || r.signal_error < out.solver_error) {
      out.solver_error = r.signal_error;
      out.lambda = lambda;
    }
    out.solver_success = out.solver_success || r.succeeded();
  };
  try {
    if (const auto lambda = choose_lambda(v, policy)) {
      attempt(*lambda);
    } else {
      for (double lambda : cfg.lambda_grid) {
        attempt(lambda);
        if (out.solver_success) break;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "recovery solve for trial " << trial << " aborted: " << e.what() << "\n";
  }
  return out;
}

inline constexpr const char* kConsistencyHeader =
    "N,L,M,K,rho,delta,trial,seed,certified,lambda_low,lambda_up,lambda,solver_error,solver_success,agree";
inline constexpr const char* kConsistencySummaryHeader =
    "N,L,M,K,rho,delta,trials,agreement,both_recover,certifier_only,solver_only,neither";

inline std::string consistency_csv(const ConsistencyResult& r) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  std::ostringstream os;
  os << kConsistencyHeader << '\n';
  for (const auto& c : r.records) {
    const TrialRecord& t = c.trial;
    os << t.cell.N << ',' << t.cell.L << ',' << t.cell.M << ',' << t.cell.K << ',' << format_double(t.cell.rho) << ','
       << format_double(t.cell.delta) << ',' << t.trial << ',' << t.seed << ',' << b(t.recovery) << ','
       << format_double(t.lambda_low) << ',' << format_double(t.lambda_up) << ',' << format_double(c.lambda) << ','
       << format_double(c.solver_error) << ',' << b(c.solver_success) << ',' << b(c.agree()) << '\n';
  }
  return os.str();
}

inline std::string consistency_summary_csv(const ConsistencyResult& r) {
  std::ostringstream os;
  os << kConsistencySummaryHeader << '\n';
  for (const auto& c : r.cells) {
    os << c.cell.N << ',' << c.cell.L << ',' << c.cell.M << ',' << c.cell.K << ',' << format_double(c.cell.rho) << ','
       << format_double(c.cell.delta) << ',' << c.trials << ',' << format_double(c.agreement()) << ','
       << c.both_recover << ',' << c.certifier_only << ',' << c.solver_only << ',' << c.neither << '\n';
  }
  return os.str();
}

/// Certifies every trial and checks the verdict against a direct recovery
/// solve; writes the per-trial and per-cell tables when paths are set.
inline ConsistencyResult run_consistency(const ExperimentConfig& cfg, LambdaPolicy policy, unsigned workers = 0) {
  cfg.validate();
  const std::vector<CellKey> grid = grid_cells(cfg);
  ConsistencyResult res;
  res.records.resize(grid.size() * static_cast<size_t>(cfg.trials));
  parallel_for(res.records.size(), workers ? workers : worker_count(), [&](size_t k) {
    const size_t cell = k / static_cast<size_t>(cfg.trials);
    const int trial = static_cast<int>(k % static_cast<size_t>(cfg.trials));
    res.records[k] = run_consistency_trial(cfg, grid[cell], trial, policy);
  });
  for (size_t i = 0; i < grid.size(); ++i) {
    ConsistencyCell c{grid[i]};
    for (int t = 0; t < cfg.trials; ++t) {
      const ConsistencyRecord& r = res.records[i * static_cast<size_t>(cfg.trials) + static_cast<size_t>(t)];
      ++c.trials;
      if (r.trial.recovery) {
        ++(r.solver_success ? c.both_recover : c.certifier_only);
      } else {
        ++(r.solver_success ? c.solver_only : c.neither);
      }
    }
    res.cells.push_back(c);
  }
  auto write = [](const std::string& path, const std::string& text) {
    if (path.empty()) return;
    if (const auto dir = std::filesystem::path(path).parent_path(); !dir.empty()) std::filesystem::create_directories(dir);
    write_text_file(path, text);
  };
  write(cfg.output.consistency_csv, consistency_csv(res));
  write(cfg.output.consistency_summary_csv, consistency_summary_csv(res));
  return res;
}

}  // namespace pcal

#endif  // PCAL_EXPERIMENT_HPP
