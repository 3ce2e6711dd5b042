// pcal: command-line front end for instance generation, certification,
// recovery solves and the transition sweeps.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pcal/pcal.hpp"

namespace {

using namespace pcal;

void emit(const Json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

ExperimentConfig load_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : ExperimentConfig::from_json(read_json_file(path));
}

struct InstanceArgs {
  std::string file;
  Index N = 16;
  Index K = 2;
  Index L = 1;
  Index M = 20;
  std::uint64_t seed = 0;
  std::string field = "complex";

  void add(CLI::App* app, bool allow_file) {
    if (allow_file) app->add_option("-i,--instance", file, "instance JSON (otherwise generated from --seed)");
    app->add_option("--N", N, "signal length")->check(CLI::PositiveNumber);
    app->add_option("--K", K, "nonzeros per signal")->check(CLI::PositiveNumber);
    app->add_option("--L", L, "number of signals")->check(CLI::PositiveNumber);
    app->add_option("--M", M, "number of measurements")->check(CLI::NonNegativeNumber);
    app->add_option("--seed", seed, "instance seed");
    app->add_option("--field", field, "complex or real")->check(CLI::IsMember({"complex", "real"}));
  }

  Instance load() const {
    if (!file.empty()) return instance_from_json(read_json_file(file));
    return gen_instance(N, K, L, M, seed, field_from_string(field));
  }
};

void print_cell(const CellResult& c) {
  std::fprintf(stderr, "L=%lld rho=%s delta=%s M=%lld K=%lld  P(recovery)=%.2f  lambda_low=%s lambda_up=%s  tight=%.2f%s\n",
               static_cast<long long>(c.cell.L), format_double(c.cell.rho).c_str(),
               format_double(c.cell.delta).c_str(), static_cast<long long>(c.cell.M),
               static_cast<long long>(c.cell.K), c.probability(), format_double(c.lambda_low()).c_str(),
               format_double(c.lambda_up()).c_str(), c.fraction_tight(), c.partial() ? "  (partial)" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse recovery from phase-miscalibrated measurements: certification and recovery."};
  app.require_subcommand(1);

  // gen
  InstanceArgs gen_args;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "generate a random instance");
  gen_args.add(gen, false);
  gen->add_option("-o,--output", gen_out, "output file (default stdout)");

  // certify
  InstanceArgs cert_args;
  std::string cert_config, cert_out;
  auto* certify = app.add_subcommand("certify", "decide recoverability and the admissible lambda range");
  cert_args.add(certify, true);
  certify->add_option("-c,--config", cert_config, "JSON config; its solver and certify sections are used");
  certify->add_option("-o,--output", cert_out, "output file (default stdout)");

  // solve
  InstanceArgs solve_args;
  std::string solve_config, solve_out, solve_policy = "multiple-of-low";
  std::optional<double> solve_lambda;
  auto* solve = app.add_subcommand("solve", "recover the signals by the lifted l1 + trace program");
  solve_args.add(solve, true);
  solve->add_option("-l,--lambda", solve_lambda, "weight of the l1 term (default: chosen from a certification)")
      ->check(CLI::NonNegativeNumber);
  solve->add_option("--policy", solve_policy, "lambda policy when certifying first")
      ->check(CLI::IsMember({"mid", "multiple-of-low"}));
  solve->add_option("-c,--config", solve_config, "JSON config; its solver sections are used");
  solve->add_option("-o,--output", solve_out, "output file (default stdout)");

  // sweep
  std::string sweep_config, sweep_csv_path;
  bool sweep_resume = false;
  auto* sweep = app.add_subcommand("sweep", "certify every trial of a (L, rho, delta) grid");
  sweep->add_option("-c,--config", sweep_config, "JSON config")->required();
  sweep->add_option("--csv", sweep_csv_path, "output table (overrides the config)");
  sweep->add_flag("--resume", sweep_resume, "keep cells already completed by an earlier run");

  // consistency
  std::string cons_config, cons_policy;
  auto* consistency = app.add_subcommand("consistency", "compare certifier verdicts with direct recovery");
  consistency->add_option("-c,--config", cons_config, "JSON config")->required();
  consistency->add_option("--policy", cons_policy, "lambda policy (overrides the config)")
      ->check(CLI::IsMember({"mid", "multiple-of-low"}));

  // plot
  std::string plot_csv, plot_dir;
  auto* plot = app.add_subcommand("plot", "render transition plots from a sweep table");
  plot->add_option("--csv", plot_csv, "sweep table")->required()->check(CLI::ExistingFile);
  plot->add_option("-o,--output", plot_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      emit(instance_to_json(gen_args.load()), gen_out);
    } else if (certify->parsed()) {
      const ExperimentConfig cfg = load_config(cert_config);
      const Instance inst = cert_args.load();
      ExperimentConfig c = cfg;
      c.field = inst.field;
      emit(verdict_to_json(pcal_lambda(inst.signals, inst.ensemble, c.certify_options())), cert_out);
    } else if (solve->parsed()) {
      ExperimentConfig cfg = load_config(solve_config);
      const Instance inst = solve_args.load();
      cfg.field = inst.field;
      double lambda = 0.0;
      Json out;
      if (solve_lambda) {
        lambda = *solve_lambda;
      } else {
        const LambdaVerdict v = pcal_lambda(inst.signals, inst.ensemble, cfg.certify_options());
        const auto chosen = choose_lambda(v, lambda_policy_from_string(solve_policy));
        if (!chosen) {
          std::cerr << "the certifier found no admissible lambda; pass --lambda to solve anyway\n";
          emit({{"verdict", verdict_to_json(v)}}, solve_out);
          return 2;
        }
        lambda = *chosen;
        out["verdict"] = verdict_to_json(v);
      }
      const CrossMeasurements g = cross_measure(simulate_measurements(inst.signals, inst.ensemble));
      const RecoveryResult r = solve_phasecal(g, inst.ensemble, lambda, cfg.recovery_config(), inst.signals.joint);
      out["recovery"] = recovery_to_json(r, lambda, inst.N, inst.L);
      emit(out, solve_out);
    } else if (sweep->parsed()) {
      ExperimentConfig cfg = load_config(sweep_config);
      if (!sweep_csv_path.empty()) cfg.output.csv = sweep_csv_path;
      if (cfg.output.csv.empty()) throw Error("sweep: no output table (set output.csv or --csv)");
      RunOptions opts;
      opts.resume = sweep_resume;
      opts.on_cell = print_cell;
      const auto cells = run_transition(cfg, opts);
      if (!cfg.output.plot_dir.empty() && !cells.empty()) {
        for (const auto& p : emit_plots(cells, cfg.output.plot_dir)) std::cerr << "wrote " << p << "\n";
      }
    } else if (consistency->parsed()) {
      ExperimentConfig cfg = load_config(cons_config);
      const LambdaPolicy policy = cons_policy.empty() ? cfg.lambda_policy : lambda_policy_from_string(cons_policy);
      const ConsistencyResult res = run_consistency(cfg, policy);
      std::cout << consistency_summary_csv(res);
      std::fprintf(stderr, "agreement %d/%zu (%.1f%%)\n", res.agreeing(), res.records.size(), 100.0 * res.agreement());
    } else if (plot->parsed()) {
      for (const auto& p : emit_plots(read_sweep_csv(plot_csv), plot_dir)) std::cout << p << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
