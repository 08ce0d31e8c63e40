// Command-line runner: simulate, critical, metric-check.

#include "linflow/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

enum Exit { kOk = 0, kConfigError = 2, kDiverged = 3, kCheckFailed = 4 };

int simulate(const std::string& path, bool check) {
  auto cfg = linflow::load_config(path);
  linflow::apply_env_overrides(cfg);
  const auto rep = linflow::run(cfg);
  std::cout << rep.to_json().dump(2) << "\n";
  if (rep.diverged) {
    std::cerr << "diverged: " << rep.divergence << "\n";
    return kDiverged;
  }
  if (check && !rep.passed()) {
    for (const auto& r : rep.reports) {
      if (!r.passed) std::cerr << "check failed: " << r.name << " = " << r.max_violation << " > " << r.threshold << "\n";
    }
    return kCheckFailed;
  }
  return kOk;
}

int critical(const std::string& path) {
  auto cfg = linflow::load_config(path);
  linflow::apply_env_overrides(cfg);
  const auto table = linflow::run_critical(cfg);
  std::cout << table.csv;
  std::cerr << table.notes.dump(2) << "\n";
  return kOk;
}

int metric_check(const linflow::MetricCheckOptions& opt, bool check) {
  const auto rep = linflow::run_metric_check(opt);
  std::cout << rep.dump(2) << "\n";
  return check && !rep["passed"].get<bool>() ? kCheckFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient flows of deep linear networks"};
  app.require_subcommand(1);

  std::string sim_config;
  bool sim_check = false;
  auto* sim = app.add_subcommand("simulate", "integrate one configured experiment");
  sim->add_option("--config", sim_config, "JSON config file")->required();
  sim->add_flag("--check", sim_check, "exit 4 if an acceptance threshold is missed");

  std::string crit_config;
  auto* crit = app.add_subcommand("critical", "enumerate and classify critical points of the landscape");
  crit->add_option("--config", crit_config, "JSON config file")->required();

  linflow::MetricCheckOptions mc;
  std::vector<linflow::Index> dims{mc.dy, mc.dx};
  bool mc_check = false;
  auto* met = app.add_subcommand("metric-check", "compare the three evaluations of the metric");
  met->add_option("--dims", dims, "d_y d_x")->expected(2);
  met->add_option("--trials", mc.trials, "number of random trials");
  met->add_option("--N", mc.layers, "layer counts to cycle through");
  met->add_option("--seed", mc.seed);
  met->add_option("--tol", mc.tolerance, "relative deviation threshold");
  met->add_flag("--check", mc_check, "exit 4 if a deviation exceeds the threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*sim) return simulate(sim_config, sim_check);
    if (*crit) return critical(crit_config);
    mc.dy = dims[0];
    mc.dx = dims[1];
    return metric_check(mc, mc_check);
  } catch (const linflow::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const linflow::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDiverged;
  } catch (const linflow::Error& e) {
    // size guards and other precondition failures stem from the configuration
    std::cerr << "error: " << e.what() << "\n";
    return kConfigError;
  }
}
