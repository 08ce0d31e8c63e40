#ifndef LINFLOW_EXPERIMENT_HPP
#define LINFLOW_EXPERIMENT_HPP

// Config-driven experiment runner on top of the header-only library:
// simulation runs with CSV/JSON/SVG output, critical-point tables and the
// metric self-check. Everything here works in double precision.

#include "linflow/linflow.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace linflow {

/// Malformed or inconsistent experiment configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Experiment {
  AutoencoderBalanced,
  AutoencoderNonBalanced,
  AutoencoderPathological,
  SupervisedTeacher,
  ConvergenceRateSweep,
};

struct CheckThresholds {
  double conserved_drift = 1e-6;
  double loss_increment = 1e-9;
  double closed_form = 1e-6;
  /// Final ||W(T) - target||_F. Negative means the per-experiment default.
  double dist_to_target = -1;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::AutoencoderBalanced;
  Index d = 8;
  Index r = 4;
  /// Sample count; 0 means 3 d.
  Index m = 0;
  Index N = 2;
  std::uint64_t seed = 0;
  /// Absent means the experiment's default initializer seeded with `seed`.
  std::optional<InitSpec<double>> init;
  IntegratorConfig integrator;
  std::string output_dir = "linflow_out";
  CheckThresholds checks;
  bool svg = false;
  /// Critical-point table range; k_max < 0 means min(d_x, d_y).
  Index k_min = 0;
  Index k_max = -1;
  /// Explicit data; when present it replaces the generated X (and Y).
  std::optional<Mat<double>> X, Y;

  Index samples() const { return m > 0 ? m : 3 * d; }
  InitSpec<double> init_spec() const;
  void validate() const;
};

const char* to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);
/// LINFLOW_OUT, when set and non-empty, replaces output_dir.
void apply_env_overrides(ExperimentConfig& cfg);

nlohmann::json to_json(const InvariantReport& r);

struct FinalMetrics {
  double loss = 0;
  double dist_to_target = 0;
  double balance_residual = 0;
  Index rank = 0;
};

struct RunReport {
  nlohmann::json config;
  FinalMetrics final;
  std::vector<InvariantReport> reports;
  std::vector<std::string> files;
  bool diverged = false;
  std::string divergence;
  bool converged = false;
  long steps = 0;
  /// Empirical exponential rate of ||W(t) - W(T)|| (ConvergenceRateSweep only).
  std::optional<double> convergence_rate;

  bool passed() const;
  nlohmann::json to_json() const;
};

struct ExperimentData {
  DataSet<double> data;
  /// Teacher product for SupervisedTeacher, empty otherwise.
  Mat<double> teacher;
};

ExperimentData make_data(const ExperimentConfig& cfg);
NetworkShape experiment_shape(const ExperimentConfig& cfg);

/// Generates data, integrates the layer-wise flow, evaluates diagnostics and
/// writes trajectory.csv / report.json (/ trajectory.svg) into output_dir.
RunReport run(const ExperimentConfig& cfg);

/// Trajectory table with the fixed column order
/// t, loss, rhs_norm, balance_residual, rank_estimate, dist_to_target, conserved_drift.
std::string trajectory_csv(const FullTrajectory<double>& traj, const std::vector<double>& dist);

struct CriticalTable {
  std::string csv;
  nlohmann::json notes;
};

/// Critical points of L^1 for k in [k_min, k_max]; writes critical.csv and
/// critical.json into output_dir.
CriticalTable run_critical(const ExperimentConfig& cfg);

struct MetricCheckOptions {
  Index dy = 4;
  Index dx = 4;
  std::vector<int> layers{2, 3, 5};
  int trials = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;
};

/// Three-way comparison of the metric (quadrature, tangent solve, N = 2 closed
/// form) on random rank-k points with random tangent pairs.
nlohmann::json run_metric_check(const MetricCheckOptions& opt);

/// Minimal static SVG line chart; `log_y` plots log10 of positive values.
struct Series {
  std::string name;
  std::vector<double> values;
};
std::string line_chart_svg(const std::string& title, const std::vector<double>& x,
                           const std::vector<Series>& series, bool log_y);

}  // namespace linflow

#endif  // LINFLOW_EXPERIMENT_HPP
