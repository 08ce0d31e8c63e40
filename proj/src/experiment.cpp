#include "linflow/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace linflow {

using json = nlohmann::json;
using Mx = Mat<double>;

namespace {

constexpr const char* kExperimentNames[] = {"AutoencoderBalanced", "AutoencoderNonBalanced",
                                            "AutoencoderPathological", "SupervisedTeacher",
                                            "ConvergenceRateSweep"};
constexpr const char* kInitNames[] = {"BalancedFromProduct", "OrthogonalBalanced", "Gaussian",
                                      "PathologicalAutoencoder"};
constexpr const char* kStdRuleNames[] = {"InvSqrtFanIn", "InvSqrtFanOut", "Fixed"};

template <typename E, std::size_t K>
E enum_from(const std::string& s, const char* const (&names)[K], const char* what) {
  for (std::size_t i = 0; i < K; ++i) {
    if (s == names[i]) return E(i);
  }
  throw ConfigError(std::string("unknown ") + what + " '" + s + "'");
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Mx matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw ConfigError(std::string(what) + ": expected a non-empty array of rows");
  }
  const Index rows = Index(j.size()), cols = Index(j[0].size());
  Mx M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const json& row = j[std::size_t(i)];
    if (!row.is_array() || Index(row.size()) != cols) {
      throw ConfigError(std::string(what) + ": rows have different lengths");
    }
    for (Index c = 0; c < cols; ++c) M(i, c) = row[std::size_t(c)].get<double>();
  }
  return M;
}

json matrix_to_json(const Mx& M) {
  json rows = json::array();
  for (Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Index c = 0; c < M.cols(); ++c) row.push_back(M(i, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void require_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

// Independent streams for data and initialization derived from one seed.
Rng data_rng(std::uint64_t seed) {
  std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), 0xDA7Au};
  return Rng(seq);
}

std::optional<double> dist_threshold(const ExperimentConfig& cfg) {
  if (cfg.checks.dist_to_target >= 0) return cfg.checks.dist_to_target;
  switch (cfg.experiment) {
    case Experiment::AutoencoderBalanced:
    case Experiment::AutoencoderNonBalanced:
      return 1e-4;
    case Experiment::SupervisedTeacher:
      return 1e-3;
    default:
      return std::nullopt;
  }
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
}

// -slope of a least-squares line through log(dist) where dist is clearly
// above rounding level.
std::optional<double> fitted_rate(const std::vector<double>& t, const std::vector<double>& dist) {
  if (dist.empty()) return std::nullopt;
  const double floor = std::max(1e-10, 1e-8 * dist.front());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t s = 0; s < dist.size(); ++s) {
    if (!(dist[s] > floor)) continue;
    const double y = std::log(dist[s]);
    sx += t[s];
    sy += y;
    sxx += t[s] * t[s];
    sxy += t[s] * y;
    ++n;
  }
  const double den = n * sxx - sx * sx;
  if (n < 3 || den <= 0) return std::nullopt;
  return -(n * sxy - sx * sy) / den;
}

}  // namespace

const char* to_string(Experiment e) { return kExperimentNames[int(e)]; }

Experiment experiment_from_string(const std::string& s) {
  return enum_from<Experiment>(s, kExperimentNames, "experiment");
}

InitSpec<double> ExperimentConfig::init_spec() const {
  if (init) return *init;
  InitSpec<double> spec;
  spec.seed = seed;
  switch (experiment) {
    case Experiment::AutoencoderBalanced:
    case Experiment::ConvergenceRateSweep:
      spec.kind = InitKind::OrthogonalBalanced;
      break;
    case Experiment::AutoencoderNonBalanced:
      spec.kind = InitKind::Gaussian;
      break;
    case Experiment::AutoencoderPathological:
      spec.kind = InitKind::PathologicalAutoencoder;
      break;
    case Experiment::SupervisedTeacher:
      spec.kind = InitKind::Gaussian;
      spec.std_rule = StdRule::InvSqrtFanOut;
      break;
  }
  return spec;
}

void ExperimentConfig::validate() const {
  if (d < 1) throw ConfigError("d must be >= 1");
  if (r < 1 || r > d) throw ConfigError("need 1 <= r <= d");
  if (N < 2) throw ConfigError("N must be >= 2");
  if (samples() < d && !X) throw ConfigError("m must be >= d so that X X^T can have full rank");
  try {
    integrator.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  const auto spec = init_spec();
  if (spec.kind == InitKind::PathologicalAutoencoder && N != 2) {
    throw ConfigError("the pathological start needs N = 2");
  }
  if (spec.kind == InitKind::BalancedFromProduct && (spec.target.rows() != d || spec.target.cols() != d)) {
    throw ConfigError("init.target must be d x d");
  }
  if (X && X->rows() != d) throw ConfigError("data.X must have d rows");
  if (Y && (!X || Y->cols() != X->cols() || Y->rows() != d)) {
    throw ConfigError("data.Y needs data.X, d rows and the same sample count");
  }
  if (k_min < 0 || (k_max >= 0 && k_max < k_min)) throw ConfigError("invalid k range");
}

ExperimentConfig config_from_json(const json& j) {
  try {
    require_keys(j, {"experiment", "d", "r", "m", "N", "seed", "init", "integrator", "output_dir", "checks",
                     "svg", "k_min", "k_max", "data"},
                 "config");
    ExperimentConfig cfg;
    if (j.contains("experiment")) cfg.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    if (j.contains("data")) {
      const json& dj = j.at("data");
      require_keys(dj, {"X", "Y"}, "data");
      cfg.X = matrix_from_json(dj.at("X"), "data.X");
      if (dj.contains("Y")) cfg.Y = matrix_from_json(dj.at("Y"), "data.Y");
      cfg.d = cfg.X->rows();
      cfg.m = cfg.X->cols();
      cfg.r = std::min(cfg.r, cfg.d);
    }
    read(j, "d", cfg.d);
    read(j, "r", cfg.r);
    read(j, "m", cfg.m);
    read(j, "N", cfg.N);
    read(j, "seed", cfg.seed);
    read(j, "output_dir", cfg.output_dir);
    read(j, "svg", cfg.svg);
    read(j, "k_min", cfg.k_min);
    read(j, "k_max", cfg.k_max);
    if (j.contains("init")) {
      const json& ij = j.at("init");
      require_keys(ij, {"kind", "seed", "std_rule", "fixed_std", "target"}, "init");
      InitSpec<double> spec = cfg.init_spec();
      if (ij.contains("kind")) spec.kind = enum_from<InitKind>(ij.at("kind").get<std::string>(), kInitNames, "init kind");
      read(ij, "seed", spec.seed);
      if (ij.contains("std_rule")) {
        spec.std_rule = enum_from<StdRule>(ij.at("std_rule").get<std::string>(), kStdRuleNames, "std_rule");
      }
      read(ij, "fixed_std", spec.fixed_std);
      if (ij.contains("target")) spec.target = matrix_from_json(ij.at("target"), "init.target");
      cfg.init = spec;
    }
    if (j.contains("integrator")) {
      const json& gj = j.at("integrator");
      require_keys(gj, {"h", "t_max", "snapshot_every", "grad_stop_tol", "max_steps"}, "integrator");
      read(gj, "h", cfg.integrator.h);
      read(gj, "t_max", cfg.integrator.t_max);
      read(gj, "snapshot_every", cfg.integrator.snapshot_every);
      read(gj, "grad_stop_tol", cfg.integrator.grad_stop_tol);
      read(gj, "max_steps", cfg.integrator.max_steps);
    }
    if (j.contains("checks")) {
      const json& cj = j.at("checks");
      require_keys(cj, {"conserved_drift", "loss_increment", "closed_form", "dist_to_target"}, "checks");
      read(cj, "conserved_drift", cfg.checks.conserved_drift);
      read(cj, "loss_increment", cfg.checks.loss_increment);
      read(cj, "closed_form", cfg.checks.closed_form);
      read(cj, "dist_to_target", cfg.checks.dist_to_target);
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

json to_json(const ExperimentConfig& cfg) {
  const auto spec = cfg.init_spec();
  json init = {{"kind", kInitNames[int(spec.kind)]},
               {"seed", spec.seed},
               {"std_rule", kStdRuleNames[int(spec.std_rule)]},
               {"fixed_std", spec.fixed_std}};
  if (spec.kind == InitKind::BalancedFromProduct) init["target"] = matrix_to_json(spec.target);
  json j = {{"experiment", to_string(cfg.experiment)},
            {"d", cfg.d},
            {"r", cfg.r},
            {"m", cfg.samples()},
            {"N", cfg.N},
            {"seed", cfg.seed},
            {"init", init},
            {"integrator",
             {{"h", cfg.integrator.h},
              {"t_max", cfg.integrator.t_max},
              {"snapshot_every", cfg.integrator.snapshot_every},
              {"grad_stop_tol", cfg.integrator.grad_stop_tol},
              {"max_steps", cfg.integrator.max_steps}}},
            {"output_dir", cfg.output_dir},
            {"checks",
             {{"conserved_drift", cfg.checks.conserved_drift},
              {"loss_increment", cfg.checks.loss_increment},
              {"closed_form", cfg.checks.closed_form},
              {"dist_to_target", dist_threshold(cfg) ? json(*dist_threshold(cfg)) : json(nullptr)}}},
            {"svg", cfg.svg},
            {"k_min", cfg.k_min},
            {"k_max", cfg.k_max}};
  if (cfg.X) {
    j["data"] = {{"X", matrix_to_json(*cfg.X)}};
    if (cfg.Y) j["data"]["Y"] = matrix_to_json(*cfg.Y);
  }
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* out = std::getenv("LINFLOW_OUT"); out && *out) cfg.output_dir = out;
}

json to_json(const InvariantReport& r) {
  json j = {{"name", r.name},
            {"max_violation", r.max_violation},
            {"threshold", r.threshold},
            {"passed", r.passed},
            {"worst_time", r.worst_time}};
  if (!r.detail.empty()) j["detail"] = r.detail;
  return j;
}

bool RunReport::passed() const {
  if (diverged) return false;
  for (const auto& r : reports) {
    if (!r.passed) return false;
  }
  return true;
}

json RunReport::to_json() const {
  json reps = json::array();
  for (const auto& r : reports) reps.push_back(linflow::to_json(r));
  json j = {{"config", config},
            {"final",
             {{"loss", final.loss},
              {"dist_to_target", final.dist_to_target},
              {"balance_residual", final.balance_residual},
              {"rank", final.rank}}},
            {"invariants", reps},
            {"files", files},
            {"diverged", diverged},
            {"converged", converged},
            {"steps", steps},
            {"passed", passed()}};
  if (diverged) j["divergence"] = divergence;
  if (convergence_rate) j["convergence_rate"] = *convergence_rate;
  return j;
}

NetworkShape experiment_shape(const ExperimentConfig& cfg) { return grid_dims(cfg.d, cfg.r, cfg.N); }

ExperimentData make_data(const ExperimentConfig& cfg) {
  if (cfg.X) return {DataSet<double>(*cfg.X, cfg.Y ? *cfg.Y : *cfg.X), Mx()};
  Rng rng = data_rng(cfg.seed);
  const Mx X = gaussian_matrix<double>(cfg.d, cfg.samples(), 1.0 / std::sqrt(double(cfg.d)), rng);
  if (cfg.experiment != Experiment::SupervisedTeacher) return {DataSet<double>::autoencoder(X), Mx()};
  const auto teacher = gaussian<double>(experiment_shape(cfg), rng, StdRule::InvSqrtFanOut);
  const Mx Wt = product(teacher).W;
  return {DataSet<double>(X, Mx(Wt * X)), Wt};
}

std::string trajectory_csv(const FullTrajectory<double>& traj, const std::vector<double>& dist) {
  std::string out = "t,loss,rhs_norm,balance_residual,rank_estimate,dist_to_target,conserved_drift\n";
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const auto& d = traj.diagnostics[s];
    out += fmt17(traj.times[s]) + ',' + fmt17(d.loss) + ',' + fmt17(d.rhs_norm) + ',' +
           fmt17(d.balance_residual) + ',' + std::to_string(d.rank_estimate) + ',' + fmt17(dist[s]) + ',' +
           fmt17(d.conserved_drift) + '\n';
  }
  return out;
}

RunReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  RunReport rep;
  rep.config = to_json(cfg);
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);

  const auto shape = experiment_shape(cfg);
  const auto ed = make_data(cfg);
  const auto spec = cfg.init_spec();
  const auto w0 = make_initial(spec, shape, ed.data.X());

  FullTrajectory<double> traj;
  try {
    traj = integrate_full(w0, ed.data, cfg.integrator);
  } catch (const DivergenceError& e) {
    rep.diverged = true;
    rep.divergence = e.what();
    rep.steps = e.step();
    write_file(dir / "report.json", rep.to_json().dump(2) + "\n");
    rep.files.push_back((dir / "report.json").string());
    return rep;
  }
  rep.steps = traj.steps;
  rep.converged = traj.converged;

  Mx target;
  switch (cfg.experiment) {
    case Experiment::SupervisedTeacher: {
      const auto qd = compute_Q(ed.data);
      target = global_minimizer(qd, std::min(cfg.r, qd.q))->W;
      break;
    }
    case Experiment::ConvergenceRateSweep:
      target = product(traj.final_state()).W;
      break;
    default:
      target = pca_solution(ed.data.X(), cfg.r).projector;
  }
  std::vector<double> dist;
  MatrixTrajectory<double> products;
  for (std::size_t s = 0; s < traj.size(); ++s) {
    const Mx W = product(traj.states[s]).W;
    dist.push_back((W - target).norm());
    products.times.push_back(traj.times[s]);
    products.states.push_back(W);
    products.diagnostics.push_back(traj.diagnostics[s]);
  }

  rep.reports.push_back(check_conserved(traj, cfg.checks.conserved_drift));
  rep.reports.push_back(check_monotone_loss(traj, cfg.checks.loss_increment));
  // The pathological product decays to zero, so its numerical rank cannot stay put.
  if (spec.kind == InitKind::OrthogonalBalanced || spec.kind == InitKind::BalancedFromProduct) {
    rep.reports.push_back(check_rank_constant(products));
  }
  // For d > 1 rounding errors grow away from the exact trajectory at rate
  // e^{lambda_2 t}, so the comparison is only meaningful in one dimension.
  if (spec.kind == InitKind::PathologicalAutoencoder && cfg.d == 1) {
    rep.reports.push_back(closed_form_regression(traj, ed.data, ClosedFormFamily::PathologicalScalar,
                                                 cfg.checks.closed_form));
  }
  if (const auto thr = dist_threshold(cfg)) {
    InvariantReport r;
    r.name = "dist_to_target";
    r.max_violation = dist.back();
    r.threshold = *thr;
    r.passed = r.max_violation <= r.threshold;
    r.worst_time = traj.times.back();
    rep.reports.push_back(r);
  }
  if (cfg.experiment == Experiment::ConvergenceRateSweep) {
    std::vector<double> t(traj.times.begin(), traj.times.end());
    rep.convergence_rate = fitted_rate(t, dist);
  }

  const auto& fd = traj.final_diagnostics();
  rep.final = {fd.loss, dist.back(), fd.balance_residual, fd.rank_estimate};

  write_file(dir / "trajectory.csv", trajectory_csv(traj, dist));
  rep.files.push_back((dir / "trajectory.csv").string());
  if (cfg.svg) {
    std::vector<double> t(traj.times.begin(), traj.times.end()), loss, rhs;
    for (const auto& d : traj.diagnostics) {
      loss.push_back(d.loss);
      rhs.push_back(d.rhs_norm);
    }
    write_file(dir / "trajectory.svg",
               line_chart_svg(std::string(to_string(cfg.experiment)) + " (log10 scale)", t,
                              {{"loss", loss}, {"rhs_norm", rhs}, {"dist_to_target", dist}}, true));
    rep.files.push_back((dir / "trajectory.svg").string());
  }
  rep.files.push_back((dir / "report.json").string());
  write_file(dir / "report.json", rep.to_json().dump(2) + "\n");
  return rep;
}

CriticalTable run_critical(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto ed = make_data(cfg);
  const auto qd = compute_Q(ed.data);
  const Index kmax_allowed = std::min(ed.data.dx(), ed.data.dy());
  const Index k_max = cfg.k_max < 0 ? kmax_allowed : cfg.k_max;
  if (k_max > kmax_allowed) throw ConfigError("k_max exceeds min(d_x, d_y)");

  CriticalTable out;
  out.csv = "k,J,loss,kind,ambiguous,j0,j1,second_derivative,measured_second_derivative\n";
  json levels = json::array();
  std::vector<double> sigma(qd.svd.sigma.data(), qd.svd.sigma.data() + qd.svd.sigma.size());
  for (Index k = cfg.k_min; k <= k_max; ++k) {
    const auto pts = enumerate_critical_points(qd, k);
    json level = {{"k", k}, {"count", pts.size()}};
    if (k > qd.q) level["note"] = "k exceeds rank(Q) = " + std::to_string(qd.q) + ": no critical points";
    if (k == qd.q && k > 0) level["note"] = "k = rank(Q): every critical point is a global minimizer on M_k";
    levels.push_back(level);
    for (const auto& cp : pts) {
      std::string J;
      for (std::size_t i = 0; i < cp.J.size(); ++i) J += (i ? " " : "") + std::to_string(cp.J[i]);
      out.csv += std::to_string(k) + ',' + J + ',' + fmt17(cp.loss) + ',' + to_string(cp.kind) + ',' +
                 (cp.ambiguous ? "1" : "0") + ',';
      if (cp.certificate) {
        const auto& c = *cp.certificate;
        out.csv += std::to_string(c.j0) + ',' + std::to_string(c.j1) + ',' + fmt17(c.second_derivative) + ',' +
                   fmt17(saddle_curve_check(c, ed.data)) + '\n';
      } else {
        out.csv += ",,,\n";
      }
    }
  }
  out.notes = {{"q", qd.q},
               {"sigma", sigma},
               {"trace_yy", qd.trace_yy},
               {"indices", "zero-based into the singular values of Q, descending"},
               {"levels", levels},
               {"zero_point", "W = 0 is a strict saddle of L^N for N = 2 and not strict for N >= 3"}};
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  write_file(dir / "critical.csv", out.csv);
  write_file(dir / "critical.json", out.notes.dump(2) + "\n");
  return out;
}

json run_metric_check(const MetricCheckOptions& opt) {
  if (opt.dy < 1 || opt.dx < 1 || opt.trials < 0 || opt.layers.empty()) {
    throw ConfigError("metric-check: need positive dims, trials >= 0 and at least one N");
  }
  for (int N : opt.layers) {
    if (N < 2) throw ConfigError("metric-check: every N must be >= 2");
  }
  Rng rng(opt.seed);
  const Index kmax = std::min(opt.dx, opt.dy);
  const std::size_t nl = opt.layers.size();
  json trials = json::array();
  double max_q = 0, max_c = 0;
  bool positive = true, ok = true;
  for (int t = 0; t < opt.trials; ++t) {
    const int N = opt.layers[std::size_t(t) % nl];
    const Index k = 1 + Index(std::size_t(t) / nl) % kmax;
    const Mx W = gaussian_matrix<double>(opt.dy, k, 1.0, rng) * gaussian_matrix<double>(k, opt.dx, 1.0, rng);
    const Mx Z1 = tangent_project(W, gaussian_matrix<double>(opt.dy, opt.dx, 1.0, rng));
    const Mx Z2 = tangent_project(W, gaussian_matrix<double>(opt.dy, opt.dx, 1.0, rng));
    json tr = {{"trial", t}, {"N", N}, {"k", k}};
    try {
      const double gs = metric_g_solve(W, Z1, Z2, N);
      const double gs11 = metric_g_solve(W, Z1, Z1, N), gs22 = metric_g_solve(W, Z2, Z2, N);
      const double scale = std::sqrt(gs11 * gs22);
      const double gq = metric_g_quadrature(W, Z1, Z2, N);
      const double gq11 = metric_g_quadrature(W, Z1, Z1, N);
      const double dq = std::abs(gq - gs) / scale;
      tr["g_solve"] = gs;
      tr["g_quadrature"] = gq;
      tr["dev_quadrature_vs_solve"] = dq;
      max_q = std::max(max_q, dq);
      if (N == 2) {
        const double dc = std::abs(metric_g_N2(W, Z1, Z2) - gs) / scale;
        tr["dev_closed_form_vs_solve"] = dc;
        max_c = std::max(max_c, dc);
      }
      const bool pos = gs11 > 0 && gq11 > 0;
      tr["g_zz_positive"] = pos;
      positive = positive && pos;
    } catch (const AccuracyError& e) {
      tr["error"] = e.what();
      ok = false;
    }
    trials.push_back(tr);
  }
  double id_dev = 0;
  if (opt.dx == opt.dy) {
    const Mx I = Mx::Identity(opt.dx, opt.dx);
    const Mx Z1 = gaussian_matrix<double>(opt.dx, opt.dx, 1.0, rng);
    const Mx Z2 = gaussian_matrix<double>(opt.dx, opt.dx, 1.0, rng);
    for (int N : opt.layers) {
      const double expect = Z1.cwiseProduct(Z2).sum() / N;
      id_dev = std::max(id_dev, std::abs(metric_g_quadrature(I, Z1, Z2, N) - expect) / (Z1.norm() * Z2.norm() / N));
    }
  }
  const bool passed = ok && positive && max_q <= opt.tolerance && max_c <= opt.tolerance && id_dev <= 1e-10;
  return {{"dims", {opt.dy, opt.dx}},
          {"N", opt.layers},
          {"seed", opt.seed},
          {"tolerance", opt.tolerance},
          {"max_dev_quadrature_vs_solve", max_q},
          {"max_dev_closed_form_vs_solve", max_c},
          {"identity_max_dev", id_dev},
          {"all_positive", positive},
          {"passed", passed},
          {"trials", trials}};
}

}  // namespace linflow
