#include "tsoftmax/commands.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "tsoftmax/analysis.hpp"
#include "tsoftmax/asymptotics.hpp"
#include "tsoftmax/binary.hpp"
#include "tsoftmax/closure.hpp"
#include "tsoftmax/error.hpp"
#include "tsoftmax/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tsoftmax {

namespace {

fs::path output_file(const ExperimentConfig& c, const std::string& suffix) {
  return fs::path(c.output_dir) / (c.name + suffix);
}

std::string eta_tag(double v) {
  std::ostringstream out;
  out << v;
  return out.str();
}

json base_metadata(const std::string& command, const ExperimentConfig& c) {
  return json{{"command", command},
              {"version", kVersion},
              {"compiler", __VERSION__},
              {"config", c},
              {"seeds", c.seeds}};
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << std::setprecision(17) << j.dump(2) << '\n';
  if (!out) throw ConfigError("write failed for " + path.string());
}

std::pair<double, double> fit_window(const ExperimentConfig& c) {
  return {c.fit_lo.value_or(c.alpha_max / 10.0), c.fit_hi.value_or(c.alpha_max)};
}

json fit_to_json(const std::vector<double>& x, const std::vector<double>& y, double lo,
                 double hi) {
  try {
    const auto f = fit_loglog_slope(x, y, lo, hi);
    return {{"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
            {"points", f.points}, {"lo", lo}, {"hi", hi}};
  } catch (const EstimationError& e) {
    return {{"error", e.what()}, {"lo", lo}, {"hi", hi}};
  }
}

json summary_fits(const EnsembleSummary& s, const ExperimentConfig& c, bool has_order_params) {
  const auto [lo, hi] = fit_window(c);
  json fits;
  std::vector<std::string> cols{"eps_g", "test_loss"};
  if (has_order_params) cols.insert(cols.end(), {"D", "Delta", "Q"});
  for (const auto& col : cols) fits[col] = fit_to_json(s.alpha, s.mean_series(col), lo, hi);
  return fits;
}

json diagnostics_json(const Diagnostics& d) { return d.warnings; }

template <class F>
void parallel_for(std::size_t count, int threads, F&& body) {
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) body(i);
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(count)));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < n; ++t) pool.emplace_back(worker);
}

void write_ensemble(const ExperimentConfig& c, const EnsembleResult& result, CommandOutput& out) {
  for (const auto& t : result.trajectories) {
    const auto path = output_file(c, "_seed" + std::to_string(t.seed) + ".csv");
    write_trajectory_csv(t, path);
    out.files.push_back(path);
  }
  const auto summary_path = output_file(c, "_summary.csv");
  write_summary_csv(result.summary, summary_path);
  out.files.push_back(summary_path);
  json runs = json::array();
  for (const auto& t : result.trajectories) {
    runs.push_back({{"seed", t.seed}, {"status", t.status}, {"diverged", t.diverged},
                    {"checkpoints", t.rows.size()}, {"replay_epochs", t.replay_epochs}});
  }
  out.metadata["runs"] = runs;
  out.metadata["seeds_used"] = result.summary.seeds_used;
  out.metadata["incomplete"] = result.summary.incomplete;
  out.metadata["diagnostics"] = diagnostics_json(result.diagnostics);
  const bool has_op = result.trajectories.empty() || result.trajectories.front().has_order_params;
  if (result.summary.seeds_used > 0) out.metadata["slope_fits"] = summary_fits(result.summary, c, has_op);
}

void finish_metadata(const ExperimentConfig& c, CommandOutput& out) {
  const auto path = output_file(c, "_metadata.json");
  write_json(out.metadata, path);
  out.files.push_back(path);
}

std::vector<double> theory_grid(const ExperimentConfig& c, double start) {
  std::vector<double> grid;
  for (double a : checkpoint_grid(c.alpha_max, c.checkpoints_per_decade, c.N, c.alpha_start)) {
    if (a >= start) grid.push_back(a);
  }
  return grid;
}

ClosureEstimatorConfig estimator(const ExperimentConfig& c) {
  ClosureEstimatorConfig est;
  est.samples = c.closure_samples;
  est.stream = RngStream{c.theory_seed, "closure", 0};
  est.antithetic = c.antithetic;
  est.exact_k2 = c.exact_k2;
  return est;
}

}  // namespace

CommandOutput cmd_simulate(const ExperimentConfig& config) {
  config.validate();
  ensure_output_dir(config.output_dir);
  CommandOutput out;
  out.metadata = base_metadata("simulate", config);
  const auto result = run_ensemble(to_sim_config(config), config.threads);
  write_ensemble(config, result, out);
  finish_metadata(config, out);
  return out;
}

CommandOutput cmd_theory(const ExperimentConfig& config) {
  config.validate();
  ensure_output_dir(config.output_dir);
  CommandOutput out;
  out.metadata = base_metadata("theory", config);

  double D0 = config.D0;
  double Delta0 = config.Delta0;
  double start = 0.0;
  if (!config.calibrate_csv.empty()) {
    if (!config.calibrate_alpha) throw ConfigError("calibrate_alpha: required with calibrate_csv");
    const auto table = read_csv(config.calibrate_csv);
    const auto alpha = table.column("alpha");
    const auto D = table.column("D_mean");
    const auto Delta = table.column("Delta_mean");
    if (alpha.empty()) throw ConfigError("calibrate_csv: no rows");
    std::size_t best = 0;
    for (std::size_t i = 1; i < alpha.size(); ++i) {
      if (std::abs(std::log(alpha[i] / *config.calibrate_alpha)) <
          std::abs(std::log(alpha[best] / *config.calibrate_alpha))) {
        best = i;
      }
    }
    start = alpha[best];
    D0 = std::max(D[best], 0.0);
    Delta0 = std::max(Delta[best], 0.0);
    out.metadata["calibration"] = {{"alpha", start}, {"D", D0}, {"Delta", Delta0}};
  }
  FlowOptions options;
  options.alpha_start = start;
  options.abs_tol = config.ode_abs_tol;
  options.rel_tol = config.ode_rel_tol;
  options.observable_samples = config.observable_samples;
  const auto grid = theory_grid(config, start);
  if (grid.empty()) throw ConfigError("alpha grid is empty after the start point");
  TheoryCurve curve;
  try {
    curve = integrate_flow(D0, Delta0, config.schedule, grid, config.K, estimator(config), options);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("theory integration failed: ") + e.what());
  }
  const auto path = output_file(config, "_theory.csv");
  write_theory_csv(curve, path);
  out.files.push_back(path);
  out.metadata["start"] = {{"alpha", start}, {"D", D0}, {"Delta", Delta0}};
  out.metadata["diagnostics"] = diagnostics_json(curve.diagnostics);
  std::vector<double> a, eps, D;
  for (const auto& r : curve.rows) {
    a.push_back(r.alpha);
    eps.push_back(r.eps_g);
    D.push_back(r.D);
  }
  const auto [lo, hi] = fit_window(config);
  out.metadata["slope_fits"] = {{"eps_g", fit_to_json(a, eps, lo, hi)},
                                {"D", fit_to_json(a, D, lo, hi)}};
  finish_metadata(config, out);
  return out;
}

CommandOutput cmd_predict(const ExperimentConfig& config) {
  config.validate();
  ensure_output_dir(config.output_dir);
  CommandOutput out;
  out.metadata = base_metadata("predict", config);
  const auto constants = asymptotic_constants(config.K);
  const auto constants_path = output_file(config, "_constants.json");
  write_json(json(constants), constants_path);
  out.files.push_back(constants_path);

  const auto grid = theory_grid(config, 1e-300);
  if (config.schedule.kind == ScheduleKind::constant && config.schedule.eta0 > 0.0) {
    const auto curve = fixed_eta_prediction(config.K, config.schedule.eta0, grid);
    const auto path = output_file(config, "_fixed_eta.csv");
    write_theory_csv(curve, path);
    out.files.push_back(path);
    out.metadata["delta_star"] = delta_star(config.schedule.eta0);
  }
  const auto prediction = schedule_prediction(config.K, config.schedule, grid);
  const auto path = output_file(config, "_schedule.csv");
  write_theory_csv(prediction.curve, path);
  out.files.push_back(path);
  out.metadata["constants"] = constants;
  out.metadata["validity"] = prediction.valid;
  out.metadata["slope"] = prediction.slope;
  out.metadata["diagnostics"] = diagnostics_json(prediction.curve.diagnostics);
  finish_metadata(config, out);
  return out;
}

CommandOutput cmd_binary(const ExperimentConfig& config) {
  config.validate();
  ensure_output_dir(config.output_dir);
  CommandOutput out;
  out.metadata = base_metadata("binary", config);
  BinaryRunConfig run;
  run.N = config.N;
  run.schedule = config.schedule;
  run.alpha_max = config.alpha_max;
  run.checkpoints_per_decade = config.checkpoints_per_decade;
  run.alpha_start = config.alpha_start;
  run.test_samples = config.test_samples;
  run.validate();

  std::vector<BinaryTrajectory> runs(config.seeds.size());
  parallel_for(runs.size(), config.threads,
               [&](std::size_t i) { runs[i] = run_binary_online(run, config.seeds[i]); });

  Diagnostics diag;
  std::vector<const BinaryTrajectory*> complete;
  for (const auto& t : runs) {
    const auto path = output_file(config, "_seed" + std::to_string(t.seed) + ".csv");
    write_binary_csv(t, path);
    out.files.push_back(path);
    for (const auto& w : t.diagnostics.warnings) diag.warn("seed " + std::to_string(t.seed) + ": " + w);
    if (t.diverged) {
      diag.warn("seed " + std::to_string(t.seed) + " " + t.status);
    } else {
      complete.push_back(&t);
    }
  }
  if (!complete.empty()) {
    const std::size_t rows = complete.front()->rows.size();
    std::vector<double> alpha(rows), Q(rows, 0.0), rho(rows, 0.0), eps(rows, 0.0);
    for (std::size_t k = 0; k < rows; ++k) {
      alpha[k] = complete.front()->rows[k].alpha;
      for (const auto* t : complete) {
        Q[k] += t->rows[k].state.Q / complete.size();
        rho[k] += t->rows[k].state.rho / complete.size();
        eps[k] += t->rows[k].eps_g / complete.size();
      }
    }
    const auto [lo, hi] = fit_window(config);
    out.metadata["slope_fits"] = {{"Q", fit_to_json(alpha, Q, lo, hi)},
                                  {"eps_g", fit_to_json(alpha, eps, lo, hi)}};
    // Flow from the mean state at the checkpoint nearest alpha = 1.
    std::size_t k1 = 0;
    for (std::size_t k = 0; k < rows; ++k) {
      if (std::abs(std::log(alpha[k])) < std::abs(std::log(alpha[k1]))) k1 = k;
    }
    std::vector<double> grid(alpha.begin() + static_cast<std::ptrdiff_t>(k1), alpha.end());
    const auto flow = integrate_binary_flow({rho[k1], Q[k1]}, config.schedule, alpha[k1], grid);
    BinaryTrajectory flow_traj;
    for (const auto& r : flow) {
      BinaryRow row;
      row.alpha = r.alpha;
      row.eta = eta_at(config.schedule, r.alpha);
      row.state = r.state;
      row.eps_g = r.eps_g;
      row.eps_g_mc = std::nan("");
      row.eps_g_mc_stderr = std::nan("");
      flow_traj.rows.push_back(row);
    }
    const auto flow_path = output_file(config, "_flow.csv");
    write_binary_csv(flow_traj, flow_path);
    out.files.push_back(flow_path);
  }
  if (config.schedule.kind == ScheduleKind::constant && config.schedule.eta0 > 0.0) {
    const double eta = config.schedule.eta0;
    const double s = s_star(eta);
    out.metadata["s_star"] = s;
    out.metadata["c_at_s_star"] = reduced_functions(s, eta).c;
  }
  out.metadata["seeds_used"] = complete.size();
  out.metadata["diagnostics"] = diagnostics_json(diag);
  finish_metadata(config, out);
  return out;
}

CommandOutput cmd_replay(const ExperimentConfig& config) {
  config.validate();
  if (config.features.empty()) throw ConfigError("features: a feature file is required");
  if (!fs::exists(config.features)) throw ConfigError("features: no such file " + config.features);
  ensure_output_dir(config.output_dir);
  CommandOutput out;
  out.metadata = base_metadata("replay", config);

  FeatureDataset data = load_features(config.features);
  const bool provided = config.labels == "provided";
  if (provided && !data.has_labels()) {
    throw ConfigError("labels: provided-label mode needs labels in the feature file");
  }
  if (config.whiten) {
    data = center_and_whiten(std::move(data), config.whiten_epsilon);
  } else if (config.center) {
    data = center_features(std::move(data));
  }
  const Eigen::Index total = data.rows();
  const Eigen::Index test_rows =
      config.test_rows > 0 ? static_cast<Eigen::Index>(config.test_rows)
                           : std::min<Eigen::Index>(100000, total / 10);
  if (test_rows < 1 || test_rows >= total) {
    throw ConfigError("test_rows: need 1 <= test_rows < rows (" + std::to_string(total) + ")");
  }
  auto [train, test] = split_holdout(data, test_rows, RngStream{config.theory_seed, "holdout", 0});
  data = FeatureDataset{};
  const Preprocessing prep = train.preprocessing;
  const int dim = static_cast<int>(train.dimension());
  const int classes = train.num_classes;

  SimConfig sim = to_sim_config(config);
  sim.N = dim;
  if (provided) sim.K = std::max(classes, 2);
  sim.input_model = InputModel::replay(std::make_shared<const FeatureDataset>(std::move(train)));
  sim.test_set = std::make_shared<const FeatureDataset>(std::move(test));
  sim.logit_scaling = LogitScaling::none;
  sim.init = StudentInit::scaled_uniform;
  sim.label_mode = provided ? LabelMode::provided : LabelMode::teacher;

  out.metadata["preprocessing"] = {{"centered", prep.centered}, {"whitened", prep.whitened},
                                   {"epsilon", prep.epsilon}};
  out.metadata["dataset"] = {{"rows", total}, {"train_rows", total - test_rows},
                             {"test_rows", test_rows}, {"N", dim}, {"K", sim.K}};
  if (dim != config.N) {
    out.metadata["note"] = "N taken from the feature file (" + std::to_string(dim) + ")";
  }
  const auto result = run_ensemble(sim, config.threads);
  write_ensemble(config, result, out);
  finish_metadata(config, out);
  return out;
}

json cmd_constants(int K) {
  if (K < 2) throw ConfigError("K: must be >= 2");
  return json(asymptotic_constants(K));
}

json cmd_slope_fit(const fs::path& csv, const std::string& x, const std::string& y, double lo,
                   double hi) {
  if (!(lo > 0.0 && hi > lo)) throw ConfigError("window: need 0 < lo < hi");
  const auto table = read_csv(csv);
  const auto xs = table.column(x);
  const auto ys = table.column(y);
  const auto f = fit_loglog_slope(xs, ys, lo, hi);
  return {{"csv", csv.string()}, {"x", x}, {"y", y}, {"lo", lo}, {"hi", hi},
          {"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
          {"points", f.points}};
}

namespace {

ExperimentConfig bundle(const ExperimentConfig& base, const std::string& figure,
                        const std::string& tag) {
  ExperimentConfig c = base;
  c.output_dir = (fs::path(base.output_dir) / figure).string();
  c.name = tag;
  return c;
}

/// Simulation, calibrated exact closure, and asymptotic prediction for one setting.
json simulate_theory_predict(ExperimentConfig c, CommandOutput& out) {
  json meta;
  auto sim = cmd_simulate(c);
  meta["simulate"] = sim.metadata;
  out.files.insert(out.files.end(), sim.files.begin(), sim.files.end());
  if (c.inputs == "isotropic") {
    ExperimentConfig t = c;
    t.name = c.name + "_closure";
    t.calibrate_csv = output_file(c, "_summary.csv").string();
    t.calibrate_alpha = 1.0;
    auto theory = cmd_theory(t);
    meta["theory"] = theory.metadata;
    out.files.insert(out.files.end(), theory.files.begin(), theory.files.end());
  }
  ExperimentConfig p = c;
  p.name = c.name + "_asymptote";
  auto pred = cmd_predict(p);
  meta["predict"] = pred.metadata;
  out.files.insert(out.files.end(), pred.files.begin(), pred.files.end());
  return meta;
}

}  // namespace

CommandOutput reproduce_fig2(const ExperimentConfig& base) {
  CommandOutput out;
  out.metadata = {{"figure", "fig2"}, {"bundles", json::object()}};
  for (double eta : {1.0, 0.5, 0.1}) {
    auto c = bundle(base, "fig2", "eta_" + eta_tag(eta));
    c.K = 3;
    c.inputs = "isotropic";
    c.schedule = Schedule::constant(eta);
    out.metadata["bundles"][c.name] = simulate_theory_predict(c, out);
  }
  return out;
}

CommandOutput reproduce_fig3(const ExperimentConfig& base) {
  CommandOutput out;
  out.metadata = {{"figure", "fig3"}, {"bundles", json::object()}};
  for (double gamma : {0.0, 0.5, 1.0}) {
    auto c = bundle(base, "fig3", "gamma_" + eta_tag(gamma));
    c.K = 3;
    c.inputs = "isotropic";
    c.schedule = Schedule::shifted_powerlaw(2.0, 200.0, gamma);
    out.metadata["bundles"][c.name] = simulate_theory_predict(c, out);
  }
  return out;
}

CommandOutput reproduce_fig4(const ExperimentConfig& base) {
  CommandOutput out;
  // The eta grid of the fixed-beta panel is not pinned by the reference figure.
  out.metadata = {{"figure", "fig4"},
                  {"beta_panel", {{"eta", 0.5}, {"beta", {0.0, 0.5, 1.0, 1.5}}}},
                  {"eta_panel", {{"beta", 1.0}, {"eta", {1.0, 0.5, 0.1}}}},
                  {"bundles", json::object()}};
  for (double beta : {0.0, 0.5, 1.0, 1.5}) {
    auto c = bundle(base, "fig4", "beta_" + eta_tag(beta) + "_eta_0.5");
    c.K = 3;
    c.inputs = "powerlaw";
    c.beta = beta;
    c.schedule = Schedule::constant(0.5);
    out.metadata["bundles"][c.name] = simulate_theory_predict(c, out);
  }
  for (double eta : {1.0, 0.1}) {
    auto c = bundle(base, "fig4", "beta_1_eta_" + eta_tag(eta));
    c.K = 3;
    c.inputs = "powerlaw";
    c.beta = 1.0;
    c.schedule = Schedule::constant(eta);
    out.metadata["bundles"][c.name] = simulate_theory_predict(c, out);
  }
  return out;
}

CommandOutput reproduce_fig5(const ExperimentConfig& base) {
  if (base.features.empty()) throw ConfigError("features: reproduce-fig5 needs --features");
  CommandOutput out;
  out.metadata = {{"figure", "fig5"}, {"bundles", json::object()}};
  const FeatureDataset probe = load_features(base.features);
  std::vector<std::string> modes{"teacher"};
  if (probe.has_labels()) modes.push_back("provided");
  for (const auto& mode : modes) {
    auto c = bundle(base, "fig5", mode + "_labels");
    c.labels = mode;
    c.K = 3;
    // Without the 1/sqrt(N) logit factor, eta/N matches the Gaussian-run rate eta.
    c.schedule = Schedule::constant(0.5 / static_cast<double>(probe.dimension()));
    if (c.seeds.size() == 6) c.seeds = {1, 2, 3, 4};
    auto r = cmd_replay(c);
    out.metadata["bundles"][c.name] = r.metadata;
    out.files.insert(out.files.end(), r.files.begin(), r.files.end());
  }
  return out;
}

CommandOutput reproduce_ksweep(const ExperimentConfig& base) {
  CommandOutput out;
  out.metadata = {{"figure", "ksweep"}, {"bundles", json::object()}};
  for (int K : {5, 20, 50, 100}) {
    for (double eta : {1.0, 0.1, 0.01}) {
      auto c = bundle(base, "ksweep", "K_" + std::to_string(K) + "_eta_" + eta_tag(eta));
      c.K = K;
      c.N = 200;
      c.inputs = "isotropic";
      c.schedule = Schedule::constant(eta);
      auto sim = cmd_simulate(c);
      out.metadata["bundles"][c.name] = sim.metadata;
      out.files.insert(out.files.end(), sim.files.begin(), sim.files.end());
    }
  }
  return out;
}

}  // namespace tsoftmax
