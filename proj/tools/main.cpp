#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tsoftmax/commands.hpp"
#include "tsoftmax/error.hpp"

namespace {

using namespace tsoftmax;

/// Flags shared by the experiment subcommands; unset flags keep the config value.
struct Overrides {
  std::string config_path;
  std::optional<std::string> out, name, seeds, features, labels, inputs;
  std::optional<int> threads, N, K, per_decade;
  std::optional<std::int64_t> samples, closure_samples;
  std::optional<double> alpha_max, eta, alpha0, gamma, beta, D0, Delta0, fit_lo, fit_hi;
  bool no_whiten = false;
  bool exact_k2 = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file (or a metadata file)");
    app->add_option("--out", out, "Output directory");
    app->add_option("--name", name, "File name prefix");
    app->add_option("--seeds", seeds, "Seed count n (seeds 1..n) or a comma-separated list");
    app->add_option("--threads", threads, "Worker threads across seeds");
    app->add_option("--samples", samples, "Test samples per checkpoint");
    app->add_option("--N", N, "Input dimension");
    app->add_option("--K", K, "Number of classes");
    app->add_option("--alpha-max", alpha_max, "Final alpha");
    app->add_option("--per-decade", per_decade, "Checkpoints per decade");
    app->add_option("--eta", eta, "Learning rate (eta0 of the schedule)");
    app->add_option("--alpha0", alpha0, "Schedule shift alpha0 (power-law schedule)");
    app->add_option("--gamma", gamma, "Schedule exponent (power-law schedule)");
    app->add_option("--inputs", inputs, "isotropic | powerlaw");
    app->add_option("--beta", beta, "Power-law spectrum exponent");
    app->add_option("--features", features, "Feature file for replay");
    app->add_option("--labels", labels, "teacher | provided");
    app->add_flag("--no-whiten", no_whiten, "Center only, skip whitening");
    app->add_option("--closure-samples", closure_samples, "Monte Carlo samples per closure RHS");
    app->add_flag("--exact-k2", exact_k2, "Quadrature closure for K = 2");
    app->add_option("--D0", D0, "Initial D of the closure flow");
    app->add_option("--Delta0", Delta0, "Initial Delta of the closure flow");
    app->add_option("--fit-lo", fit_lo, "Lower alpha of the slope-fit window");
    app->add_option("--fit-hi", fit_hi, "Upper alpha of the slope-fit window");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (out) c.output_dir = *out;
    if (name) c.name = *name;
    if (seeds) c.seeds = parse_seeds(*seeds);
    if (threads) c.threads = *threads;
    if (samples) c.test_samples = *samples;
    if (N) c.N = *N;
    if (K) c.K = *K;
    if (alpha_max) c.alpha_max = *alpha_max;
    if (per_decade) c.checkpoints_per_decade = *per_decade;
    if (alpha0 || gamma) {
      c.schedule = Schedule::shifted_powerlaw(eta.value_or(c.schedule.eta0),
                                              alpha0.value_or(c.schedule.alpha0),
                                              gamma.value_or(c.schedule.gamma));
    } else if (eta) {
      c.schedule.eta0 = *eta;
    }
    if (inputs) c.inputs = *inputs;
    if (beta) c.beta = *beta;
    if (features) c.features = *features;
    if (labels) c.labels = *labels;
    if (no_whiten) c.whiten = false;
    if (closure_samples) c.closure_samples = *closure_samples;
    if (exact_k2) c.exact_k2 = true;
    if (D0) c.D0 = *D0;
    if (Delta0) c.Delta0 = *Delta0;
    if (fit_lo) c.fit_lo = *fit_lo;
    if (fit_hi) c.fit_hi = *fit_hi;
    c.validate();
    return c;
  }

  static std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    try {
      if (text.find(',') == std::string::npos) {
        const long n = std::stol(text);
        if (n < 1) throw ConfigError("seeds: count must be >= 1");
        for (long i = 1; i <= n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
      } else {
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("seeds: cannot parse '" + text + "'");
    }
    return seeds;
  }
};

void report(const CommandOutput& out) {
  for (const auto& f : out.files) std::cout << f.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online teacher-student softmax learning: simulation, closure, asymptotics"};
  app.require_subcommand(1);

  Overrides ov;
  struct Experiment {
    const char* name;
    const char* help;
    CommandOutput (*run)(const ExperimentConfig&);
  };
  const Experiment experiments[] = {
      {"simulate", "Finite-N online SGD ensemble", cmd_simulate},
      {"theory", "Integrate the exact centered closure", cmd_theory},
      {"predict", "Late-time asymptotic curves and constants", cmd_predict},
      {"binary", "Binary erf-student warmup simulation and flow", cmd_binary},
      {"replay", "Online SGD over a stored feature file", cmd_replay},
      {"reproduce-fig2", "Fixed learning rates", reproduce_fig2},
      {"reproduce-fig3", "Shifted power-law schedules", reproduce_fig3},
      {"reproduce-fig4", "Power-law input spectra", reproduce_fig4},
      {"reproduce-fig5", "Whitened feature replay", reproduce_fig5},
      {"reproduce-ksweep", "Class-count sweep at N = 200", reproduce_ksweep},
  };
  const Experiment* chosen = nullptr;
  for (const auto& e : experiments) {
    auto* sub = app.add_subcommand(e.name, e.help);
    ov.attach(sub);
    sub->callback([&chosen, &e] { chosen = &e; });
  }

  int constants_k = 3;
  auto* constants = app.add_subcommand("constants", "Print c_K, Gamma_K, kappa, A_K as JSON");
  constants->add_option("--K", constants_k, "Number of classes");

  std::string fit_csv, fit_x = "alpha", fit_y = "eps_g_mean";
  double fit_lo = 0.0, fit_hi = 0.0;
  auto* slope = app.add_subcommand("slope-fit", "Log-log least-squares slope of a CSV column");
  slope->add_option("--csv", fit_csv, "CSV file")->required();
  slope->add_option("--x", fit_x, "x column");
  slope->add_option("--y", fit_y, "y column");
  slope->add_option("--lo", fit_lo, "Window start")->required();
  slope->add_option("--hi", fit_hi, "Window end")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (constants->parsed()) {
      std::cout << cmd_constants(constants_k).dump(2) << '\n';
    } else if (slope->parsed()) {
      std::cout << cmd_slope_fit(fit_csv, fit_x, fit_y, fit_lo, fit_hi).dump(2) << '\n';
    } else if (chosen) {
      report(chosen->run(ov.resolve()));
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
