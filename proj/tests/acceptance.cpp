// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.
//
//   acceptance [--work DIR] [A1 A5 ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsoftmax/analysis.hpp"
#include "tsoftmax/asymptotics.hpp"
#include "tsoftmax/binary.hpp"
#include "tsoftmax/closure.hpp"
#include "tsoftmax/commands.hpp"
#include "tsoftmax/inputs.hpp"
#include "tsoftmax/io.hpp"
#include "tsoftmax/numerics.hpp"
#include "tsoftmax/sim.hpp"

using namespace tsoftmax;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records a named check; the line fails if any check fails.
  void check(const std::string& name, bool ok, double value, const std::string& want) {
    pass = pass && ok;
    detail << (detail.tellp() > 0 ? "; " : "") << name << "=" << value << " (" << want << ")"
           << (ok ? "" : " MISS");
  }
  void note(const std::string& text) { detail << (detail.tellp() > 0 ? "; " : "") << text; }
};

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }
bool within_rel(double value, double target, double rel) {
  return std::abs(value - target) <= rel * std::abs(target);
}
std::string pm(double target, double tol) {
  std::ostringstream s;
  s << target << " +- " << tol;
  return s.str();
}

std::vector<std::uint64_t> seeds_upto(int n) {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= n; ++i) s.push_back(static_cast<std::uint64_t>(i));
  return s;
}

double slope(const EnsembleSummary& s, const std::string& column, double lo, double hi) {
  return fit_loglog_slope(s.alpha, s.mean_series(column), lo, hi).slope;
}

SimConfig softmax_config(int N, int K, const Schedule& schedule, double alpha_max, int seeds) {
  SimConfig c;
  c.N = N;
  c.K = K;
  c.input_model = InputModel::isotropic(N);
  c.schedule = schedule;
  c.alpha_max = alpha_max;
  c.seeds = seeds_upto(seeds);
  return c;
}

// The K = 3, N = 500, eta = 0.5, six-seed reference ensemble shared by A1, A6, A7, A8.
const EnsembleSummary& reference_ensemble() {
  static std::optional<EnsembleSummary> cached;
  if (!cached) cached = run_ensemble(softmax_config(500, 3, Schedule::constant(0.5), 1e4, 6)).summary;
  return *cached;
}

Outcome a1() {
  Outcome o;
  const auto& s = reference_ensemble();
  const double dslope = slope(s, "D", 1e2, 1e4);
  const double eslope = slope(s, "eps_g", 1e2, 1e4);
  o.check("D slope", within(dslope, 1.0 / 3, 0.05), dslope, pm(1.0 / 3, 0.05));
  o.check("eps_g slope", within(eslope, -1.0 / 3, 0.07), eslope, pm(-1.0 / 3, 0.07));
  const double ds = delta_star(0.5);
  double worst = 0.0;
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    if (s.alpha[i] < 1e3) continue;
    worst = std::max(worst, std::abs(s.mean(i, "Delta") / ds - 1.0));
  }
  o.check("max |Delta/Delta* - 1| last decade", worst <= 0.15, worst, "<= 0.15");
  return o;
}

Outcome a2() {
  Outcome o;
  auto c = softmax_config(500, 3, Schedule::shifted_powerlaw(2.0, 200.0, 0.5), 1e4, 6);
  const auto s = run_ensemble(c).summary;
  const double eslope = slope(s, "eps_g", 1e3, 1e4);
  o.check("eps_g slope", within(eslope, -0.417, 0.07), eslope, pm(-0.417, 0.07));
  double worst = 0.0;
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    if (s.alpha[i] < 1e3) continue;
    worst = std::max(worst, std::abs(s.mean(i, "Delta") / eta_at(c.schedule, s.alpha[i]) / kKappa - 1));
  }
  o.check("max |Delta/(eta kappa) - 1| last decade", worst <= 0.25, worst, "<= 0.25");
  return o;
}

// Pr(|u1 - u2| < delta, u1 and u2 above all others) ~ 2 delta c_K. Conditioning
// on u1 and on the largest of the others, the u2 integral is exact:
//   1{u1 > m} [Phi(u1 + delta) - Phi(max(u1 - delta, m))]^+,
// which removes the hit-or-miss variance. The raw hit rate is reported too.
Outcome a3() {
  Outcome o;
  const double c2 = boundary_density(2), c3 = boundary_density(3);
  o.check("|c_2 - 1/(2 sqrt pi)|", std::abs(c2 - 0.5 / std::sqrt(kPi)) <= 1e-8,
          std::abs(c2 - 0.5 / std::sqrt(kPi)), "<= 1e-8");
  o.check("|c_3 - 1/(4 sqrt pi)|", std::abs(c3 - 0.25 / std::sqrt(kPi)) <= 1e-8,
          std::abs(c3 - 0.25 / std::sqrt(kPi)), "<= 1e-8");
  const double delta = 1e-3;
  const std::int64_t samples = 100000000;
  for (int K : {2, 3, 5}) {
    Rng rng(RngStream{2024, "boundary-oracle", static_cast<std::uint64_t>(K)});
    RunningStats conditional;
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < samples; ++i) {
      const double u1 = rng.normal();
      const double u2 = rng.normal();
      double m = -std::numeric_limits<double>::infinity();
      for (int a = 2; a < K; ++a) m = std::max(m, rng.normal());
      double p = 0.0;
      if (u1 > m) {
        const double lower = std::max(u1 - delta, m);
        p = std::max(0.0, std_normal_cdf(u1 + delta) - (std::isinf(lower) ? 0.0 : std_normal_cdf(lower)));
      }
      conditional.add(p);
      if (std::abs(u1 - u2) < delta && std::min(u1, u2) > m) ++hits;
    }
    const double cK = boundary_density(K);
    const double est = conditional.mean() / (2 * delta);
    const double raw = static_cast<double>(hits) / static_cast<double>(samples) / (2 * delta);
    o.check("K=" + std::to_string(K) + " MC/quadrature - 1", within_rel(est, cK, 0.01), est / cK - 1,
            "|.| <= 0.01");
    std::ostringstream n;
    n << "K=" << K << " hit-or-miss ratio " << raw / cK << " (info)";
    o.note(n.str());
  }
  return o;
}

Outcome a4() {
  Outcome o;
  const double b0 = 2 * std::log(2.0) - 1;
  o.check("|B(0) - (2log2-1)|", std::abs(script_B(0.0) - b0) <= 1e-12, std::abs(script_B(0.0) - b0), "<= 1e-12");
  const double e = std::abs(script_B(0.01) - b0 - 0.005);
  o.check("|B(0.01) - (2log2-1) - 0.005|", e <= 1e-4, e, "<= 1e-4");
  double worst = 0.0;
  for (double eta : {0.01, 0.1, 0.5, 1.0, 2.0}) {
    const double ds = delta_star(eta);
    worst = std::max(worst, std::abs(2 * ds - eta * script_B(ds)));
  }
  o.check("max delta_star residual", worst <= 1e-12, worst, "<= 1e-12");
  const double ratio = delta_star(1e-3) / 1e-3;
  o.check("Delta*(1e-3)/1e-3 / kappa - 1", within_rel(ratio, kKappa, 0.01), ratio / kKappa - 1, "|.| <= 0.01");
  return o;
}

Outcome a5() {
  Outcome o;
  ClosureEstimatorConfig est;
  est.samples = 10000000;
  est.stream = RngStream{7, "a5", 0};
  const auto exact = closure_rhs(50.0, 0.2, 0.5, 3, est);
  const auto asym = asymptotic_rhs(50.0, 0.2, 0.5, 3);
  o.check("dD exact/asymptotic - 1", within_rel(exact.dD, asym.dD, 0.10), exact.dD / asym.dD - 1, "|.| <= 0.10");
  o.check("dDelta exact/asymptotic - 1", within_rel(exact.dDelta, asym.dDelta, 0.10),
          exact.dDelta / asym.dDelta - 1, "|.| <= 0.10");

  ClosureEstimatorConfig flow_est;
  flow_est.samples = 100000;
  flow_est.stream = RngStream{7, "a5-flow", 0};
  FlowOptions opt;
  opt.fill_observables = false;
  const auto curve = integrate_flow(5.0, delta_star(0.5), Schedule::constant(0.5), {1e4}, 3, flow_est, opt);
  const double predicted = fixed_eta_prediction(3, 0.5, {1e4}).rows.front().D;
  const double D = curve.rows.back().D;
  o.check("D(1e4) flow/prediction - 1", within_rel(D, predicted, 0.05), D / predicted - 1, "|.| <= 0.05");
  return o;
}

Outcome a6() {
  Outcome o;
  const auto& s = reference_ensemble();
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    if (std::abs(std::log(s.alpha[i])) < std::abs(std::log(s.alpha[start]))) start = i;
  }
  std::vector<double> grid;
  std::vector<std::size_t> index;
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    if (s.alpha[i] >= 10 && s.alpha[i] <= 1e3 * (1 + 1e-12)) {
      grid.push_back(s.alpha[i]);
      index.push_back(i);
    }
  }
  ClosureEstimatorConfig est;
  est.samples = 100000;
  est.stream = RngStream{7, "a6", 0};
  FlowOptions opt;
  opt.alpha_start = s.alpha[start];
  opt.fill_observables = false;
  const auto curve = integrate_flow(s.mean(start, "D"), s.mean(start, "Delta"), Schedule::constant(0.5), grid, 3,
                                    est, opt);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    worst = std::max(worst, std::abs(curve.rows[k].D / s.mean(index[k], "D") - 1));
  }
  o.check("max |D theory/sim - 1| on [10, 1e3]", worst <= 0.05, worst, "<= 0.05");
  return o;
}

Outcome a7() {
  Outcome o;
  const auto& s = reference_ensemble();
  const double gamma3 = asymptotic_constants(3).Gamma_K;
  double worst = 0.0;
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    if (s.alpha[i] < 1e3) continue;
    const double law = gamma3 * std::sqrt(s.mean(i, "Delta")) / s.mean(i, "D");
    worst = std::max(worst, std::abs(s.mean(i, "eps_g") / law - 1));
  }
  o.check("max |eps_g/(Gamma_3 sqrt(Delta)/D) - 1| for alpha >= 1e3", worst <= 0.20, worst, "<= 0.20");
  ClosureEstimatorConfig est;
  est.samples = 1000000;
  est.stream = RngStream{7, "a7", 0};
  const auto obs = theory_observables(10.0, 0.1, 3, est);
  const double law = gamma3 * std::sqrt(0.1) / 10.0;
  o.check("theory_observables(10, 0.1)/law - 1", within_rel(obs.eps_g, law, 0.15), obs.eps_g / law - 1,
          "|.| <= 0.15");
  return o;
}

Outcome a8() {
  Outcome o;
  const auto& s = reference_ensemble();
  const double lslope = slope(s, "test_loss", 1e2, 1e4);
  o.check("test_loss slope", within(lslope, -1.0 / 3, 0.07), lslope, pm(-1.0 / 3, 0.07));
  double lo = 1e300, hi = 0.0;
  for (std::size_t i = 0; i < s.alpha.size(); ++i) {
    if (s.alpha[i] < 1e3) continue;
    const double r = s.mean(i, "test_loss") / asymptotic_test_loss(3, s.mean(i, "D"), s.mean(i, "Delta"));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  o.check("min late loss ratio", lo >= 0.8, lo, ">= 0.8");
  o.check("max late loss ratio", hi <= 1.2, hi, "<= 1.2");
  return o;
}

Outcome a9() {
  Outcome o;
  double worst = 0.0;
  for (double eta : {0.1, 0.5, 1.0}) worst = std::max(worst, std::abs(reduced_functions(s_star(eta), eta).r3));
  o.check("max |r3(s*)|", worst < 1e-10, worst, "< 1e-10");

  BinaryRunConfig c;
  c.N = 500;
  c.schedule = Schedule::constant(0.5);
  c.alpha_max = 1e4;
  std::vector<double> alpha, Q, eps;
  const int seeds = 3;
  for (int seed = 1; seed <= seeds; ++seed) {
    const auto t = run_binary_online(c, static_cast<std::uint64_t>(seed));
    if (t.diverged) throw NumericalError("binary run diverged");
    if (alpha.empty()) {
      for (const auto& r : t.rows) alpha.push_back(r.alpha);
      Q.assign(alpha.size(), 0.0);
      eps.assign(alpha.size(), 0.0);
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      Q[i] += t.rows[i].state.Q / seeds;
      eps[i] += t.rows[i].eps_g / seeds;
    }
  }
  const double qs = fit_loglog_slope(alpha, Q, 1e3, 1e4).slope;
  const double es = fit_loglog_slope(alpha, eps, 1e3, 1e4).slope;
  o.check("Q slope", within(qs, 2.0 / 3, 0.07), qs, pm(2.0 / 3, 0.07));
  o.check("eps_g slope", within(es, -1.0 / 3, 0.07), es, pm(-1.0 / 3, 0.07));

  // Start at Q = 1e4 off the fixed point and follow the flow.
  const double eta = 0.5, Q0 = 1e4, s0 = 4 * s_star(eta);
  const BinaryState start{(1 - s0 / Q0) * std::sqrt(Q0), Q0};
  std::vector<double> grid;
  for (double a = 1.0; a <= 1e7; a *= std::pow(10.0, 0.25)) grid.push_back(a);
  const auto flow = integrate_binary_flow(start, Schedule::constant(eta), 0.0, grid);
  // Near s* the reduced drift vanishes and the relative comparison is ill-posed;
  // points with |s - s*| < 0.25 s* are skipped.
  double worst_rel = 0.0;
  int used = 0;
  for (const auto& row : flow) {
    const double s = row.state.Q * row.state.r();
    if (row.state.Q < 1e4 || std::abs(s - s_star(eta)) < 0.25 * s_star(eta)) continue;
    const double lhs = binary_dr_dalpha(row.state, eta) * std::pow(row.state.Q, 1.5);
    const double rhs = reduced_functions(s, eta).r3;
    worst_rel = std::max(worst_rel, std::abs(lhs / rhs - 1));
    ++used;
  }
  o.check("flow points compared", used >= 5, used, ">= 5");
  o.check("max |(dr/dalpha) Q^1.5 / r3 - 1|", worst_rel <= 0.05, worst_rel, "<= 0.05");
  return o;
}

Outcome a10() {
  Outcome o;
  std::map<int, std::optional<double>> entry;
  for (int K : {5, 20}) {
    const auto s = run_ensemble(softmax_config(200, K, Schedule::constant(1.0), 1e4, 3)).summary;
    const double ds = slope(s, "D", 1e3, 1e4);
    o.check("K=" + std::to_string(K) + " D slope", within(ds, 1.0 / 3, 0.07), ds, pm(1.0 / 3, 0.07));
    entry[K] = power_law_entry_alpha(s.alpha, s.mean_series("eps_g"), -1.0 / 3 - 0.07, -1.0 / 3 + 0.07);
    o.check("K=" + std::to_string(K) + " entry alpha", entry[K].has_value(), entry[K].value_or(-1), "found");
  }
  o.check("entry(K=20) > entry(K=5)", entry[5] && entry[20] && *entry[20] > *entry[5],
          entry[20].value_or(-1) / entry[5].value_or(1), "ratio > 1");
  return o;
}

Outcome a11() {
  Outcome o;
  std::map<double, std::optional<double>> entry;
  // With beta = 1 the slowest input directions (variance ~ 0.02) keep eps_g
  // steeper than -1/3 until alpha ~ 1e5, so that run is taken to 1e6. At
  // eps_g ~ 1e-3 the default 1e5 test samples leave ~10% noise per point, hence
  // the larger evaluation set. A single seed keeps the cost near half an hour.
  struct Arm {
    double beta;
    double alpha_max;
    int seeds;
    std::int64_t test_samples;
  };
  for (const Arm arm : {Arm{0.0, 1e4, 3, 100000}, Arm{1.0, 1e6, 1, 1000000}}) {
    auto c = softmax_config(500, 3, Schedule::constant(0.5), arm.alpha_max, arm.seeds);
    c.input_model = InputModel::powerlaw(500, arm.beta, 10.0);
    c.test_samples = arm.test_samples;
    const auto s = run_ensemble(c).summary;
    const std::string tag = "beta=" + std::to_string(static_cast<int>(arm.beta));
    const double es = slope(s, "eps_g", arm.alpha_max / 10, arm.alpha_max);
    o.check(tag + " late eps_g slope", within(es, -1.0 / 3, 0.1), es, pm(-1.0 / 3, 0.1));
    entry[arm.beta] = power_law_entry_alpha(s.alpha, s.mean_series("eps_g"), -0.43, -0.23);
    o.check(tag + " entry alpha", entry[arm.beta].has_value(), entry[arm.beta].value_or(-1), "found");
  }
  o.check("entry(beta=1) > entry(beta=0)", entry[0.0] && entry[1.0] && *entry[1.0] > *entry[0.0],
          entry[1.0].value_or(-1) / entry[0.0].value_or(1), "ratio > 1");
  return o;
}

Outcome a12(const fs::path& work) {
  Outcome o;
  const int N = 200;
  const Eigen::Index rows = 1000000;
  const fs::path dir = work / "a12";
  fs::create_directories(dir);
  const fs::path file = dir / "gaussian.f32";
  {
    FeatureDataset ds;
    ds.features.resize(rows, N);
    Rng rng(RngStream{99, "a12-features", 0});
    for (Eigen::Index i = 0; i < ds.features.size(); ++i) ds.features.data()[i] = static_cast<float>(rng.normal());
    save_features_raw(ds, file);
  }
  ExperimentConfig c;
  c.name = "replay";
  c.output_dir = dir.string();
  c.features = file.string();
  c.labels = "teacher";
  c.N = N;
  c.K = 3;
  // Unscaled logits: eta / N here matches eta with 1/sqrt(N) logits.
  c.schedule = Schedule::constant(0.5 / N);
  c.alpha_max = 1e4;
  c.seeds = seeds_upto(3);
  const auto out = cmd_replay(c);
  fs::remove(file);
  const auto table = read_csv(dir / "replay_summary.csv");
  const double replay = fit_loglog_slope(table.column("alpha"), table.column("eps_g_mean"), 1e3, 1e4).slope;
  const auto s = run_ensemble(softmax_config(N, 3, Schedule::constant(0.5), 1e4, 3)).summary;
  const double memory = slope(s, "eps_g", 1e3, 1e4);
  o.check("replay eps_g slope", true, replay, "info");
  o.check("in-memory eps_g slope", true, memory, "info");
  o.check("|slope difference|", std::abs(replay - memory) <= 0.1, std::abs(replay - memory), "<= 0.1");
  o.note("replay epochs (seed 1) " + out.metadata.at("runs").at(0).at("replay_epochs").dump());
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_work";
  std::vector<std::string> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("criteria", only, "Subset to run, e.g. A1 A5");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4},  {"A5", a5},   {"A6", a6},
      {"A7", a7}, {"A8", a8}, {"A9", a9}, {"A10", a10}, {"A11", a11}, {"A12", [&] { return a12(work); }}};

  // Passing ctest runs do not echo output, so the lines are also kept on disk.
  std::ofstream report(fs::path(work) / "acceptance_report.txt", std::ios::trunc);
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome result;
    try {
      result = run();
    } catch (const std::exception& e) {
      result.pass = false;
      result.note(std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char head[64];
    std::snprintf(head, sizeof head, "%s %s [%.0fs] ", id.c_str(), result.pass ? "PASS" : "FAIL", secs);
    const std::string line = head + result.detail.str();
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    report << line << std::endl;
    if (!result.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
