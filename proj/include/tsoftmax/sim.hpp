#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsoftmax/error.hpp"
#include "tsoftmax/inputs.hpp"
#include "tsoftmax/model.hpp"
#include "tsoftmax/schedule.hpp"

namespace tsoftmax {

/// Where labels come from in a run.
enum class LabelMode { teacher, provided };

/// How test error is estimated for Gaussian inputs: by drawing the 2K jointly
/// Gaussian fields (u, t) from their exact covariance, or by drawing full
/// N-dimensional inputs. Both have the same law; `fields` is O(K^2) per sample.
enum class EvalMode { fields, inputs };

struct SimConfig {
  int N = 500;
  int K = 3;
  InputModel input_model = InputModel::isotropic(500);
  Schedule schedule = Schedule::constant(0.5);
  double alpha_max = 1e4;
  int checkpoints_per_decade = 10;
  /// First checkpoint; 0 means alpha = 1/N (the first update).
  double alpha_start = 0.0;
  std::int64_t test_samples = 100000;
  std::vector<std::uint64_t> seeds = {1};
  LogitScaling logit_scaling = LogitScaling::inv_sqrt_n;
  StudentInit init = StudentInit::standard_normal;
  LabelMode label_mode = LabelMode::teacher;
  EvalMode eval_mode = EvalMode::fields;
  /// Held-out rows used for evaluation of replay runs.
  std::shared_ptr<const FeatureDataset> test_set;

  void validate() const;
};

struct TrajectoryRow {
  double alpha = 0.0;
  double eta = 0.0;
  OrderParams op;
  double eps_g = 0.0;
  double eps_g_stderr = 0.0;
  double test_loss = 0.0;
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<TrajectoryRow> rows;
  /// False when there is no teacher (provided labels); order-parameter columns are absent.
  bool has_order_params = true;
  bool diverged = false;
  std::string status = "ok";
  std::uint64_t replay_epochs = 0;
};

struct GeneralizationEstimate {
  double eps_g = 0.0;
  double eps_g_stderr = 0.0;
  double test_loss = 0.0;
  double test_loss_stderr = 0.0;
};

/// Step counts mu = round(alpha N) of a log-spaced grid anchored at alpha_max,
/// per_decade points per decade down to alpha_start (default 1/N), de-duplicated.
std::vector<std::int64_t> checkpoint_steps(double alpha_max, int per_decade, int N,
                                           double alpha_start = 0.0);

/// The same grid as alpha = mu / N.
std::vector<double> checkpoint_grid(double alpha_max, int per_decade, int N,
                                    double alpha_start = 0.0);

/// Monte Carlo test error and cross-entropy over M fresh Gaussian inputs.
/// `student_scale` multiplies the stored weights before the logit scaling.
GeneralizationEstimate estimate_generalization(const TeacherEnsemble& teacher,
                                               const Student& student, std::int64_t M, Rng& rng,
                                               const InputModel& input_model,
                                               LogitScaling scaling = LogitScaling::inv_sqrt_n,
                                               EvalMode mode = EvalMode::fields);

/// Test error and loss over fixed dataset rows with the given labels.
GeneralizationEstimate estimate_on_rows(const Student& student,
                                        const FeatureDataset::Matrix& features,
                                        const std::vector<int>& labels, LogitScaling scaling);

/// Teacher argmax labels of dataset rows.
std::vector<int> teacher_labels(const TeacherEnsemble& teacher,
                                const FeatureDataset::Matrix& features);

/// Full run: builds teacher and student from the seed's streams.
Trajectory run_online(const SimConfig& config, std::uint64_t seed);

/// Run from a given teacher/student pair. `teacher` may be absent only in
/// provided-label mode.
Trajectory run_online_from(const SimConfig& config, std::uint64_t seed,
                           const std::optional<TeacherEnsemble>& teacher, Student student);

/// Names of the aggregated trajectory columns, in CSV order.
const std::vector<std::string>& trajectory_columns();
double trajectory_value(const TrajectoryRow& row, std::size_t column);

struct ColumnStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  double std = 0.0;
};

struct EnsembleSummary {
  std::vector<double> alpha;
  /// stats[checkpoint][column], columns as in trajectory_columns().
  std::vector<std::vector<ColumnStats>> stats;
  std::size_t seeds_used = 0;
  bool incomplete = false;

  double mean(std::size_t checkpoint, const std::string& column) const;
  std::vector<double> mean_series(const std::string& column) const;
};

EnsembleSummary summarize(const std::vector<Trajectory>& trajectories);

struct EnsembleResult {
  std::vector<Trajectory> trajectories;  // in seed-list order
  EnsembleSummary summary;
  Diagnostics diagnostics;
};

/// Runs every seed (in parallel over `threads` workers) and aggregates.
EnsembleResult run_ensemble(const SimConfig& config, int threads = 1);

/// Streams used by a run with the given seed.
RngStream teacher_stream(std::uint64_t seed);
RngStream student_stream(std::uint64_t seed);

}  // namespace tsoftmax
