#include "tsoftmax/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <Eigen/Eigenvalues>

#include "tsoftmax/numerics.hpp"

namespace tsoftmax {

namespace {

constexpr double kDivergenceBound = 1e12;
constexpr std::int64_t kGuardInterval = 1024;

}  // namespace

RngStream teacher_stream(std::uint64_t seed) { return {seed, "teacher", 0}; }
RngStream student_stream(std::uint64_t seed) { return {seed, "student", 0}; }

void SimConfig::validate() const {
  require(N >= 1, "N must be positive");
  require(K >= 2, "K must be >= 2");
  require(alpha_max > 0.0 && std::isfinite(alpha_max), "alpha_max must be > 0");
  require(checkpoints_per_decade >= 1, "checkpoints_per_decade must be >= 1");
  require(test_samples >= 1, "test_samples must be >= 1");
  require(!seeds.empty(), "seeds must be non-empty");
  require(alpha_start >= 0.0 && alpha_start <= alpha_max, "alpha_start must lie in [0, alpha_max]");
  schedule.validate();
  input_model.validate();
  require(input_model.N == N, "input model dimension differs from N");
  if (label_mode == LabelMode::provided) {
    require(input_model.kind == InputKind::replay && input_model.dataset->has_labels(),
            "provided-label mode needs a labelled replay dataset");
    require(input_model.dataset->num_classes <= K, "dataset has more classes than K");
  } else {
    require(K <= N, "teacher needs K <= N");
  }
  if (input_model.kind == InputKind::replay) {
    require(test_set != nullptr && test_set->rows() > 0, "replay runs need a held-out test set");
    require(test_set->dimension() == N, "test set dimension differs from N");
    if (label_mode == LabelMode::provided) {
      require(test_set->has_labels(), "provided-label mode needs test labels");
    }
  }
}

std::vector<std::int64_t> checkpoint_steps(double alpha_max, int per_decade, int N,
                                           double alpha_start) {
  require(alpha_max > 0.0 && per_decade >= 1 && N >= 1, "checkpoint_steps: invalid arguments");
  const double n = static_cast<double>(N);
  const double start = alpha_start > 0.0 ? alpha_start : 1.0 / n;
  std::vector<std::int64_t> steps;
  for (int k = 0;; ++k) {
    const double alpha = alpha_max * std::pow(10.0, -static_cast<double>(k) / per_decade);
    if (alpha < start * (1.0 - 1e-9)) break;
    steps.push_back(std::max<std::int64_t>(1, std::llround(alpha * n)));
  }
  std::sort(steps.begin(), steps.end());
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  return steps;
}

std::vector<double> checkpoint_grid(double alpha_max, int per_decade, int N, double alpha_start) {
  std::vector<double> grid;
  for (std::int64_t mu : checkpoint_steps(alpha_max, per_decade, N, alpha_start)) {
    grid.push_back(static_cast<double>(mu) / N);
  }
  return grid;
}

namespace {

struct Accumulator {
  std::int64_t wrong = 0;
  RunningStats loss;

  void add(const Eigen::Ref<const Eigen::VectorXd>& logits, int label) {
    if (argmax(logits) != label) ++wrong;
    loss.add(log_sum_exp(logits) - logits[label]);
  }

  GeneralizationEstimate result() const {
    const double n = static_cast<double>(loss.count());
    const double p = static_cast<double>(wrong) / n;
    return {p, std::sqrt(p * (1.0 - p) / n), loss.mean(), loss.std_error()};
  }
};

}  // namespace

GeneralizationEstimate estimate_generalization(const TeacherEnsemble& teacher,
                                               const Student& student, std::int64_t M, Rng& rng,
                                               const InputModel& input_model, LogitScaling scaling,
                                               EvalMode mode) {
  require(M >= 1, "estimate_generalization: M must be >= 1");
  require(input_model.gaussian(), "estimate_generalization: Gaussian input model required");
  require(student.classes() == teacher.classes() && student.dimension() == teacher.dimension() &&
              input_model.N == teacher.dimension(),
          "estimate_generalization: shape mismatch");
  const Eigen::Index K = teacher.classes();
  const double n = static_cast<double>(teacher.dimension());
  const double student_scale = scaling == LogitScaling::inv_sqrt_n ? 1.0 : std::sqrt(n);
  Accumulator acc;

  if (mode == EvalMode::inputs) {
    Eigen::VectorXd xi(teacher.dimension());
    const Eigen::VectorXd scale = input_model.variances().array().sqrt();
    FieldSample sample;
    for (std::int64_t m = 0; m < M; ++m) {
      for (Eigen::Index i = 0; i < xi.size(); ++i) xi[i] = scale[i] * rng.normal();
      forward_into(teacher, student, xi, scaling, sample);
      acc.add(sample.t, sample.label);
    }
    return acc.result();
  }

  // (u, t) = [T; s J] xi / sqrt(N) is Gaussian with covariance B diag(lambda) B^T / N.
  WeightMatrix stacked(2 * K, teacher.dimension());
  stacked.topRows(K) = teacher.vectors;
  stacked.bottomRows(K) = student.weights * student_scale;
  const Eigen::VectorXd variances = input_model.variances();
  const Eigen::MatrixXd cov = stacked * variances.asDiagonal() * stacked.transpose() / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  if (!root.allFinite()) throw NumericalError("estimate_generalization: non-finite covariance");

  Eigen::VectorXd w(2 * K), fields(2 * K);
  for (std::int64_t m = 0; m < M; ++m) {
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
    fields.noalias() = root * w;
    acc.add(fields.tail(K), argmax(fields.head(K)));
  }
  return acc.result();
}

std::vector<int> teacher_labels(const TeacherEnsemble& teacher,
                                const FeatureDataset::Matrix& features) {
  require(features.cols() == teacher.dimension(), "teacher_labels: dimension mismatch");
  std::vector<int> labels(static_cast<std::size_t>(features.rows()));
  Eigen::VectorXd x(features.cols()), u(teacher.classes());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    x = features.row(r).transpose().cast<double>();
    u.noalias() = teacher.vectors * x;
    labels[static_cast<std::size_t>(r)] = argmax(u);
  }
  return labels;
}

GeneralizationEstimate estimate_on_rows(const Student& student,
                                        const FeatureDataset::Matrix& features,
                                        const std::vector<int>& labels, LogitScaling scaling) {
  require(features.rows() >= 1, "estimate_on_rows: no rows");
  require(static_cast<std::size_t>(features.rows()) == labels.size(),
          "estimate_on_rows: label count mismatch");
  require(features.cols() == student.dimension(), "estimate_on_rows: dimension mismatch");
  const double scale =
      scaling == LogitScaling::inv_sqrt_n ? 1.0 / std::sqrt(static_cast<double>(features.cols()))
                                          : 1.0;
  Accumulator acc;
  Eigen::VectorXd x(features.cols()), t(student.classes());
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    x = features.row(r).transpose().cast<double>();
    t.noalias() = student.weights * x;
    t *= scale;
    if (!t.allFinite()) throw NumericalError("estimate_on_rows: non-finite logits");
    acc.add(t, labels[static_cast<std::size_t>(r)]);
  }
  return acc.result();
}

Trajectory run_online_from(const SimConfig& config, std::uint64_t seed,
                           const std::optional<TeacherEnsemble>& teacher, Student student) {
  config.validate();
  const bool provided = config.label_mode == LabelMode::provided;
  require(provided || teacher.has_value(), "run_online_from: teacher-label mode needs a teacher");
  require(student.classes() == config.K && student.dimension() == config.N,
          "run_online_from: student shape differs from config");

  const double n = static_cast<double>(config.N);
  // Replay students without the 1/sqrt(N) logit factor carry J = sqrt(N) W.
  const double order_scale = config.logit_scaling == LogitScaling::inv_sqrt_n ? 1.0 : std::sqrt(n);
  const auto steps = checkpoint_steps(config.alpha_max, config.checkpoints_per_decade, config.N,
                                      config.alpha_start);

  Trajectory traj;
  traj.seed = seed;
  traj.has_order_params = !provided;

  std::vector<int> test_labels;
  if (config.input_model.kind == InputKind::replay) {
    test_labels = provided ? *config.test_set->labels
                           : teacher_labels(*teacher, config.test_set->features);
  }

  InputSampler sampler(config.input_model, RngStream{seed, "train", 0},
                       RngStream{seed, "shuffle", 0});
  const RngStream eval_stream{seed, "eval", 0};
  const std::vector<int>* dataset_labels =
      provided ? &*config.input_model.dataset->labels : nullptr;

  Eigen::VectorXd xi(config.N);
  FieldSample sample;
  sample.p.resize(config.K);
  Eigen::VectorXd logits(config.K);

  const auto record = [&](std::int64_t mu, std::size_t index) {
    TrajectoryRow row;
    row.alpha = static_cast<double>(mu) / n;
    row.eta = eta_at(config.schedule, row.alpha);
    if (!provided) row.op = measure_order_params(*teacher, student, order_scale);
    GeneralizationEstimate est;
    if (config.input_model.kind == InputKind::replay) {
      est = estimate_on_rows(student, config.test_set->features, test_labels, config.logit_scaling);
    } else {
      Rng eval_rng(eval_stream.child("checkpoint", index));
      est = estimate_generalization(*teacher, student, config.test_samples, eval_rng,
                                    config.input_model, config.logit_scaling, config.eval_mode);
    }
    row.eps_g = est.eps_g;
    row.eps_g_stderr = est.eps_g_stderr;
    row.test_loss = est.test_loss;
    traj.rows.push_back(row);
  };

  const double inv_sqrt_n = 1.0 / std::sqrt(n);
  std::size_t next = 0;
  try {
    for (std::int64_t mu = 1; next < steps.size(); ++mu) {
      sampler.next(xi);
      const double eta = eta_at(config.schedule, static_cast<double>(mu) / n);
      if (provided) {
        logits.noalias() = student.weights * xi;
        if (config.logit_scaling == LogitScaling::inv_sqrt_n) logits *= inv_sqrt_n;
        if (!logits.allFinite()) throw NumericalError("non-finite logits");
        softmax_into(logits, sample.p);
        const int label = (*dataset_labels)[static_cast<std::size_t>(sampler.last_row())];
        sgd_step_to_label(student, sample.p, label, xi, eta, config.logit_scaling);
      } else {
        forward_into(*teacher, student, xi, config.logit_scaling, sample);
        sgd_step_to_label(student, sample.p, sample.label, xi, eta, config.logit_scaling);
      }
      const bool at_checkpoint = mu == steps[next];
      if (at_checkpoint || mu % kGuardInterval == 0) {
        const double largest = student.weights.cwiseAbs().maxCoeff();
        if (!(largest <= kDivergenceBound)) {
          throw NumericalError("student weights diverged at alpha=" + std::to_string(mu / n));
        }
      }
      if (at_checkpoint) record(mu, next++);
    }
  } catch (const NumericalError& e) {
    traj.diverged = true;
    traj.status = e.what();
  }
  traj.replay_epochs = sampler.epoch();
  return traj;
}

Trajectory run_online(const SimConfig& config, std::uint64_t seed) {
  config.validate();
  std::optional<TeacherEnsemble> teacher;
  if (config.label_mode == LabelMode::teacher) {
    teacher = make_orthonormal_teacher(config.N, config.K, teacher_stream(seed));
  }
  Student student = init_student(config.N, config.K, config.init, student_stream(seed));
  return run_online_from(config, seed, teacher, std::move(student));
}

const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> columns = {
      "eta", "R", "S", "Q", "C", "D", "Qeff", "Delta", "eps_g", "eps_g_stderr", "test_loss"};
  return columns;
}

double trajectory_value(const TrajectoryRow& row, std::size_t column) {
  switch (column) {
    case 0: return row.eta;
    case 1: return row.op.R;
    case 2: return row.op.S;
    case 3: return row.op.Q;
    case 4: return row.op.C;
    case 5: return row.op.D;
    case 6: return row.op.Q_eff;
    case 7: return row.op.Delta;
    case 8: return row.eps_g;
    case 9: return row.eps_g_stderr;
    case 10: return row.test_loss;
    default: throw PreconditionError("trajectory_value: column out of range");
  }
}

namespace {

std::size_t column_index(const std::string& name) {
  const auto& cols = trajectory_columns();
  const auto it = std::find(cols.begin(), cols.end(), name);
  if (it == cols.end()) throw PreconditionError("unknown trajectory column '" + name + "'");
  return static_cast<std::size_t>(it - cols.begin());
}

}  // namespace

double EnsembleSummary::mean(std::size_t checkpoint, const std::string& column) const {
  return stats.at(checkpoint).at(column_index(column)).mean;
}

std::vector<double> EnsembleSummary::mean_series(const std::string& column) const {
  const std::size_t c = column_index(column);
  std::vector<double> out;
  out.reserve(stats.size());
  for (const auto& row : stats) out.push_back(row[c].mean);
  return out;
}

EnsembleSummary summarize(const std::vector<Trajectory>& trajectories) {
  EnsembleSummary summary;
  std::vector<const Trajectory*> complete;
  std::size_t longest = 0;
  for (const auto& t : trajectories) {
    longest = std::max(longest, t.rows.size());
  }
  for (const auto& t : trajectories) {
    if (!t.diverged && t.rows.size() == longest) complete.push_back(&t);
  }
  summary.incomplete = complete.size() != trajectories.size();
  summary.seeds_used = complete.size();
  if (complete.empty()) return summary;

  const std::size_t columns = trajectory_columns().size();
  for (std::size_t k = 0; k < longest; ++k) {
    summary.alpha.push_back(complete.front()->rows[k].alpha);
    std::vector<ColumnStats> row(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      RunningStats stats;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (const Trajectory* t : complete) {
        const double v = trajectory_value(t->rows[k], c);
        stats.add(v);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      // Clamp the mean into [min, max] against rounding in the running update.
      row[c] = {std::clamp(stats.mean(), lo, hi), lo, hi, std::sqrt(stats.variance())};
    }
    summary.stats.push_back(std::move(row));
  }
  return summary;
}

EnsembleResult run_ensemble(const SimConfig& config, int threads) {
  config.validate();
  EnsembleResult result;
  result.trajectories.resize(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
  std::atomic<std::size_t> next{0};

  const auto worker = [&] {
    for (std::size_t i = next++; i < config.seeds.size(); i = next++) {
      try {
        result.trajectories[i] = run_online(config, config.seeds[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp<int>(threads, 1, static_cast<int>(config.seeds.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (auto& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  for (const auto& t : result.trajectories) {
    if (t.diverged) {
      result.diagnostics.warn("seed " + std::to_string(t.seed) + " aborted: " + t.status);
    }
  }
  result.summary = summarize(result.trajectories);
  if (result.summary.incomplete) {
    result.diagnostics.warn("summary computed over " + std::to_string(result.summary.seeds_used) +
                            " of " + std::to_string(result.trajectories.size()) + " seeds");
  }
  return result;
}

}  // namespace tsoftmax
