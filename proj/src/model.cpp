#include "tsoftmax/model.hpp"

#include <cmath>
#include <string>

#include "tsoftmax/error.hpp"

namespace tsoftmax {

TeacherEnsemble make_orthonormal_teacher(int N, int K, const RngStream& stream) {
  require(K >= 2, "make_orthonormal_teacher: need K >= 2");
  require(K <= N, "make_orthonormal_teacher: need K <= N");
  Rng rng(stream);
  const double n = static_cast<double>(N);
  TeacherEnsemble teacher{WeightMatrix(K, N)};
  auto& T = teacher.vectors;
  constexpr int kMaxRedraws = 16;

  for (int a = 0; a < K; ++a) {
    int attempt = 0;
    for (;; ++attempt) {
      if (attempt > kMaxRedraws) {
        throw NumericalError("make_orthonormal_teacher: repeated near-linear dependence");
      }
      Eigen::RowVectorXd row(N);
      rng.fill_normal(row);
      const double raw_norm = std::sqrt(row.squaredNorm() / n);
      // Two passes of modified Gram-Schmidt under <x, y> = x.y / N.
      for (int pass = 0; pass < 2; ++pass) {
        for (int b = 0; b < a; ++b) row -= (row.dot(T.row(b)) / n) * T.row(b);
      }
      const double norm = std::sqrt(row.squaredNorm() / n);
      if (norm > 1e-6 * raw_norm) {
        T.row(a) = row / norm;
        break;
      }
    }
  }
  return teacher;
}

Student init_student(int N, int K, StudentInit init, const RngStream& stream) {
  require(N >= 1 && K >= 1, "init_student: N and K must be positive");
  Rng rng(stream);
  Student student{WeightMatrix(K, N)};
  if (init == StudentInit::standard_normal) {
    rng.fill_normal(student.weights);
  } else {
    const double bound = 1.0 / std::sqrt(static_cast<double>(N));
    for (Eigen::Index a = 0; a < K; ++a)
      for (Eigen::Index i = 0; i < N; ++i) student.weights(a, i) = rng.uniform(-bound, bound);
  }
  return student;
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& values) {
  int best = 0;
  for (Eigen::Index a = 1; a < values.size(); ++a) {
    if (values[a] > values[best]) best = static_cast<int>(a);
  }
  return best;
}

void softmax_into(const Eigen::Ref<const Eigen::VectorXd>& logits, Eigen::Ref<Eigen::VectorXd> p) {
  const double top = logits.maxCoeff();
  p = (logits.array() - top).exp().matrix();
  p /= p.sum();
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  return top + std::log((logits.array() - top).exp().sum());
}

void forward_into(const TeacherEnsemble& teacher, const Student& student,
                  const Eigen::Ref<const Eigen::VectorXd>& xi, LogitScaling scaling,
                  FieldSample& sample) {
  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(teacher.dimension()));
  sample.u.noalias() = teacher.vectors * xi;
  sample.u *= inv_sqrt_n;
  sample.t.noalias() = student.weights * xi;
  if (scaling == LogitScaling::inv_sqrt_n) sample.t *= inv_sqrt_n;
  if (!sample.t.allFinite() || !sample.u.allFinite()) {
    throw NumericalError("forward: non-finite fields");
  }
  sample.p.resize(sample.t.size());
  softmax_into(sample.t, sample.p);
  sample.label = argmax(sample.u);
}

FieldSample forward(const TeacherEnsemble& teacher, const Student& student,
                    const Eigen::Ref<const Eigen::VectorXd>& xi, LogitScaling scaling) {
  require(xi.size() == teacher.dimension(), "forward: input length must equal N");
  require(student.dimension() == teacher.dimension() && student.classes() == teacher.classes(),
          "forward: student and teacher shapes differ");
  FieldSample sample;
  forward_into(teacher, student, xi, scaling, sample);
  return sample;
}

void sgd_step_to_label(Student& student, const Eigen::Ref<const Eigen::VectorXd>& p, int label,
                       const Eigen::Ref<const Eigen::VectorXd>& xi, double eta,
                       LogitScaling scaling) {
  const double scale = scaling == LogitScaling::inv_sqrt_n
                           ? eta / std::sqrt(static_cast<double>(student.dimension()))
                           : eta;
  if (scale == 0.0) return;
  const Eigen::Index K = student.classes();
  for (Eigen::Index a = 0; a < K; ++a) {
    const double g = (a == label ? 1.0 : 0.0) - p[a];
    if (g != 0.0) student.weights.row(a) += (scale * g) * xi.transpose();
  }
}

void sgd_step(Student& student, const FieldSample& sample,
              const Eigen::Ref<const Eigen::VectorXd>& xi, double eta, LogitScaling scaling) {
  require(eta >= 0.0, "sgd_step: eta must be non-negative");
  require(xi.size() == student.dimension() && sample.p.size() == student.classes(),
          "sgd_step: shape mismatch");
  sgd_step_to_label(student, sample.p, sample.label, xi, eta, scaling);
}

OrderParams measure_order_params(const TeacherEnsemble& teacher, const Student& student,
                                 double student_scale) {
  require(student.dimension() == teacher.dimension() && student.classes() == teacher.classes(),
          "measure_order_params: shape mismatch");
  const double n = static_cast<double>(teacher.dimension());
  const Eigen::Index K = teacher.classes();
  const Eigen::MatrixXd jt = (student.weights * teacher.vectors.transpose()) * (student_scale / n);
  const Eigen::MatrixXd jj =
      (student.weights * student.weights.transpose()) * (student_scale * student_scale / n);
  const double k = static_cast<double>(K);
  const double pairs = k * (k - 1.0);
  const double R = jt.diagonal().mean();
  const double S = K > 1 ? (jt.sum() - jt.diagonal().sum()) / pairs : 0.0;
  const double Q = jj.diagonal().mean();
  const double C = K > 1 ? (jj.sum() - jj.diagonal().sum()) / pairs : 0.0;
  return OrderParams::from_raw(R, S, Q, C);
}

OrderParams measure_order_params(const TeacherEnsemble& teacher, const Student& student) {
  return measure_order_params(teacher, student, 1.0);
}

}  // namespace tsoftmax
