#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "tsoftmax/rng.hpp"

namespace tsoftmax {

/// K x N weights, one class per row.
using WeightMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class LogitScaling { inv_sqrt_n, none };
enum class StudentInit { standard_normal, scaled_uniform };

/// Orthonormal teachers, T_a . T_b / N = delta_ab.
struct TeacherEnsemble {
  WeightMatrix vectors;

  Eigen::Index classes() const { return vectors.rows(); }
  Eigen::Index dimension() const { return vectors.cols(); }
};

struct Student {
  WeightMatrix weights;

  Eigen::Index classes() const { return weights.rows(); }
  Eigen::Index dimension() const { return weights.cols(); }
};

/// Raw overlaps and their centered combinations.
struct OrderParams {
  double R = 0.0;
  double S = 0.0;
  double Q = 0.0;
  double C = 0.0;
  double D = 0.0;
  double Q_eff = 0.0;
  double Delta = 0.0;

  static OrderParams from_raw(double R, double S, double Q, double C) {
    OrderParams op{R, S, Q, C};
    op.D = R - S;
    op.Q_eff = Q - C;
    op.Delta = op.Q_eff - op.D * op.D;
    return op;
  }
};

/// Fields of one example: teacher fields u, student logits t, softmax p.
struct FieldSample {
  Eigen::VectorXd u;
  Eigen::VectorXd t;
  Eigen::VectorXd p;
  int label = 0;
};

TeacherEnsemble make_orthonormal_teacher(int N, int K, const RngStream& stream);

Student init_student(int N, int K, StudentInit init, const RngStream& stream);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& values);

/// Softmax with max-logit subtraction, written into p.
void softmax_into(const Eigen::Ref<const Eigen::VectorXd>& logits, Eigen::Ref<Eigen::VectorXd> p);

/// log sum_b exp(t_b), stable for large logits.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& logits);

/// Computes fields, softmax and teacher label into a preallocated sample.
/// Throws NumericalError on non-finite logits.
void forward_into(const TeacherEnsemble& teacher, const Student& student,
                  const Eigen::Ref<const Eigen::VectorXd>& xi, LogitScaling scaling,
                  FieldSample& sample);

FieldSample forward(const TeacherEnsemble& teacher, const Student& student,
                    const Eigen::Ref<const Eigen::VectorXd>& xi,
                    LogitScaling scaling = LogitScaling::inv_sqrt_n);

/// One online SGD step on the cross-entropy -log p_y:
///   J_a += (eta / sqrt(N)) (p^T_a - p_a) xi     (inv_sqrt_n)
///   J_a += eta (p^T_a - p_a) xi                 (none)
void sgd_step(Student& student, const FieldSample& sample,
              const Eigen::Ref<const Eigen::VectorXd>& xi, double eta,
              LogitScaling scaling = LogitScaling::inv_sqrt_n);

/// Same update with an explicit target class instead of the teacher argmax.
void sgd_step_to_label(Student& student, const Eigen::Ref<const Eigen::VectorXd>& p, int label,
                       const Eigen::Ref<const Eigen::VectorXd>& xi, double eta,
                       LogitScaling scaling);

/// Class-pair averaged overlaps of a student against its teacher.
OrderParams measure_order_params(const TeacherEnsemble& teacher, const Student& student);

/// Same, using an explicit Gram of student rows scaled by `student_scale`
/// (used when the stored weights omit a sqrt(N) factor).
OrderParams measure_order_params(const TeacherEnsemble& teacher, const Student& student,
                                 double student_scale);

}  // namespace tsoftmax
