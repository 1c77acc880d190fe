#include <cmath>

#include "doctest.h"
#include "tsoftmax/error.hpp"
#include "tsoftmax/model.hpp"

using namespace tsoftmax;

TEST_SUITE("model") {
  TEST_CASE("teachers are orthonormal under the 1/N inner product") {
    Rng gen(RngStream{11, "shapes", 0});
    for (int trial = 0; trial < 25; ++trial) {
      const int K = 2 + static_cast<int>(gen.below(9));
      const int N = K + static_cast<int>(gen.below(300));
      const auto T = make_orthonormal_teacher(N, K, RngStream{static_cast<std::uint64_t>(trial), "teacher", 0});
      const Eigen::MatrixXd gram = T.vectors * T.vectors.transpose() / N;
      CHECK((gram - Eigen::MatrixXd::Identity(K, K)).cwiseAbs().maxCoeff() < 1e-12);
    }
    // K = N still works (full basis).
    const auto square = make_orthonormal_teacher(5, 5, RngStream{1, "teacher", 0});
    CHECK((square.vectors * square.vectors.transpose() / 5 - Eigen::MatrixXd::Identity(5, 5))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    CHECK_THROWS_AS(make_orthonormal_teacher(3, 4, RngStream{}), PreconditionError);
    CHECK_THROWS_AS(make_orthonormal_teacher(10, 1, RngStream{}), PreconditionError);
  }

  TEST_CASE("argmax breaks ties toward the lowest index") {
    Eigen::VectorXd v(4);
    v << 1.0, 3.0, 3.0, -2.0;
    CHECK(argmax(v) == 1);
    v << 5.0, 5.0, 5.0, 5.0;
    CHECK(argmax(v) == 0);
  }

  TEST_CASE("softmax and log-sum-exp are stable and consistent") {
    Eigen::VectorXd t(3), p(3);
    t << 1000.0, 999.0, -1000.0;
    softmax_into(t, p);
    CHECK(p.allFinite());
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(log_sum_exp(t) == doctest::Approx(1000.0 + std::log1p(std::exp(-1.0))).epsilon(1e-15));
    Eigen::VectorXd small(3);
    small << 0.1, -0.4, 0.7;
    const double naive = std::log(std::exp(0.1) + std::exp(-0.4) + std::exp(0.7));
    CHECK(log_sum_exp(small) == doctest::Approx(naive).epsilon(1e-15));
    // Shift invariance.
    Eigen::VectorXd q(3);
    softmax_into((small.array() + 123.0).matrix(), q);
    softmax_into(small, p);
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-14);
  }

  TEST_CASE("SGD step matches the update rule and keeps the class sum fixed") {
    Rng gen(RngStream{2, "sgd", 0});
    for (int trial = 0; trial < 20; ++trial) {
      const int K = 2 + static_cast<int>(gen.below(6));
      const int N = K + static_cast<int>(gen.below(100));
      const auto T = make_orthonormal_teacher(N, K, RngStream{static_cast<std::uint64_t>(trial), "t", 0});
      auto J = init_student(N, K, StudentInit::standard_normal, RngStream{static_cast<std::uint64_t>(trial), "s", 0});
      Eigen::VectorXd xi(N);
      gen.fill_normal(xi);
      const double eta = gen.uniform(0.01, 2.0);
      const auto sample = forward(T, J, xi);
      const Eigen::VectorXd before_sum = J.weights.colwise().sum().transpose();
      const WeightMatrix before = J.weights;
      sgd_step(J, sample, xi, eta);
      for (int a = 0; a < K; ++a) {
        const double g = (a == sample.label ? 1.0 : 0.0) - sample.p[a];
        const Eigen::RowVectorXd expected = before.row(a) + eta / std::sqrt(double(N)) * g * xi.transpose();
        CHECK((J.weights.row(a) - expected).cwiseAbs().maxCoeff() < 1e-12);
      }
      const Eigen::VectorXd after_sum = J.weights.colwise().sum().transpose();
      CHECK((after_sum - before_sum).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("SGD edge cases") {
    const auto T = make_orthonormal_teacher(8, 3, RngStream{1, "t", 0});
    auto J = init_student(8, 3, StudentInit::standard_normal, RngStream{1, "s", 0});
    Eigen::VectorXd xi = Eigen::VectorXd::Ones(8);
    const auto sample = forward(T, J, xi);
    const WeightMatrix before = J.weights;
    sgd_step(J, sample, xi, 0.0);
    CHECK(J.weights == before);
    CHECK_THROWS_AS(sgd_step(J, sample, xi, -0.1), PreconditionError);
    CHECK_THROWS_AS(forward(T, J, Eigen::VectorXd::Ones(7)), PreconditionError);
    J.weights(0, 0) = std::nan("");
    CHECK_THROWS_AS(forward(T, J, xi), NumericalError);
  }

  TEST_CASE("scaled-uniform init lies in the torch.nn.Linear range") {
    const auto J = init_student(400, 3, StudentInit::scaled_uniform, RngStream{1, "s", 0});
    CHECK(J.weights.cwiseAbs().maxCoeff() <= 1.0 / 20.0);
    CHECK(J.weights.cwiseAbs().maxCoeff() > 0.9 / 20.0);
  }

  TEST_CASE("order parameters of a scaled teacher copy") {
    const auto T = make_orthonormal_teacher(50, 4, RngStream{3, "t", 0});
    Student J{2.5 * T.vectors};
    const auto op = measure_order_params(T, J);
    CHECK(op.R == doctest::Approx(2.5));
    CHECK(std::abs(op.S) < 1e-12);
    CHECK(op.Q == doctest::Approx(6.25));
    CHECK(std::abs(op.C) < 1e-12);
    CHECK(op.D == doctest::Approx(2.5));
    CHECK(std::abs(op.Delta) < 1e-12);
    const auto scaled = measure_order_params(T, Student{T.vectors}, 2.5);
    CHECK(scaled.D == doctest::Approx(op.D));
    CHECK(scaled.Q == doctest::Approx(op.Q));
  }

  TEST_CASE("centered order parameters ignore a shift shared by all classes") {
    Rng gen(RngStream{4, "shift", 0});
    for (int trial = 0; trial < 20; ++trial) {
      const int K = 2 + static_cast<int>(gen.below(6));
      const int N = 20 + static_cast<int>(gen.below(100));
      const auto T = make_orthonormal_teacher(N, K, RngStream{static_cast<std::uint64_t>(trial), "t", 0});
      auto J = init_student(N, K, StudentInit::standard_normal, RngStream{static_cast<std::uint64_t>(trial), "s", 0});
      const auto base = measure_order_params(T, J);
      Eigen::RowVectorXd v(N);
      gen.fill_normal(v);
      v *= gen.uniform(0.1, 5.0);
      J.weights.rowwise() += v;
      const auto shifted = measure_order_params(T, J);
      CHECK(shifted.D == doctest::Approx(base.D).epsilon(1e-10));
      CHECK(shifted.Q_eff == doctest::Approx(base.Q_eff).epsilon(1e-10));
      CHECK(shifted.Delta == doctest::Approx(base.Delta).epsilon(1e-10));
    }
  }

  TEST_CASE("from_raw centered combinations") {
    const auto op = OrderParams::from_raw(2.0, -0.5, 7.0, -1.0);
    CHECK(op.D == 2.5);
    CHECK(op.Q_eff == 8.0);
    CHECK(op.Delta == doctest::Approx(8.0 - 6.25));
  }
}
