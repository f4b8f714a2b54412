#include <doctest.h>

#include "afl/config.hpp"
#include "afl/trainer.hpp"
#include "support.hpp"

using namespace afl;
using afl::testing::scalar_quadratic;

namespace {

TrainerConfig constant(double alpha, int steps, double lambda = 0.02) {
  TrainerConfig cfg;
  cfg.local_steps = steps;
  cfg.lambda = lambda;
  cfg.lr = LearningRate::constant_rate(alpha);
  return cfg;
}

}  // namespace

TEST_CASE("one proximal step from the anchor ignores the regularizer") {
  const auto task = scalar_quadratic({1}, {0}, {1});
  Rng rng(1);
  const VectorXd u = local_train<double>(task, 0, VectorXd::Constant(1, 1.0), constant(0.1, 1), 1, rng);
  CHECK(u(0) == doctest::Approx(-0.1).epsilon(1e-14));
}

TEST_CASE("two proximal steps") {
  const auto task = scalar_quadratic({1}, {0}, {1});
  Rng rng(1);
  const VectorXd u = local_train<double>(task, 0, VectorXd::Constant(1, 1.0), constant(0.1, 2), 1, rng);
  // theta1 = 0.9; grad = 0.9 + 0.02 * (-0.1) = 0.898; theta2 = 0.8102
  CHECK(u(0) == doctest::Approx(-0.1898).epsilon(1e-14));
}

TEST_CASE("vanishing step keeps the anchor") {
  const auto task = scalar_quadratic({1, 1}, {2, -2}, {3, 3});
  Rng rng(1);
  const VectorXd u = local_train<double>(task, 1, VectorXd::Constant(1, 1.0), constant(1e-300, 5), 1, rng);
  CHECK(u.norm() < 1e-290);
}

TEST_CASE("regularized loss") {
  const auto task = scalar_quadratic({1}, {0.5}, {1});
  const VectorXd anchor = VectorXd::Constant(1, 2.0);
  SUBCASE("at the anchor") {
    CHECK(regularized_loss<double>(task, 0, anchor, anchor, 0.3) == doctest::Approx(task.local_loss(0, anchor)));
  }
  SUBCASE("without regularizer") {
    const VectorXd theta = VectorXd::Constant(1, -1.0);
    CHECK(regularized_loss<double>(task, 0, theta, anchor, 0.0) == doctest::Approx(task.local_loss(0, theta)));
  }
  SUBCASE("zero local loss") {
    std::vector<VectorXd> c{VectorXd::Constant(2, 1e-300)}, t{VectorXd::Zero(2)};
    const QuadraticTask<double> flat(c, t, std::vector<Index>{1});
    VectorXd a(2), theta(2);
    a << 0, 0;
    theta << 3, 0;
    CHECK(regularized_loss<double>(flat, 0, theta, a, 2.0) == doctest::Approx(9.0));
  }
}

TEST_CASE("learning-rate schedules") {
  LearningRate dim;
  CHECK(dim(1) == doctest::Approx(0.01));
  CHECK(dim(51) == doctest::Approx(0.005));
  const auto theory = LearningRate::theory_schedule(3.0, 20.0);
  CHECK(theory(1) == doctest::Approx(3.0 / 21.0));
  CHECK(LearningRate::constant_rate(0.2)(1000) == doctest::Approx(0.2));
}

TEST_CASE("mini-batch training is seeded") {
  QuadraticTaskSpec spec;
  spec.gradient_noise = 1.0;
  const auto task = make_quadratic_task(spec, 2, 5);
  TrainerConfig cfg = constant(0.05, 3);
  cfg.batch_size = 4;
  const VectorXd anchor = VectorXd::Ones(task.dim());
  Rng a(7), b(7), c(8);
  const VectorXd ua = local_train<double>(task, 0, anchor, cfg, 1, a);
  CHECK(ua == local_train<double>(task, 0, anchor, cfg, 1, b));
  CHECK(ua != local_train<double>(task, 0, anchor, cfg, 1, c));
}

TEST_CASE("full batch equals gradient descent on the regularized loss") {
  QuadraticTaskSpec spec;
  spec.gradient_noise = 0.7;
  const auto task = make_quadratic_task(spec, 1, 2);
  const VectorXd anchor = VectorXd::LinSpaced(task.dim(), -1, 1);
  Rng rng(1);
  const VectorXd u = local_train<double>(task, 0, anchor, constant(0.1, 4, 0.5), 1, rng);
  VectorXd theta = anchor;
  for (int s = 0; s < 4; ++s) theta -= 0.1 * (task.local_gradient(0, theta) + 0.5 * (theta - anchor));
  CHECK((u - (theta - anchor)).norm() < 1e-12);
}

TEST_CASE("trainer rejects bad settings") {
  const auto task = scalar_quadratic({1}, {0}, {2});
  Rng rng(1);
  const VectorXd anchor = VectorXd::Zero(1);
  CHECK_THROWS_AS(local_train<double>(task, 0, anchor, constant(0.1, 0), 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(local_train<double>(task, 0, anchor, constant(0.1, 1, -1), 1, rng), std::invalid_argument);
  TrainerConfig big = constant(0.1, 1);
  big.batch_size = 3;
  CHECK_THROWS_AS(local_train<double>(task, 0, anchor, big, 1, rng), std::invalid_argument);
  CHECK_THROWS_AS(local_train<double>(task, 0, VectorXd::Zero(2), constant(0.1, 1), 1, rng), std::invalid_argument);
}
