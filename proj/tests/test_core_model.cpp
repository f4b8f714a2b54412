#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>

#include "afl/config.hpp"
#include "afl/dataset.hpp"
#include "afl/partition.hpp"
#include "afl/task.hpp"
#include "support.hpp"

using namespace afl;
using afl::testing::scalar_quadratic;

namespace {

VectorXd random_vector(Index d, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  VectorXd v(d);
  for (Index i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

// Central differences of the device loss.
VectorXd numeric_gradient(const Task<double>& task, Index k, const VectorXd& theta) {
  VectorXd g(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6 * (1 + std::abs(theta(i)));
    VectorXd up = theta, down = theta;
    up(i) += h;
    down(i) -= h;
    g(i) = (task.local_loss(k, up) - task.local_loss(k, down)) / (2 * h);
  }
  return g;
}

std::shared_ptr<ClassificationTask<double>> small_classifier(std::uint64_t seed) {
  GaussianClustersSpec spec;
  spec.num_classes = 3;
  spec.num_features = 4;
  spec.samples_per_class = 20;
  Rng rng = make_stream(seed, "dataset");
  auto data = std::make_shared<Dataset>(make_gaussian_clusters(spec, seed, rng));
  auto shards = partition_iid(*data, 3, seed);
  return std::make_shared<ClassificationTask<double>>(data, shard_indices(shards));
}

}  // namespace

TEST_CASE("two opposite quadratics evaluate to one at the origin") {
  // (theta - 1)^2 has curvature 2
  const auto task = scalar_quadratic({2, 2}, {1, -1}, {5, 5});
  CHECK(global_loss<double>(task, VectorXd::Zero(1)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("single device loss vanishes at its optimum") {
  const auto task = scalar_quadratic({3}, {0.7}, {4});
  CHECK(global_loss(task, quadratic_optimum(task).theta) == doctest::Approx(0.0));
}

TEST_CASE("global loss is the data-weighted sum of local losses") {
  QuadraticTaskSpec spec;
  spec.gradient_noise = 0.5;
  spec.samples_per_device = 7;
  const auto task = make_quadratic_task(spec, 5, 3);
  Rng rng(99);
  for (int i = 0; i < 100; ++i) {
    const VectorXd theta = random_vector(task.dim(), rng, 2.0);
    const double direct = global_loss(task, theta);
    const double weighted = weighted_local_loss(task, theta);
    CHECK(std::abs(direct - weighted) <= 1e-12 * std::max(1.0, std::abs(direct)));
  }

  const auto clf = small_classifier(4);
  for (int i = 0; i < 20; ++i) {
    const VectorXd theta = random_vector(clf->dim(), rng);
    const double direct = global_loss<double>(*clf, theta);
    CHECK(std::abs(direct - weighted_local_loss<double>(*clf, theta)) <= 1e-12 * std::max(1.0, direct));
  }
}

TEST_CASE("analytic gradient of a half square") {
  const auto task = scalar_quadratic({1}, {0}, {1});
  const std::vector<Index> batch{0};
  CHECK(gradient<double>(task, 0, VectorXd::Constant(1, 1.0), batch)(0) == doctest::Approx(1.0));
}

TEST_CASE("gradients match central differences") {
  Rng rng(5);
  QuadraticTaskSpec spec;
  spec.dim = 6;
  const auto quad = make_quadratic_task(spec, 3, 8);
  const auto clf = small_classifier(9);
  for (const Task<double>* task : {static_cast<const Task<double>*>(&quad), static_cast<const Task<double>*>(clf.get())}) {
    for (int trial = 0; trial < 10; ++trial) {
      const VectorXd theta = random_vector(task->dim(), rng);
      for (Index k = 0; k < task->num_devices(); ++k) {
        const VectorXd g = task->local_gradient(k, theta);
        const VectorXd fd = numeric_gradient(*task, k, theta);
        CHECK((g - fd).norm() <= 1e-5 * std::max(1.0, fd.norm()));
      }
    }
  }
}

TEST_CASE("mean of singleton batch gradients equals the full gradient") {
  QuadraticTaskSpec spec;
  spec.gradient_noise = 1.0;
  const auto quad = make_quadratic_task(spec, 2, 4);
  const auto clf = small_classifier(2);
  Rng rng(3);
  for (const Task<double>* task : {static_cast<const Task<double>*>(&quad), static_cast<const Task<double>*>(clf.get())}) {
    const VectorXd theta = random_vector(task->dim(), rng);
    for (Index k = 0; k < task->num_devices(); ++k) {
      VectorXd mean = VectorXd::Zero(task->dim());
      for (Index j = 0; j < task->shard_size(k); ++j) {
        const std::vector<Index> one{j};
        mean += gradient(*task, k, theta, one);
      }
      mean /= static_cast<double>(task->shard_size(k));
      CHECK((mean - task->local_gradient(k, theta)).norm() <= 1e-12 * std::max(1.0, mean.norm()));
    }
  }
}

TEST_CASE("closed-form optimum") {
  SUBCASE("two symmetric devices") {
    const auto task = scalar_quadratic({2, 2}, {1, -1}, {3, 3});
    const auto opt = quadratic_optimum(task);
    CHECK(opt.theta(0) == doctest::Approx(0.0));
    CHECK(opt.value == doctest::Approx(1.0));
  }
  SUBCASE("single device") {
    const auto task = scalar_quadratic({0.5}, {2.5}, {3});
    const auto opt = quadratic_optimum(task);
    CHECK(opt.theta(0) == doctest::Approx(2.5));
    CHECK(opt.value == doctest::Approx(0.0));
  }
  SUBCASE("shared minimizer") {
    const auto task = scalar_quadratic({1, 2, 3}, {-0.3, -0.3, -0.3}, {1, 4, 2});
    const auto opt = quadratic_optimum(task);
    CHECK(opt.theta(0) == doctest::Approx(-0.3));
    CHECK(opt.value == doctest::Approx(0.0));
  }
  SUBCASE("gradient vanishes at the optimum of a random task") {
    QuadraticTaskSpec spec;
    const auto task = make_quadratic_task(spec, 6, 11);
    const auto opt = quadratic_optimum(task);
    VectorXd g = VectorXd::Zero(task.dim());
    const auto w = task.data_weights();
    for (Index k = 0; k < task.num_devices(); ++k) g += w[static_cast<std::size_t>(k)] * task.local_gradient(k, opt.theta);
    CHECK(g.norm() < 1e-12);
    CHECK(global_loss(task, opt.theta) == doctest::Approx(opt.value).epsilon(1e-12));
  }
}

TEST_CASE("invalid inputs are rejected") {
  const auto task = scalar_quadratic({1}, {0}, {2});
  CHECK_THROWS_AS(global_loss<double>(task, VectorXd::Zero(2)), std::invalid_argument);
  const std::vector<Index> empty;
  CHECK_THROWS_AS(gradient<double>(task, 0, VectorXd::Zero(1), empty), std::invalid_argument);
  const std::vector<Index> outside{5};
  CHECK_THROWS_AS(gradient<double>(task, 0, VectorXd::Zero(1), outside), std::out_of_range);
  CHECK_THROWS_AS(scalar_quadratic({-1}, {0}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(scalar_quadratic({1}, {0}, {0}), std::invalid_argument);
}

TEST_CASE("float scalar instantiation") {
  std::vector<Vector<float>> c{Vector<float>::Constant(2, 2.0f)}, t{Vector<float>::Zero(2)};
  const QuadraticTask<float> task(c, t, std::vector<Index>{3});
  CHECK(global_loss<float>(task, Vector<float>::Constant(2, 1.0f)) == doctest::Approx(2.0f));
}

TEST_CASE("synthetic clusters share means across splits") {
  GaussianClustersSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 50;
  spec.noise = 0.0;
  Rng a(1), b(2);
  const Dataset first = make_gaussian_clusters(spec, 17, a);
  const Dataset second = make_gaussian_clusters(spec, 17, b);
  // zero noise: every sample sits on its class mean
  for (Index i = 0; i < second.size(); ++i) {
    Index match = -1;
    for (Index j = 0; j < first.size(); ++j)
      if (first.labels[static_cast<std::size_t>(j)] == second.labels[static_cast<std::size_t>(i)]) match = j;
    REQUIRE(match >= 0);
    CHECK((first.features.row(match) - second.features.row(i)).norm() == doctest::Approx(0.0));
  }
}
