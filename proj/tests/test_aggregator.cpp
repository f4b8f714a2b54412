#include <doctest.h>

#include "afl/aggregator.hpp"

using namespace afl;

TEST_CASE("age bookkeeping") {
  AgeTracker tracker(3);
  CHECK(tracker.ages(1) == std::vector<long>{0, 0, 0});
  const std::vector<Index> k2{0};
  tracker.broadcast(k2, 2);
  CHECK(tracker.last_received(0) == 3);
  CHECK(tracker.age(0, 5) == 2);
  const std::vector<Index> k4{1};
  tracker.broadcast(k4, 4);
  CHECK(tracker.age(1, 5) == 0);
  CHECK(tracker.age(2, 5) == 4);
  CHECK_THROWS_AS(tracker.age(1, 4), std::logic_error);
}

TEST_CASE("distinct ages") {
  CHECK(distinct_ages({}) == 0);
  CHECK(distinct_ages({3, 1, 3, 0, 1}) == 3);
}

TEST_CASE("age-aware weights") {
  const std::vector<double> sizes{10, 30};
  SUBCASE("gamma one is the data proportion") {
    const std::vector<long> ages{0, 5};
    const auto w = age_weights(sizes, ages, 1.0);
    CHECK(w[0] == doctest::Approx(0.25));
    CHECK(w[1] == doctest::Approx(0.75));
  }
  SUBCASE("fresher devices gain weight") {
    const std::vector<double> equal{1, 1};
    const std::vector<long> ages{0, 2};
    const auto w = age_weights(equal, ages, 0.5);
    CHECK(w[0] == doctest::Approx(0.8));
    CHECK(w[1] == doctest::Approx(0.2));
  }
  SUBCASE("equal ages cancel gamma") {
    const std::vector<long> ages{3, 3};
    for (double g : {0.1, 0.5, 2.0}) {
      const auto w = age_weights(sizes, ages, g);
      CHECK(w[0] == doctest::Approx(0.25));
    }
  }
  SUBCASE("extreme ages stay normalized") {
    const std::vector<long> ages{0, 5000};
    const auto w = age_weights(sizes, ages, 0.5);
    CHECK(w[0] == doctest::Approx(1.0));
    CHECK(w[0] + w[1] == doctest::Approx(1.0));
  }
  const std::vector<long> ages{0};
  CHECK_THROWS_AS(age_weights(sizes, ages, 1.0), std::invalid_argument);
  const std::vector<long> two{0, 0};
  CHECK_THROWS_AS(age_weights(sizes, two, 0.0), std::invalid_argument);
}

TEST_CASE("asynchronous aggregation") {
  SUBCASE("weighted average of based updates") {
    const std::vector<VectorXd> bases{VectorXd::Constant(2, 0.5), VectorXd::Constant(2, 1.0)};
    const std::vector<VectorXd> updates{VectorXd::Constant(2, 0.5), VectorXd::Constant(2, 1.0)};
    const std::vector<double> w{0.8, 0.2};
    const VectorXd out = aggregate_async<double>(bases, updates, w);
    CHECK(out(0) == doctest::Approx(1.2));
    CHECK(out(1) == doctest::Approx(1.2));
  }
  SUBCASE("single device") {
    const std::vector<VectorXd> bases{VectorXd::Constant(3, 2.0)};
    const std::vector<VectorXd> updates{VectorXd::LinSpaced(3, 0, 1)};
    const std::vector<double> w{1.0};
    CHECK((aggregate_async<double>(bases, updates, w) - (bases[0] + updates[0])).norm() < 1e-15);
  }
  SUBCASE("fixed point") {
    const VectorXd theta = VectorXd::LinSpaced(4, -1, 2);
    const std::vector<VectorXd> bases(3, theta), updates(3, VectorXd::Zero(4));
    const std::vector<double> w{0.2, 0.3, 0.5};
    CHECK((aggregate_async<double>(bases, updates, w) - theta).norm() < 1e-15);
  }
  const std::vector<VectorXd> one{VectorXd::Zero(1)};
  const std::vector<double> bad{0.9};
  CHECK_THROWS_AS(aggregate_async<double>(one, one, bad), std::invalid_argument);
}

TEST_CASE("synchronous aggregation") {
  VectorXd a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  const std::vector<VectorXd> updates{a, b};
  const std::vector<double> sizes{5, 5};
  const VectorXd out = aggregate_sync<double>(VectorXd::Zero(2), updates, sizes);
  CHECK(out(0) == doctest::Approx(0.5));
  CHECK(out(1) == doctest::Approx(0.5));
  const std::vector<VectorXd> zeros(2, VectorXd::Zero(2));
  CHECK(aggregate_sync<double>(a, zeros, sizes) == a);
  const std::vector<VectorXd> single{b};
  const std::vector<double> s1{3};
  CHECK(aggregate_sync<double>(a, single, s1) == a + b);
}

TEST_CASE("fedasync mixing") {
  const VectorXd theta = VectorXd::Constant(1, 1.0);
  CHECK(fedasync_step<double>(theta, VectorXd::Zero(1), 0.4)(0) == doctest::Approx(0.6));
  CHECK(fedasync_step<double>(theta, VectorXd::Constant(1, 7.0), 1.0)(0) == doctest::Approx(7.0));
  for (double a : {0.1, 0.4, 0.8}) CHECK(fedasync_step<double>(theta, theta, a)(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(fedasync_step<double>(theta, theta, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(fedasync_step<double>(theta, theta, 1.5), std::invalid_argument);
}

TEST_CASE("model history ring") {
  ModelHistory<double> h(VectorXd::Zero(1), 3);
  CHECK(h.latest_iteration() == 1);
  for (int i = 2; i <= 6; ++i) h.push(VectorXd::Constant(1, i));
  CHECK(h.latest_iteration() == 6);
  CHECK(h.at(4)(0) == 4.0);
  CHECK(h.latest()(0) == 6.0);
  CHECK_THROWS_AS(h.at(3), std::out_of_range);
  CHECK_THROWS_AS(h.at(7), std::out_of_range);
}
