#include <doctest.h>

#include <set>

#include "afl/cli.hpp"
#include "afl/scheduler.hpp"

using namespace afl;

namespace {

ScheduleContext context(const std::vector<LabelHistogram>& hist, std::vector<double> caps, int R) {
  ScheduleContext ctx;
  ctx.histograms = &hist;
  ctx.capacity = std::move(caps);
  ctx.max_scheduled = R;
  ctx.population = static_cast<int>(hist.size());
  for (std::size_t k = 0; k < hist.size(); ++k) ctx.ready.push_back(static_cast<Index>(k));
  ctx.update_norm_sq.assign(hist.size(), 1.0);
  ctx.staleness.assign(hist.size(), 0);
  return ctx;
}

// Direct evaluation of the pooled label variance.
double reference_omega(const std::vector<LabelHistogram>& hist, const std::vector<Index>& devices) {
  std::vector<double> pooled(hist.front().size(), 0);
  for (Index k : devices)
    for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] += static_cast<double>(hist[static_cast<std::size_t>(k)][j]);
  double mean = 0;
  for (double v : pooled) mean += v / static_cast<double>(pooled.size());
  double s = 0;
  for (double v : pooled) s += (v - mean) * (v - mean);
  return s;
}

}  // namespace

TEST_CASE("label variance of pooled histograms") {
  const std::vector<LabelHistogram> h{{10, 0}, {0, 10}, {10, 0}, {5, 5, 5}};
  const std::vector<Index> ab{0, 1}, ac{0, 2}, single{3};
  CHECK(omega(h, ab) == 0.0);
  CHECK(omega(h, ac) == 200.0);
  CHECK(omega(h, single) == 0.0);
  CHECK(scaled_omega(h, ac) == 400);
}

TEST_CASE("every policy returns K when it fits") {
  const std::vector<LabelHistogram> h{{3, 1}, {0, 2}, {5, 0}};
  for (Policy p : {Policy::random, Policy::bc, Policy::bcbn2, Policy::age, Policy::proposed}) {
    ScheduleContext ctx = context(h, {1, 2, 3}, 3);
    Rng rng(1);
    CHECK(schedule(p, ctx, rng) == std::vector<Index>{0, 1, 2});
    ctx.ready = {2, 0};
    CHECK(schedule(p, ctx, rng) == std::vector<Index>{0, 2});
    ctx.ready.clear();
    CHECK(schedule(p, ctx, rng).empty());
  }
}

TEST_CASE("proposed picks the balanced pair") {
  const std::vector<LabelHistogram> h{{10, 0}, {0, 10}, {10, 0}};
  ScheduleContext ctx = context(h, {1, 1, 1}, 2);
  ctx.population = 6;  // prefilter keeps all three
  Rng rng(1);
  CHECK(schedule(Policy::proposed, ctx, rng) == std::vector<Index>{0, 1});
  CHECK(oracle_min_omega(h, {0, 1, 2}, 2) == std::vector<Index>{0, 1});
  CHECK(min_omega_subset(h, {0, 1, 2}, 2) == std::vector<Index>{0, 1});
  CHECK(min_omega_subset(h, {2, 0}, 2) == std::vector<Index>{0, 2});
}

TEST_CASE("best capacity") {
  const std::vector<LabelHistogram> h(3, LabelHistogram{1});
  ScheduleContext ctx = context(h, {1, 5, 3}, 2);
  Rng rng(1);
  CHECK(schedule(Policy::bc, ctx, rng) == std::vector<Index>{1, 2});
}

TEST_CASE("norm and age policies rank inside the prefilter") {
  const std::vector<LabelHistogram> h(6, LabelHistogram{1});
  ScheduleContext ctx = context(h, {6, 5, 4, 3, 2, 1}, 2);
  ctx.update_norm_sq = {1, 2, 3, 100, 100, 100};
  ctx.staleness = {0, 7, 3, 9, 9, 9};
  Rng rng(1);
  // prefilter = three best channels {0, 1, 2}
  CHECK(capacity_prefilter(ctx) == std::vector<Index>{0, 1, 2});
  CHECK(schedule(Policy::bcbn2, ctx, rng) == std::vector<Index>{1, 2});
  CHECK(schedule(Policy::age, ctx, rng) == std::vector<Index>{1, 2});
}

TEST_CASE("prefilter never drops below the schedule size") {
  const std::vector<LabelHistogram> h(10, LabelHistogram{1});
  ScheduleContext ctx = context(h, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 6);
  CHECK(capacity_prefilter(ctx).size() == 6);
  ctx.max_scheduled = 2;
  CHECK(capacity_prefilter(ctx).size() == 5);
  ctx.ready = {0, 1, 2};
  CHECK(capacity_prefilter(ctx).size() == 3);
}

TEST_CASE("random policy is uniform over subsets") {
  const std::vector<LabelHistogram> h(4, LabelHistogram{1});
  ScheduleContext ctx = context(h, {1, 1, 1, 1}, 2);
  Rng rng(3);
  std::vector<int> hits(4, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i)
    for (Index k : schedule(Policy::random, ctx, rng)) ++hits[static_cast<std::size_t>(k)];
  for (int c : hits) CHECK(std::abs(c / double(draws) - 0.5) < 4 * std::sqrt(0.25 / draws));
}

TEST_CASE("staleness counters") {
  std::vector<std::int64_t> c(3, 0);
  CHECK(c == std::vector<std::int64_t>{0, 0, 0});
  for (int round = 0; round < 3; ++round) {
    const std::vector<Index> pi{0};
    update_staleness(c, pi);
  }
  CHECK(c[0] == 0);
  CHECK(c[1] == 3);
  CHECK(c[2] == 3);
}

TEST_CASE("oracle guard and sizes") {
  std::vector<LabelHistogram> h(30, LabelHistogram{1, 2});
  std::vector<Index> all(30);
  for (Index k = 0; k < 30; ++k) all[static_cast<std::size_t>(k)] = k;
  CHECK_THROWS_AS(oracle_min_omega(h, all, 15, 1e6), std::length_error);
  CHECK(oracle_min_omega(h, {4}, 1) == std::vector<Index>{4});
  CHECK(min_omega_subset(h, {7, 3}, 2) == std::vector<Index>{3, 7});
}

TEST_CASE("exhaustive oracle agrees with direct evaluation") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 9)(rng);
    std::vector<LabelHistogram> h(static_cast<std::size_t>(n), LabelHistogram(4, 0));
    for (auto& row : h)
      for (auto& v : row) v = std::uniform_int_distribution<int>(0, 30)(rng);
    std::vector<Index> all(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) all[static_cast<std::size_t>(k)] = k;
    const std::size_t size = std::uniform_int_distribution<std::size_t>(1, static_cast<std::size_t>(n))(rng);
    const auto best = oracle_min_omega(h, all, size);
    // brute force over bitmasks
    double want = INFINITY;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != size) continue;
      std::vector<Index> s;
      for (int k = 0; k < n; ++k)
        if (mask & (1u << k)) s.push_back(k);
      want = std::min(want, reference_omega(h, s));
    }
    CHECK(reference_omega(h, best) == doctest::Approx(want));
  }
}

TEST_CASE("proposed matches the oracle on random instances") {
  const auto report = oracle_report(random_oracle_instances(200, 42), 1e6);
  CHECK(report["pass"].get<bool>());
  CHECK(report["equal"].get<int>() == 200);
  std::size_t largest = 0;
  for (const auto& i : report["instances"]) largest = std::max(largest, i["prefilter_size"].get<std::size_t>());
  CHECK(largest <= 12);
  CHECK(largest >= 10);
}

TEST_CASE("greedy fallback stays close on larger instances") {
  Rng rng(4);
  std::vector<LabelHistogram> h(16, LabelHistogram(10, 0));
  for (auto& row : h) row[std::uniform_int_distribution<std::size_t>(0, 9)(rng)] = 50;
  std::vector<Index> all(16);
  for (Index k = 0; k < 16; ++k) all[static_cast<std::size_t>(k)] = k;
  const auto g = greedy_min_omega(h, all, 5);
  CHECK(g.size() == 5);
  CHECK(std::set<Index>(g.begin(), g.end()).size() == 5);
  CHECK(omega(h, g) <= omega(h, std::vector<Index>{0, 1, 2, 3, 4}) + 1e-9);
}

TEST_CASE("policy names") {
  for (const char* name : {"random", "bc", "bcbn2", "age", "proposed"}) CHECK(to_string(parse_policy(name)) == name);
  CHECK_THROWS_AS(parse_policy("best"), std::invalid_argument);
}
