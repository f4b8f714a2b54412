#include "afl/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <limits>
#include <stdexcept>

namespace afl {

Policy parse_policy(const std::string& name) {
  if (name == "random" || name == "rdm") return Policy::random;
  if (name == "bc") return Policy::bc;
  if (name == "bcbn2") return Policy::bcbn2;
  if (name == "age") return Policy::age;
  if (name == "proposed") return Policy::proposed;
  throw std::invalid_argument("unknown scheduling policy: " + name);
}

std::string to_string(Policy p) {
  switch (p) {
    case Policy::random: return "random";
    case Policy::bc: return "bc";
    case Policy::bcbn2: return "bcbn2";
    case Policy::age: return "age";
    case Policy::proposed: return "proposed";
  }
  return "unknown";
}

double omega(std::span<const LabelHistogram* const> histograms) {
  if (histograms.empty()) throw std::invalid_argument("omega: empty schedule");
  const std::size_t classes = histograms.front()->size();
  std::vector<double> pooled(classes, 0.0);
  for (const auto* h : histograms) {
    if (h->size() != classes) throw std::invalid_argument("omega: histograms differ in label count");
    for (std::size_t j = 0; j < classes; ++j) pooled[j] += static_cast<double>((*h)[j]);
  }
  double mean = 0;
  for (double v : pooled) mean += v;
  mean /= static_cast<double>(classes);
  double sum = 0;
  for (double v : pooled) sum += (v - mean) * (v - mean);
  return sum;
}

double omega(const std::vector<LabelHistogram>& all, std::span<const Index> devices) {
  std::vector<const LabelHistogram*> ptrs;
  for (Index k : devices) ptrs.push_back(&all.at(static_cast<std::size_t>(k)));
  return omega(ptrs);
}

namespace {

std::int64_t scaled_from_pooled(const std::vector<std::int64_t>& pooled) {
  std::int64_t total = 0;
  std::int64_t sq = 0;
  for (auto v : pooled) {
    total += v;
    sq += v * v;
  }
  return static_cast<std::int64_t>(pooled.size()) * sq - total * total;
}

void add_into(std::vector<std::int64_t>& pooled, const LabelHistogram& h, std::int64_t sign) {
  for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] += sign * h[j];
}

// Ranks devices by descending key, ties to the lower id, and keeps the first m.
std::vector<Index> top_by(std::vector<Index> ids, std::size_t m, const std::function<double(Index)>& key) {
  std::stable_sort(ids.begin(), ids.end());
  std::stable_sort(ids.begin(), ids.end(), [&](Index a, Index b) { return key(a) > key(b); });
  ids.resize(std::min(m, ids.size()));
  std::sort(ids.begin(), ids.end());
  return ids;
}

double combinations(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  double c = 1;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

std::vector<Index> exhaustive_min_omega(const std::vector<LabelHistogram>& hist,
                                        const std::vector<Index>& candidates, std::size_t size) {
  const std::size_t n = candidates.size();
  const std::size_t classes = hist.at(static_cast<std::size_t>(candidates.front())).size();
  std::vector<std::size_t> pos(size);
  for (std::size_t i = 0; i < size; ++i) pos[i] = i;
  std::vector<std::size_t> best_pos = pos;
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  std::vector<std::int64_t> pooled(classes);
  // lexicographic order of position tuples, so the first strict minimum wins ties
  while (true) {
    std::fill(pooled.begin(), pooled.end(), 0);
    for (std::size_t i : pos) add_into(pooled, hist[static_cast<std::size_t>(candidates[i])], 1);
    const std::int64_t value = scaled_from_pooled(pooled);
    if (value < best) {
      best = value;
      best_pos = pos;
    }
    std::size_t i = size;
    while (i > 0 && pos[i - 1] == n - size + (i - 1)) --i;
    if (i == 0) break;
    ++pos[i - 1];
    for (std::size_t j = i; j < size; ++j) pos[j] = pos[j - 1] + 1;
  }
  std::vector<Index> out;
  for (std::size_t i : best_pos) out.push_back(candidates[i]);
  return out;
}

}  // namespace

std::int64_t scaled_omega(const std::vector<LabelHistogram>& all, std::span<const Index> devices) {
  if (devices.empty()) throw std::invalid_argument("omega: empty schedule");
  std::vector<std::int64_t> pooled(all.at(static_cast<std::size_t>(devices.front())).size(), 0);
  for (Index k : devices) add_into(pooled, all.at(static_cast<std::size_t>(k)), 1);
  return scaled_from_pooled(pooled);
}

std::vector<Index> greedy_min_omega(const std::vector<LabelHistogram>& hist, std::vector<Index> candidates,
                                    std::size_t size) {
  std::sort(candidates.begin(), candidates.end());
  size = std::min(size, candidates.size());
  if (size == 0) return {};
  const std::size_t classes = hist.at(static_cast<std::size_t>(candidates.front())).size();
  std::vector<std::int64_t> pooled(classes, 0);
  std::vector<Index> chosen;
  std::vector<Index> rest = candidates;
  while (chosen.size() < size) {
    std::size_t best_i = 0;
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i < rest.size(); ++i) {
      add_into(pooled, hist[static_cast<std::size_t>(rest[i])], 1);
      const auto v = scaled_from_pooled(pooled);
      add_into(pooled, hist[static_cast<std::size_t>(rest[i])], -1);
      if (v < best) {
        best = v;
        best_i = i;
      }
    }
    add_into(pooled, hist[static_cast<std::size_t>(rest[best_i])], 1);
    chosen.push_back(rest[best_i]);
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(best_i));
  }

  std::int64_t current = scaled_from_pooled(pooled);
  for (std::size_t s = 0; s < chosen.size(); ++s) {
    for (std::size_t u = 0; u < rest.size(); ++u) {
      add_into(pooled, hist[static_cast<std::size_t>(chosen[s])], -1);
      add_into(pooled, hist[static_cast<std::size_t>(rest[u])], 1);
      const auto v = scaled_from_pooled(pooled);
      if (v < current) {
        current = v;
        std::swap(chosen[s], rest[u]);
      } else {
        add_into(pooled, hist[static_cast<std::size_t>(rest[u])], -1);
        add_into(pooled, hist[static_cast<std::size_t>(chosen[s])], 1);
      }
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

std::vector<Index> min_omega_subset(const std::vector<LabelHistogram>& hist, std::vector<Index> candidates,
                                    std::size_t size, const SchedulerOptions& opts) {
  std::sort(candidates.begin(), candidates.end());
  size = std::min(size, candidates.size());
  if (size == 0) return {};
  if (size == candidates.size()) return candidates;
  if (combinations(candidates.size(), size) <= opts.exhaustive_limit)
    return exhaustive_min_omega(hist, candidates, size);
  return greedy_min_omega(hist, std::move(candidates), size);
}

std::vector<Index> oracle_min_omega(const std::vector<LabelHistogram>& hist, std::vector<Index> candidates,
                                    std::size_t size, double guard) {
  std::sort(candidates.begin(), candidates.end());
  if (size > candidates.size()) throw std::invalid_argument("oracle_min_omega: size exceeds candidate count");
  if (combinations(candidates.size(), size) > guard)
    throw std::length_error("oracle_min_omega: " + std::to_string(candidates.size()) + " choose " +
                            std::to_string(size) + " exceeds the enumeration guard");
  if (size == 0) return {};

  std::vector<Index> best;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<Index> current;
  std::function<void(std::size_t)> visit = [&](std::size_t next) {
    if (current.size() == size) {
      const double v = omega(hist, current);
      if (best.empty()) {
        best_value = v;
        best = current;
        return;
      }
      const bool better = v < best_value - 1e-9 * std::max(1.0, std::abs(best_value));
      const bool tie = !better && std::abs(v - best_value) <= 1e-9 * std::max(1.0, std::abs(best_value));
      if (better || (tie && std::lexicographical_compare(current.begin(), current.end(), best.begin(), best.end()))) {
        best_value = std::min(v, best_value);
        best = current;
      }
      return;
    }
    if (candidates.size() - next < size - current.size()) return;
    // exclude first, so ties must be resolved by the explicit comparison above
    visit(next + 1);
    current.push_back(candidates[next]);
    visit(next + 1);
    current.pop_back();
  };
  visit(0);
  return best;
}

std::vector<Index> capacity_prefilter(const ScheduleContext& ctx, const SchedulerOptions& opts) {
  const std::size_t target = std::min<std::size_t>(static_cast<std::size_t>(ctx.max_scheduled), ctx.ready.size());
  const auto base = static_cast<std::size_t>(std::floor(opts.prefilter_fraction * ctx.population));
  const std::size_t m = std::min(ctx.ready.size(), std::max(base, target));
  return top_by(ctx.ready, m, [&](Index k) { return ctx.capacity.at(static_cast<std::size_t>(k)); });
}

std::vector<Index> schedule(Policy policy, const ScheduleContext& ctx, Rng& rng, const SchedulerOptions& opts) {
  if (ctx.max_scheduled < 1) throw std::invalid_argument("schedule: R must be >= 1");
  std::vector<Index> ready = ctx.ready;
  std::sort(ready.begin(), ready.end());
  if (ready.empty()) return {};
  const std::size_t target = std::min<std::size_t>(static_cast<std::size_t>(ctx.max_scheduled), ready.size());

  switch (policy) {
    case Policy::random: {
      if (target == ready.size()) return ready;
      std::vector<Index> out;
      std::sample(ready.begin(), ready.end(), std::back_inserter(out), static_cast<std::ptrdiff_t>(target), rng);
      return out;
    }
    case Policy::bc:
      return top_by(ready, target, [&](Index k) { return ctx.capacity.at(static_cast<std::size_t>(k)); });
    case Policy::bcbn2: {
      for (Index k : ready)
        if (static_cast<std::size_t>(k) >= ctx.update_norm_sq.size())
          throw std::invalid_argument("schedule: bcbn2 needs update norms for every ready device");
      return top_by(capacity_prefilter(ctx, opts), target,
                    [&](Index k) { return ctx.update_norm_sq[static_cast<std::size_t>(k)]; });
    }
    case Policy::age:
      return top_by(capacity_prefilter(ctx, opts), target,
                    [&](Index k) { return static_cast<double>(ctx.staleness.at(static_cast<std::size_t>(k))); });
    case Policy::proposed: {
      if (!ctx.histograms) throw std::invalid_argument("schedule: proposed policy needs label histograms");
      return min_omega_subset(*ctx.histograms, capacity_prefilter(ctx, opts), target, opts);
    }
  }
  throw std::invalid_argument("schedule: unknown policy");
}

void update_staleness(std::vector<std::int64_t>& counters, std::span<const Index> scheduled) {
  std::vector<bool> in(counters.size(), false);
  for (Index k : scheduled) in.at(static_cast<std::size_t>(k)) = true;
  for (std::size_t k = 0; k < counters.size(); ++k)
    if (!in[k]) ++counters[k];
}

}  // namespace afl
