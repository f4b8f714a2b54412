#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afl/partition.hpp"
#include "afl/rng.hpp"

namespace afl {

enum class Policy { random, bc, bcbn2, age, proposed };

Policy parse_policy(const std::string& name);
std::string to_string(Policy p);

/// Omega(Pi) = sum_j |sum_k b_k^j - mean|^2 over the pooled histogram.
double omega(std::span<const LabelHistogram* const> histograms);
double omega(const std::vector<LabelHistogram>& all, std::span<const Index> devices);

/// omega_classes * Omega in exact integer arithmetic, used for tie-free comparison.
std::int64_t scaled_omega(const std::vector<LabelHistogram>& all, std::span<const Index> devices);

struct ScheduleContext {
  std::vector<Index> ready;                    // K(t), device ids
  std::vector<double> capacity;                // C_k, indexed by device id
  const std::vector<LabelHistogram>* histograms = nullptr;  // b_k, indexed by device id
  std::vector<double> update_norm_sq;          // ||u_k||^2 by device id (bcbn2)
  std::vector<std::int64_t> staleness;         // c_k by device id (age)
  int max_scheduled = 1;                       // R
  int population = 1;                          // N
};

struct SchedulerOptions {
  double prefilter_fraction = 0.5;      // |Pi'| = max(floor(fraction N), target) capped at |K|
  double exhaustive_limit = 2e5;        // C(|Pi'|, size) at or below this is searched exhaustively
};

/// Pi(t), ascending device ids, |Pi| = min(R, |K|). Empty K gives an empty set.
std::vector<Index> schedule(Policy policy, const ScheduleContext& ctx, Rng& rng,
                            const SchedulerOptions& opts = {});

/// The capacity pre-filter Pi' shared by bcbn2, age and proposed.
std::vector<Index> capacity_prefilter(const ScheduleContext& ctx, const SchedulerOptions& opts = {});

/// Subset of `candidates` with the given size minimizing Omega: exhaustive
/// below the option limit, else greedy forward selection plus one swap pass.
std::vector<Index> min_omega_subset(const std::vector<LabelHistogram>& hist, std::vector<Index> candidates,
                                    std::size_t size, const SchedulerOptions& opts = {});

/// Greedy forward selection followed by one pass of pairwise swaps.
std::vector<Index> greedy_min_omega(const std::vector<LabelHistogram>& hist, std::vector<Index> candidates,
                                    std::size_t size);

/// Exhaustive reference over every size-subset; ties go to the lexicographically
/// smallest id sequence. Throws std::length_error above `guard` candidates.
std::vector<Index> oracle_min_omega(const std::vector<LabelHistogram>& hist, std::vector<Index> candidates,
                                    std::size_t size, double guard = 1e6);

/// c_k += 1 for every device outside `scheduled`.
void update_staleness(std::vector<std::int64_t>& counters, std::span<const Index> scheduled);

}  // namespace afl
