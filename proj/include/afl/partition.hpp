#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "afl/dataset.hpp"
#include "afl/rng.hpp"
#include "afl/task.hpp"

namespace afl {

struct Shard {
  Index device = 0;
  std::vector<Index> indices;  // rows of the parent dataset

  Index size() const { return static_cast<Index>(indices.size()); }
};

/// b_k: count of samples per label.
using LabelHistogram = std::vector<std::int64_t>;

/// Uniform split without replacement: floor(|S|/N) each, the remainder going to
/// the lowest device ids.
std::vector<Shard> partition_iid(const Dataset& data, int num_devices, std::uint64_t seed);

/// Per-device label cap min(floor(200 / N), 10).
int noniid_label_cap(int num_devices);

/// Sort by label, cut label-pure shards, and deal `noniid_label_cap(N)` shards to
/// each device, so no device sees more than that many distinct labels.
std::vector<Shard> partition_noniid(const Dataset& data, int num_devices, std::uint64_t seed);

LabelHistogram label_histogram(const Dataset& data, const Shard& shard);
std::vector<LabelHistogram> label_histograms(const Dataset& data, std::span<const Shard> shards);

std::vector<std::vector<Index>> shard_indices(std::span<const Shard> shards);

/// {"devices": [{"id", "indices", "histogram"}...]}
nlohmann::json partition_manifest(const Dataset& data, std::span<const Shard> shards);

/// Optima of F and every F_k, the inputs of the heterogeneity metrics.
struct LossOptima {
  double global_min = 0;                  // F*
  std::vector<double> local_min;          // F_k*
  std::vector<double> local_at_global;    // F_k(theta*)
  std::vector<double> data_weights;       // |S_k| / |S|
};

LossOptima quadratic_optima(const QuadraticTask<double>& task);

struct WeightedSubset {
  std::vector<Index> devices;
  std::vector<double> weights;  // sums to 1
};

struct HeterogeneityReport {
  double gamma = 0;                // F* - sum_k |S_k|/|S| F_k*
  std::vector<double> gamma1;      // per subset
  std::vector<double> gamma2;      // per subset
  double zeta1 = 0;                // max |gamma1|
  double zeta2 = 0;                // max |gamma2|
  std::vector<WeightedSubset> family;
};

HeterogeneityReport heterogeneity(const LossOptima& optima, std::vector<WeightedSubset> family);

/// Data-proportional weights within `devices`.
WeightedSubset data_weighted_subset(const LossOptima& optima, std::vector<Index> devices);

/// Every nonempty subset when N <= 12, otherwise all singletons plus
/// `random_subsets` seeded uniform-size random subsets.
std::vector<WeightedSubset> default_subset_family(const LossOptima& optima, std::uint64_t seed,
                                                  int random_subsets = 2000);

nlohmann::json to_json(const HeterogeneityReport& report);

}  // namespace afl
