#include "afl/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace afl {

std::vector<Shard> partition_iid(const Dataset& data, int num_devices, std::uint64_t seed) {
  if (num_devices <= 0) throw std::invalid_argument("partition_iid: device count must be positive");
  if (data.size() < num_devices)
    throw std::invalid_argument("partition_iid: dataset smaller than device count");

  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = make_stream(seed, "partition-iid");
  std::shuffle(order.begin(), order.end(), rng);

  const Index base = data.size() / num_devices;
  const Index extra = data.size() % num_devices;
  std::vector<Shard> shards(static_cast<std::size_t>(num_devices));
  auto it = order.begin();
  for (int k = 0; k < num_devices; ++k) {
    const Index n = base + (k < extra ? 1 : 0);
    shards[static_cast<std::size_t>(k)].device = k;
    shards[static_cast<std::size_t>(k)].indices.assign(it, it + n);
    std::sort(shards[static_cast<std::size_t>(k)].indices.begin(),
              shards[static_cast<std::size_t>(k)].indices.end());
    it += n;
  }
  return shards;
}

int noniid_label_cap(int num_devices) {
  if (num_devices <= 0) throw std::invalid_argument("noniid_label_cap: device count must be positive");
  return std::max(1, std::min(200 / num_devices, 10));
}

std::vector<Shard> partition_noniid(const Dataset& data, int num_devices, std::uint64_t seed) {
  const int per_device = noniid_label_cap(num_devices);
  const Index total_shards = static_cast<Index>(num_devices) * per_device;
  if (data.size() < total_shards)
    throw std::invalid_argument("partition_noniid: " + std::to_string(data.size()) +
                                " samples cannot form " + std::to_string(total_shards) + " shards");

  // stable sort by label, then give each label a share of the shard count
  // proportional to its frequency (largest remainder), cut within the label
  std::vector<std::vector<Index>> by_label(static_cast<std::size_t>(data.num_classes));
  for (Index i = 0; i < data.size(); ++i)
    by_label[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])].push_back(i);

  const auto labels = by_label.size();
  std::vector<Index> count(labels, 0);
  std::vector<std::pair<double, std::size_t>> remainder;
  Index assigned = 0;
  for (std::size_t l = 0; l < labels; ++l) {
    const double exact = static_cast<double>(total_shards) * static_cast<double>(by_label[l].size()) /
                         static_cast<double>(data.size());
    count[l] = std::min<Index>(static_cast<Index>(std::floor(exact)), static_cast<Index>(by_label[l].size()));
    assigned += count[l];
    remainder.emplace_back(exact - std::floor(exact), l);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total_shards; i = (i + 1) % labels) {
    const std::size_t l = remainder[i].second;
    if (count[l] < static_cast<Index>(by_label[l].size())) {
      ++count[l];
      ++assigned;
    }
  }

  std::vector<std::vector<Index>> pieces;
  for (std::size_t l = 0; l < labels; ++l) {
    const Index n = static_cast<Index>(by_label[l].size());
    for (Index s = 0; s < count[l]; ++s) {
      const Index begin = s * n / count[l];
      const Index end = (s + 1) * n / count[l];
      pieces.emplace_back(by_label[l].begin() + begin, by_label[l].begin() + end);
    }
  }

  std::vector<std::size_t> deal(pieces.size());
  std::iota(deal.begin(), deal.end(), std::size_t{0});
  Rng rng = make_stream(seed, "partition-noniid");
  std::shuffle(deal.begin(), deal.end(), rng);

  std::vector<Shard> shards(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k) {
    auto& shard = shards[static_cast<std::size_t>(k)];
    shard.device = k;
    for (int s = 0; s < per_device; ++s) {
      const auto& piece = pieces[deal[static_cast<std::size_t>(k * per_device + s)]];
      shard.indices.insert(shard.indices.end(), piece.begin(), piece.end());
    }
    std::sort(shard.indices.begin(), shard.indices.end());
  }
  return shards;
}

LabelHistogram label_histogram(const Dataset& data, const Shard& shard) {
  LabelHistogram h(static_cast<std::size_t>(data.num_classes), 0);
  for (Index i : shard.indices) ++h[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(i)])];
  return h;
}

std::vector<LabelHistogram> label_histograms(const Dataset& data, std::span<const Shard> shards) {
  std::vector<LabelHistogram> out;
  out.reserve(shards.size());
  for (const auto& s : shards) out.push_back(label_histogram(data, s));
  return out;
}

std::vector<std::vector<Index>> shard_indices(std::span<const Shard> shards) {
  std::vector<std::vector<Index>> out;
  for (const auto& s : shards) out.push_back(s.indices);
  return out;
}

nlohmann::json partition_manifest(const Dataset& data, std::span<const Shard> shards) {
  nlohmann::json devices = nlohmann::json::array();
  for (const auto& s : shards)
    devices.push_back({{"id", s.device}, {"indices", s.indices}, {"histogram", label_histogram(data, s)}});
  return {{"num_classes", data.num_classes}, {"samples", data.size()}, {"devices", devices}};
}

LossOptima quadratic_optima(const QuadraticTask<double>& task) {
  LossOptima o;
  const auto opt = quadratic_optimum(task);
  o.global_min = opt.value;
  o.data_weights = task.data_weights();
  for (Index k = 0; k < task.num_devices(); ++k) {
    o.local_min.push_back(task.local_loss(k, task.target(k)));
    o.local_at_global.push_back(task.local_loss(k, opt.theta));
  }
  return o;
}

WeightedSubset data_weighted_subset(const LossOptima& optima, std::vector<Index> devices) {
  WeightedSubset s;
  double total = 0;
  for (Index k : devices) total += optima.data_weights.at(static_cast<std::size_t>(k));
  for (Index k : devices) s.weights.push_back(optima.data_weights[static_cast<std::size_t>(k)] / total);
  s.devices = std::move(devices);
  return s;
}

std::vector<WeightedSubset> default_subset_family(const LossOptima& optima, std::uint64_t seed,
                                                  int random_subsets) {
  const Index n = static_cast<Index>(optima.local_min.size());
  std::vector<WeightedSubset> family;
  if (n <= 12) {
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      std::vector<Index> devices;
      for (Index k = 0; k < n; ++k)
        if (mask & (1u << k)) devices.push_back(k);
      family.push_back(data_weighted_subset(optima, std::move(devices)));
    }
    return family;
  }
  for (Index k = 0; k < n; ++k) family.push_back(data_weighted_subset(optima, {k}));
  Rng rng = make_stream(seed, "subset-family");
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Index{0});
  std::uniform_int_distribution<Index> size_dist(1, n);
  for (int i = 0; i < random_subsets; ++i) {
    std::vector<Index> devices;
    std::sample(all.begin(), all.end(), std::back_inserter(devices), size_dist(rng), rng);
    family.push_back(data_weighted_subset(optima, std::move(devices)));
  }
  return family;
}

HeterogeneityReport heterogeneity(const LossOptima& optima, std::vector<WeightedSubset> family) {
  const std::size_t n = optima.local_min.size();
  if (optima.local_at_global.size() != n || optima.data_weights.size() != n)
    throw std::invalid_argument("heterogeneity: missing optima");

  HeterogeneityReport rep;
  rep.gamma = optima.global_min;
  for (std::size_t k = 0; k < n; ++k) rep.gamma -= optima.data_weights[k] * optima.local_min[k];
  for (const auto& subset : family) {
    if (subset.devices.empty() || subset.devices.size() != subset.weights.size())
      throw std::invalid_argument("heterogeneity: malformed subset");
    const double wsum = std::accumulate(subset.weights.begin(), subset.weights.end(), 0.0);
    if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("heterogeneity: weights not normalized");
    double g1 = optima.global_min;
    double g2 = optima.global_min;  // F(theta*) = F*
    for (std::size_t i = 0; i < subset.devices.size(); ++i) {
      const auto k = static_cast<std::size_t>(subset.devices[i]);
      g1 -= subset.weights[i] * optima.local_min.at(k);
      g2 -= subset.weights[i] * optima.local_at_global.at(k);
    }
    rep.gamma1.push_back(g1);
    rep.gamma2.push_back(g2);
    rep.zeta1 = std::max(rep.zeta1, std::abs(g1));
    rep.zeta2 = std::max(rep.zeta2, std::abs(g2));
  }
  rep.family = std::move(family);
  return rep;
}

nlohmann::json to_json(const HeterogeneityReport& report) {
  nlohmann::json subsets = nlohmann::json::array();
  for (const auto& s : report.family) subsets.push_back(s.devices);
  return {{"gamma", report.gamma},
          {"zeta1", report.zeta1},
          {"zeta2", report.zeta2},
          {"family_size", report.family.size()},
          {"family", subsets}};
}

}  // namespace afl
