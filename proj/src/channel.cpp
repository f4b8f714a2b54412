#include "afl/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace afl {

double ChannelDraw::capacity() const {
  if (!(noise_power > 0)) throw std::invalid_argument("ChannelDraw: noise power must be positive");
  return std::log2(1.0 + power * large_scale_gain * fading_power() / noise_power);
}

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

ChannelDraw draw_channel(Rng& rng, double power, double large_scale_gain, double noise_power) {
  if (!(noise_power > 0)) throw std::invalid_argument("draw_channel: noise power must be positive");
  if (!(power > 0) || !(large_scale_gain > 0))
    throw std::invalid_argument("draw_channel: power and gain must be positive");
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  const double re = normal(rng);
  const double im = normal(rng);
  return {large_scale_gain, {re, im}, power, noise_power};
}

ChannelDraw draw_channel(Rng& rng, double snr_db) {
  return draw_channel(rng, db_to_linear(snr_db), 1.0, 1.0);
}

ChannelDraw fixed_channel(double fading_power, double snr_db) {
  if (fading_power < 0) throw std::invalid_argument("fixed_channel: negative fading power");
  return {1.0, {std::sqrt(fading_power), 0.0}, db_to_linear(snr_db), 1.0};
}

SymbolAllocation allocate_symbols(std::span<const double> capacities, long total) {
  if (capacities.empty()) return {total, {}};
  if (total < static_cast<long>(capacities.size()))
    throw std::invalid_argument("allocate_symbols: fewer symbols than devices");
  for (double c : capacities)
    if (!(c > 0)) throw std::domain_error("allocate_symbols: unschedulable link (zero capacity)");

  double inv_sum = 0;
  for (double c : capacities) inv_sum += 1.0 / c;

  SymbolAllocation alloc{total, std::vector<long>(capacities.size())};
  long used = 0;
  for (std::size_t k = 0; k < capacities.size(); ++k) {
    const double share = static_cast<double>(total) * (1.0 / capacities[k]) / inv_sum;
    alloc.symbols[k] = std::min(total, static_cast<long>(std::floor(share)));
    used += alloc.symbols[k];
  }
  // floating-point slack can overshoot by a symbol in pathological cases
  while (used > total) {
    auto it = std::max_element(alloc.symbols.begin(), alloc.symbols.end());
    --*it;
    --used;
  }
  for (; used < total; ++used) {
    std::size_t best = 0;
    double best_product = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < capacities.size(); ++k) {
      const double product = static_cast<double>(alloc.symbols[k]) * capacities[k];
      if (product < best_product) {
        best_product = product;
        best = k;
      }
    }
    ++alloc.symbols[best];
  }
  return alloc;
}

double log2_binomial(long d, long r) {
  if (r < 0 || r > d) return -std::numeric_limits<double>::infinity();
  if (r == 0 || r == d) return 0.0;
  const double ln = std::lgamma(static_cast<double>(d) + 1) - std::lgamma(static_cast<double>(r) + 1) -
                    std::lgamma(static_cast<double>(d - r) + 1);
  return ln / std::log(2.0);
}

int element_bits(int levels) {
  if (levels < 1) throw std::invalid_argument("element_bits: quantization levels must be >= 1");
  int bits = 0;
  while ((1L << bits) < static_cast<long>(levels) + 1) ++bits;
  return bits + 1;
}

double transmission_cost(long dim, int levels, long retained) {
  return log2_binomial(dim, retained) + 32.0 + static_cast<double>(retained) * element_bits(levels);
}

long max_sparsity(long dim, int levels, double budget_bits) {
  if (dim < 0) throw std::invalid_argument("max_sparsity: negative dimension");
  const int per_element = element_bits(levels);
  long best = 0;
  for (long r = 1; r <= dim; ++r) {
    const double cost = log2_binomial(dim, r) + 32.0 + static_cast<double>(r) * per_element;
    if (cost <= budget_bits) best = r;
  }
  return best;
}

}  // namespace afl
