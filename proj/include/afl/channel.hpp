#pragma once

#include <complex>
#include <span>
#include <vector>

#include "afl/rng.hpp"

namespace afl {

/// One block-fading realization of a device uplink.
struct ChannelDraw {
  double large_scale_gain = 1.0;        // beta_k
  std::complex<double> fading{1.0, 0};  // h_k
  double power = 1.0;                   // P_k
  double noise_power = 1.0;             // sigma_w^2

  double fading_power() const { return std::norm(fading); }

  /// log2(1 + P beta |h|^2 / sigma^2), bits per symbol.
  double capacity() const;
};

/// Linear received SNR for a mean level in dB.
double db_to_linear(double db);

/// Rayleigh draw h ~ CN(0, 1) with power control so that P beta / sigma^2
/// equals the configured mean received SNR.
ChannelDraw draw_channel(Rng& rng, double snr_db);

/// Rayleigh draw with explicit link budget.
ChannelDraw draw_channel(Rng& rng, double power, double large_scale_gain, double noise_power);

/// Fixed |h|^2 at the given mean SNR (no randomness).
ChannelDraw fixed_channel(double fading_power, double snr_db);

struct SymbolAllocation {
  long total = 0;
  std::vector<long> symbols;  // n_k, same order as the capacities
};

/// Splits n symbols so that n_k * C_k is (nearly) equal across devices: the
/// real solution is floored and leftover symbols go one at a time to the device
/// with the smallest current n_k * C_k (ties to the lowest position).
SymbolAllocation allocate_symbols(std::span<const double> capacities, long total);

/// log2 C(d, r) from log-gamma.
double log2_binomial(long d, long r);

/// Bits per retained element: sign plus ceil(log2(levels + 1)).
int element_bits(int levels);

/// log2 C(d, r) + 32 + r (ceil(log2(levels + 1)) + 1), real valued.
double transmission_cost(long dim, int levels, long retained);

/// Largest r in [0, d] whose transmission cost fits in `budget_bits`; 0 when
/// nothing fits.
long max_sparsity(long dim, int levels, double budget_bits);

}  // namespace afl
