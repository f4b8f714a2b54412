#pragma once

#include <optional>
#include <vector>

#include "afl/config.hpp"
#include "afl/task.hpp"

namespace afl {

struct DeviceRecord {
  Index id = 0;
  long age = 0;          // a_k
  long retained = 0;     // r_k
  long symbols = 0;      // n_k
  double capacity = 0;   // C_k
  double weight = 0;     // w_k
  std::size_t bits = 0;  // encoded length
};

struct RoundRecord {
  long t = 0;
  double wallclock = 0;
  std::vector<Index> ready;      // K(t)
  std::vector<Index> scheduled;  // Pi(t)
  long max_age = 0;
  std::size_t distinct_ages = 0;  // M(t)
  double loss = 0;                // F(theta(t+1))
  std::optional<double> accuracy;
  long round_symbols = 0;
  std::size_t round_bits = 0;
  long cumulative_symbols = 0;
  std::size_t cumulative_bits = 0;
  std::vector<DeviceRecord> devices;  // one per scheduled device, ascending id
};

struct SimResult {
  std::vector<RoundRecord> rounds;
  VectorXd final_model;
  double initial_loss = 0;  // F(theta(1))
  double horizon = 0;      // wall-clock span covered
  long symbol_budget = 0;  // per aggregation (sync: per round, fedasync: per event)
};

/// Dispatches on cfg.mode.
SimResult run(const SimConfig& cfg, const BuiltTask& task);
SimResult run(const SimConfig& cfg);

/// Periodic asynchronous aggregation, one record per server tick.
SimResult run_async(const SimConfig& cfg, const BuiltTask& task);

/// Synchronous FedAvg rounds of length T_max with budget n T_max / T~.
SimResult run_sync(const SimConfig& cfg, const BuiltTask& task);

/// One aggregation per device completion, equal per-event budgets summing to
/// (n / T~) T'.
SimResult run_fedasync(const SimConfig& cfg, const BuiltTask& task);

/// Training durations T_k ~ U(T_min, T_max), drawn once per device.
std::vector<double> draw_durations(const SimConfig& cfg);

/// Number of device completions within the horizon for the FedAsync schedule.
long count_fedasync_events(const SimConfig& cfg);

}  // namespace afl
