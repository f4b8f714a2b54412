#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "afl/dataset.hpp"
#include "afl/partition.hpp"
#include "afl/scheduler.hpp"
#include "afl/task.hpp"
#include "afl/trainer.hpp"

namespace afl {

/// Raised for malformed or inconsistent configuration; `key()` names the
/// offending dotted path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class Mode { async_periodic, sync_fedavg, fedasync };
enum class FedAsyncOperand { device_model, raw_update };

Mode parse_mode(const std::string& name);
std::string to_string(Mode m);

struct QuadraticTaskSpec {
  int dim = 8;
  double curvature_min = 1.0;
  double curvature_max = 2.0;
  double target_spread = 1.0;     // stddev of the per-device targets; 0 makes devices identical
  int samples_per_device = 20;
  double gradient_noise = 0.0;    // stddev of the zero-mean per-sample gradient perturbation
  bool shared_target = false;     // every device shares one target (no heterogeneity)
};

/// Diagonal quadratic devices with curvatures ~ U[min, max] and targets ~ N(0, spread^2 I).
QuadraticTask<double> make_quadratic_task(const QuadraticTaskSpec& spec, int devices, std::uint64_t seed);

struct ClassificationTaskSpec {
  std::string source = "synthetic";  // synthetic | csv
  std::string train_path;
  std::string test_path;
  int classes = 10;
  int features = 16;
  int samples_per_class = 200;
  int test_per_class = 50;
  double separation = 1.0;
  double noise = 1.0;
};

struct TaskSpec {
  std::string type = "quadratic";  // quadratic | classification
  std::string partition = "iid";   // iid | noniid (classification only)
  QuadraticTaskSpec quadratic;
  ClassificationTaskSpec classification;
};

struct SimConfig {
  int devices = 8;                 // N
  int max_scheduled = 4;           // R
  long symbols = 2000;             // n per tick
  double period = 0.0;             // T~; 0 derives t_max / period_ratio
  double period_ratio = 4.0;
  double t_min = 1.0;
  double t_max = 4.0;
  int levels = 4;                  // nu
  double gamma = 1.0;
  double lambda = 0.02;
  int local_steps = 1;             // E
  Index batch_size = 0;            // 0 = full shard
  LearningRate lr;
  Mode mode = Mode::async_periodic;
  Policy policy = Policy::proposed;
  double fedasync_alpha = 0.4;
  FedAsyncOperand fedasync_operand = FedAsyncOperand::device_model;
  TaskSpec task;
  double snr_db = 13.0;
  double horizon = 0.0;            // wall-clock T'; 0 derives ticks * period
  long ticks = 200;
  std::uint64_t seed = 1;
  bool redraw_durations = false;
  SchedulerOptions scheduler;

  double tick_period() const { return period > 0 ? period : t_max / period_ratio; }
  double wallclock_horizon() const { return horizon > 0 ? horizon : static_cast<double>(ticks) * tick_period(); }
  long aggregation_ticks() const;
};

/// Defaults, overlaid with the document; unknown keys are rejected.
SimConfig parse_config(const nlohmann::json& doc);
SimConfig load_config(const std::string& path);

/// Full configuration as JSON, every key present.
nlohmann::json to_json(const SimConfig& cfg);

/// Applies `key=value` with a dotted key; the value is parsed as JSON when
/// possible and as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Checks the documented invariants; throws ConfigError.
void validate(const SimConfig& cfg);

/// A task built from its spec, with the side data the engine needs.
struct BuiltTask {
  std::shared_ptr<const Task<double>> task;
  std::shared_ptr<const QuadraticTask<double>> quadratic;  // set for quadratic tasks
  std::vector<LabelHistogram> histograms;                  // one per device
  std::optional<double> optimum_value;                     // F* when known in closed form
  nlohmann::json partition;                                 // manifest of the data split
};

BuiltTask build_task(const SimConfig& cfg);

}  // namespace afl
