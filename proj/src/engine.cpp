#include "afl/engine.hpp"

#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>

#include "afl/aggregator.hpp"
#include "afl/channel.hpp"
#include "afl/codec.hpp"
#include "afl/compression.hpp"
#include "afl/trainer.hpp"

namespace afl {

namespace {

struct Transmission {
  VectorXd update;
  long retained = 0;
  std::size_t bits = 0;
};

// Compress, serialize and decode one update under a bit budget.
Transmission transmit(const VectorXd& u, double budget_bits, int levels, Rng& rng) {
  Transmission out;
  const Index d = u.size();
  out.retained = max_sparsity(d, levels, budget_bits);
  if (out.retained == 0) {
    out.update = VectorXd::Zero(d);
    return out;
  }
  const CompressedUpdate sent = compress(u, out.retained, levels, rng);
  const BitString wire = encode(sent);
  out.bits = wire.size();
  out.update = reconstruct<double>(decode(wire, d, out.retained, levels));
  return out;
}

TrainerConfig trainer_config(const SimConfig& cfg) {
  TrainerConfig t;
  t.local_steps = cfg.local_steps;
  t.lambda = cfg.lambda;
  t.batch_size = cfg.batch_size;
  t.lr = cfg.lr;
  return t;
}

void evaluate(const Task<double>& task, const VectorXd& theta, RoundRecord& rec) {
  rec.loss = global_loss(task, theta);
  rec.accuracy = task.test_accuracy(theta);
}

bool reached(double busy_until, double now) { return busy_until <= now + 1e-9 * (1.0 + std::abs(now)); }

double duration_draw(const SimConfig& cfg, Index device, long restart) {
  Rng rng = make_stream(cfg.seed, "durations", static_cast<std::uint64_t>(device),
                        cfg.redraw_durations ? static_cast<std::uint64_t>(restart) : 0);
  return std::uniform_real_distribution<double>(cfg.t_min, cfg.t_max)(rng);
}

std::vector<double> shard_sizes(const Task<double>& task, const std::vector<Index>& devices) {
  std::vector<double> out;
  for (Index k : devices) out.push_back(static_cast<double>(task.shard_size(k)));
  return out;
}

void check_task(const SimConfig& cfg, const BuiltTask& built) {
  if (!built.task) throw std::invalid_argument("run: no task");
  if (built.task->num_devices() != cfg.devices)
    throw ConfigError("devices", "task has " + std::to_string(built.task->num_devices()) + " devices");
  if (built.histograms.size() != static_cast<std::size_t>(cfg.devices))
    throw std::invalid_argument("run: one label histogram per device required");
  for (Index k = 0; k < built.task->num_devices(); ++k)
    if (cfg.batch_size > built.task->shard_size(k))
      throw ConfigError("batch_size", "exceeds the shard of device " + std::to_string(k));
}

}  // namespace

std::vector<double> draw_durations(const SimConfig& cfg) {
  std::vector<double> out(static_cast<std::size_t>(cfg.devices));
  for (Index k = 0; k < cfg.devices; ++k) out[static_cast<std::size_t>(k)] = duration_draw(cfg, k, 0);
  return out;
}

SimResult run_async(const SimConfig& cfg, const BuiltTask& built) {
  validate(cfg);
  check_task(cfg, built);
  const Task<double>& task = *built.task;
  const auto n = static_cast<std::size_t>(cfg.devices);
  const Index d = task.dim();
  const double period = cfg.tick_period();
  const long ticks = cfg.aggregation_ticks();
  const TrainerConfig trainer = trainer_config(cfg);
  const auto depth = static_cast<std::size_t>(std::ceil(cfg.t_max / period - 1e-9)) + 1;

  SimResult result;
  VectorXd theta = VectorXd::Zero(d);
  result.initial_loss = global_loss(task, theta);
  result.symbol_budget = cfg.symbols;
  ModelHistory<double> history(theta, depth);
  AgeTracker tracker(cfg.devices);
  std::vector<VectorXd> anchor(n, theta);
  std::vector<double> busy_until = draw_durations(cfg);
  std::vector<long> restarts(n, 0);
  std::vector<std::int64_t> staleness(n, 0);
  long cum_symbols = 0;
  std::size_t cum_bits = 0;

  for (long t = 1; t <= ticks; ++t) {
    const double now = static_cast<double>(t) * period;
    RoundRecord rec;
    rec.t = t;
    rec.wallclock = now;
    for (Index k = 0; k < cfg.devices; ++k)
      if (reached(busy_until[static_cast<std::size_t>(k)], now)) rec.ready.push_back(k);

    // pending updates of the ready set, each from its own anchor
    std::vector<VectorXd> pending(n);
    std::vector<double> norm_sq(n, 0.0);
    for (Index k : rec.ready) {
      const auto i = static_cast<std::size_t>(k);
      const long s = tracker.last_received(k);
      if (anchor[i] != history.at(s)) throw std::logic_error("run_async: device anchor differs from broadcast version");
      Rng rng = make_stream(cfg.seed, "train", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(s));
      pending[i] = local_train(task, k, anchor[i], trainer, s, rng);
      norm_sq[i] = pending[i].squaredNorm();
    }

    ScheduleContext ctx;
    ctx.ready = rec.ready;
    ctx.capacity.assign(n, 0.0);
    Rng channel_rng = make_stream(cfg.seed, "channel", static_cast<std::uint64_t>(t));
    for (Index k : rec.ready) ctx.capacity[static_cast<std::size_t>(k)] = draw_channel(channel_rng, cfg.snr_db).capacity();
    ctx.histograms = &built.histograms;
    ctx.update_norm_sq = norm_sq;
    ctx.staleness = staleness;
    ctx.max_scheduled = cfg.max_scheduled;
    ctx.population = cfg.devices;
    Rng schedule_rng = make_stream(cfg.seed, "schedule", static_cast<std::uint64_t>(t));
    rec.scheduled = schedule(cfg.policy, ctx, schedule_rng, cfg.scheduler);
    update_staleness(staleness, rec.scheduled);

    if (!rec.scheduled.empty()) {
      std::vector<double> caps;
      std::vector<long> ages;
      for (Index k : rec.scheduled) {
        caps.push_back(ctx.capacity[static_cast<std::size_t>(k)]);
        ages.push_back(tracker.age(k, t));
      }
      const SymbolAllocation alloc = allocate_symbols(caps, cfg.symbols);
      const auto sizes = shard_sizes(task, rec.scheduled);
      const auto weights = age_weights(sizes, ages, cfg.gamma);
      std::vector<VectorXd> bases, updates;
      for (std::size_t i = 0; i < rec.scheduled.size(); ++i) {
        const Index k = rec.scheduled[i];
        Rng rng = make_stream(cfg.seed, "compress", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t));
        const double budget = static_cast<double>(alloc.symbols[i]) * caps[i];
        Transmission tx = transmit(pending[static_cast<std::size_t>(k)], budget, cfg.levels, rng);
        bases.push_back(history.at(tracker.last_received(k)));
        updates.push_back(std::move(tx.update));
        rec.devices.push_back({k, ages[i], tx.retained, alloc.symbols[i], caps[i], weights[i], tx.bits});
        rec.round_bits += tx.bits;
        rec.round_symbols += alloc.symbols[i];
      }
      theta = aggregate_async<double>(bases, updates, weights);
      rec.max_age = *std::max_element(ages.begin(), ages.end());
      rec.distinct_ages = distinct_ages(ages);
    }

    history.push(theta);
    tracker.broadcast(rec.ready, t);
    for (Index k : rec.ready) {
      const auto i = static_cast<std::size_t>(k);
      anchor[i] = theta;
      busy_until[i] = now + duration_draw(cfg, k, ++restarts[i]);
    }

    cum_symbols += rec.round_symbols;
    cum_bits += rec.round_bits;
    rec.cumulative_symbols = cum_symbols;
    rec.cumulative_bits = cum_bits;
    evaluate(task, theta, rec);
    result.rounds.push_back(std::move(rec));
  }
  result.final_model = theta;
  result.horizon = static_cast<double>(ticks) * period;
  return result;
}

SimResult run_sync(const SimConfig& cfg, const BuiltTask& built) {
  validate(cfg);
  check_task(cfg, built);
  const Task<double>& task = *built.task;
  const auto n = static_cast<std::size_t>(cfg.devices);
  const Index d = task.dim();
  const double round_length = cfg.t_max;
  const auto rounds = static_cast<long>(std::floor(cfg.wallclock_horizon() / round_length + 1e-9));
  if (rounds < 1) throw ConfigError("horizon", "shorter than one synchronous round (T_max)");
  const long budget = std::llround(static_cast<double>(cfg.symbols) * cfg.t_max / cfg.tick_period());
  const TrainerConfig trainer = trainer_config(cfg);

  SimResult result;
  VectorXd theta = VectorXd::Zero(d);
  result.initial_loss = global_loss(task, theta);
  result.symbol_budget = budget;
  std::vector<std::int64_t> staleness(n, 0);
  long cum_symbols = 0;
  std::size_t cum_bits = 0;

  for (long t = 1; t <= rounds; ++t) {
    RoundRecord rec;
    rec.t = t;
    rec.wallclock = static_cast<double>(t) * round_length;
    std::vector<VectorXd> pending(n);
    std::vector<double> norm_sq(n);
    for (Index k = 0; k < cfg.devices; ++k) {
      rec.ready.push_back(k);
      Rng rng = make_stream(cfg.seed, "train", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t));
      pending[static_cast<std::size_t>(k)] = local_train(task, k, theta, trainer, t, rng);
      norm_sq[static_cast<std::size_t>(k)] = pending[static_cast<std::size_t>(k)].squaredNorm();
    }
    ScheduleContext ctx;
    ctx.ready = rec.ready;
    ctx.capacity.assign(n, 0.0);
    Rng channel_rng = make_stream(cfg.seed, "channel", static_cast<std::uint64_t>(t));
    for (Index k : rec.ready) ctx.capacity[static_cast<std::size_t>(k)] = draw_channel(channel_rng, cfg.snr_db).capacity();
    ctx.histograms = &built.histograms;
    ctx.update_norm_sq = norm_sq;
    ctx.staleness = staleness;
    ctx.max_scheduled = cfg.max_scheduled;
    ctx.population = cfg.devices;
    Rng schedule_rng = make_stream(cfg.seed, "schedule", static_cast<std::uint64_t>(t));
    rec.scheduled = schedule(cfg.policy, ctx, schedule_rng, cfg.scheduler);
    update_staleness(staleness, rec.scheduled);

    std::vector<double> caps;
    for (Index k : rec.scheduled) caps.push_back(ctx.capacity[static_cast<std::size_t>(k)]);
    const SymbolAllocation alloc = allocate_symbols(caps, budget);
    const auto sizes = shard_sizes(task, rec.scheduled);
    double total = 0;
    for (double s : sizes) total += s;
    std::vector<VectorXd> updates;
    for (std::size_t i = 0; i < rec.scheduled.size(); ++i) {
      const Index k = rec.scheduled[i];
      Rng rng = make_stream(cfg.seed, "compress", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t));
      Transmission tx = transmit(pending[static_cast<std::size_t>(k)], static_cast<double>(alloc.symbols[i]) * caps[i],
                                 cfg.levels, rng);
      updates.push_back(std::move(tx.update));
      rec.devices.push_back({k, 0, tx.retained, alloc.symbols[i], caps[i], sizes[i] / total, tx.bits});
      rec.round_bits += tx.bits;
      rec.round_symbols += alloc.symbols[i];
    }
    theta = aggregate_sync<double>(theta, updates, sizes);
    rec.max_age = 0;
    rec.distinct_ages = 1;

    cum_symbols += rec.round_symbols;
    cum_bits += rec.round_bits;
    rec.cumulative_symbols = cum_symbols;
    rec.cumulative_bits = cum_bits;
    evaluate(task, theta, rec);
    result.rounds.push_back(std::move(rec));
  }
  result.final_model = theta;
  result.horizon = static_cast<double>(rounds) * round_length;
  return result;
}

namespace {

// Completion events (time, device) in time order, ties to the lower id.
class EventQueue {
 public:
  explicit EventQueue(const SimConfig& cfg) : cfg_(cfg), restarts_(static_cast<std::size_t>(cfg.devices), 0) {
    for (Index k = 0; k < cfg.devices; ++k) queue_.emplace(duration_draw(cfg, k, 0), k);
  }

  bool next(double horizon, double& time, Index& device) {
    if (queue_.empty()) return false;
    std::tie(time, device) = queue_.top();
    if (!reached(time, horizon)) return false;
    queue_.pop();
    return true;
  }

  void restart(Index device, double now) {
    const long r = ++restarts_[static_cast<std::size_t>(device)];
    queue_.emplace(now + duration_draw(cfg_, device, r), device);
  }

 private:
  using Event = std::pair<double, Index>;
  const SimConfig& cfg_;
  std::vector<long> restarts_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
};

}  // namespace

long count_fedasync_events(const SimConfig& cfg) {
  EventQueue q(cfg);
  const double horizon = cfg.wallclock_horizon();
  long events = 0;
  double time = 0;
  Index k = 0;
  while (q.next(horizon, time, k)) {
    ++events;
    q.restart(k, time);
  }
  return events;
}

SimResult run_fedasync(const SimConfig& cfg, const BuiltTask& built) {
  validate(cfg);
  check_task(cfg, built);
  const Task<double>& task = *built.task;
  const auto n = static_cast<std::size_t>(cfg.devices);
  const Index d = task.dim();
  const double horizon = cfg.wallclock_horizon();
  const long events = count_fedasync_events(cfg);
  if (events < 1) throw ConfigError("horizon", "no device completes within the horizon");
  const double total = static_cast<double>(cfg.symbols) / cfg.tick_period() * horizon;
  const auto budget = static_cast<long>(std::floor(total / static_cast<double>(events)));
  if (budget < 1) throw ConfigError("symbols", "fewer symbols than FedAsync events over the horizon");
  const TrainerConfig trainer = trainer_config(cfg);

  SimResult result;
  VectorXd theta = VectorXd::Zero(d);
  result.initial_loss = global_loss(task, theta);
  result.symbol_budget = budget;
  std::vector<VectorXd> anchor(n, theta);
  std::vector<long> version(n, 1);
  long cum_symbols = 0;
  std::size_t cum_bits = 0;

  EventQueue queue(cfg);
  double now = 0;
  Index k = 0;
  long t = 0;
  while (queue.next(horizon, now, k)) {
    ++t;
    const auto i = static_cast<std::size_t>(k);
    RoundRecord rec;
    rec.t = t;
    rec.wallclock = now;
    rec.ready = {k};
    rec.scheduled = {k};
    Rng train_rng = make_stream(cfg.seed, "train", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(version[i]));
    const VectorXd u = local_train(task, k, anchor[i], trainer, version[i], train_rng);
    Rng channel_rng = make_stream(cfg.seed, "channel", static_cast<std::uint64_t>(t));
    const double cap = draw_channel(channel_rng, cfg.snr_db).capacity();
    Rng rng = make_stream(cfg.seed, "compress", static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t));
    Transmission tx = transmit(u, static_cast<double>(budget) * cap, cfg.levels, rng);
    const VectorXd operand =
        cfg.fedasync_operand == FedAsyncOperand::device_model ? VectorXd(anchor[i] + tx.update) : tx.update;
    theta = fedasync_step(theta, operand, cfg.fedasync_alpha);
    rec.max_age = t - version[i];
    rec.distinct_ages = 1;
    rec.devices.push_back({k, rec.max_age, tx.retained, budget, cap, cfg.fedasync_alpha, tx.bits});
    rec.round_bits = tx.bits;
    rec.round_symbols = budget;

    anchor[i] = theta;
    version[i] = t + 1;
    queue.restart(k, now);

    cum_symbols += rec.round_symbols;
    cum_bits += rec.round_bits;
    rec.cumulative_symbols = cum_symbols;
    rec.cumulative_bits = cum_bits;
    evaluate(task, theta, rec);
    result.rounds.push_back(std::move(rec));
  }
  result.final_model = theta;
  result.horizon = horizon;
  return result;
}

SimResult run(const SimConfig& cfg, const BuiltTask& task) {
  switch (cfg.mode) {
    case Mode::async_periodic: return run_async(cfg, task);
    case Mode::sync_fedavg: return run_sync(cfg, task);
    case Mode::fedasync: return run_fedasync(cfg, task);
  }
  throw std::invalid_argument("run: unknown mode");
}

SimResult run(const SimConfig& cfg) {
  validate(cfg);
  return run(cfg, build_task(cfg));
}

}  // namespace afl
