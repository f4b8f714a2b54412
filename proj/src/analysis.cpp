#include "afl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "afl/channel.hpp"
#include "afl/compression.hpp"
#include "afl/engine.hpp"

namespace afl {

using nlohmann::json;

namespace {

// Running mean and variance.
struct Moments {
  long n = 0;
  double mean = 0;
  double m2 = 0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double standard_error() const { return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

std::vector<Index> iota_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Index{0});
  return v;
}

VectorXd sampled_gradient(const QuadraticTask<double>& task, Index k, const VectorXd& theta, Index batch,
                          const std::vector<Index>& positions, std::vector<Index>& scratch, Rng& rng) {
  if (batch == 0 || batch >= task.shard_size(k)) return task.batch_gradient(k, theta, positions);
  scratch.clear();
  std::sample(positions.begin(), positions.end(), std::back_inserter(scratch), batch, rng);
  return task.batch_gradient(k, theta, scratch);
}

double j_numerator(const TheoryConstants& c) {
  const double L2 = c.L * c.L;
  return c.beta * c.beta * c.C3 * (c.C1 / 2 + c.A * L2 * c.C2 / c.mu) +
         L2 * c.C2 * c.C3 * c.beta * c.beta * c.beta * c.A;
}

double j_value(const TheoryConstants& c) {
  const double den = j_denominator(c, c.kappa + 1);
  if (!(den > 0))
    throw std::domain_error("theorem bound: nonpositive J denominator (kappa too small for beta, r_min)");
  const double num = j_numerator(c);
  return num == 0 ? 0.0 : num / den;
}

}  // namespace

double quantization_factor(long d, int levels) {
  if (d < 1 || levels < 1) throw std::invalid_argument("quantization_factor: need d >= 1 and nu >= 1");
  return 4.0 * (1.0 + static_cast<double>(d) / (4.0 * levels * levels));
}

double kappa_for(const TheoryConstants& c, double beta) {
  const double C3 = quantization_factor(c.d, c.levels);
  const double slack = beta * c.mu * c.r_min - static_cast<double>(c.d);
  if (!(slack > 0)) throw std::domain_error("kappa: beta must exceed d / (mu r_min)");
  const double first = static_cast<double>(c.d) * c.L * c.L * c.C2 * C3 * beta * beta / slack;
  return std::max({first, 4 * c.L * beta - 1, 1.0});
}

double j_denominator(const TheoryConstants& c, double kappa_term) {
  const double C3 = quantization_factor(c.d, c.levels);
  return (c.mu * c.beta * c.r_min / static_cast<double>(c.d) - 1) - c.L * c.L * c.C2 * C3 * c.beta * c.beta / kappa_term;
}

void finalize(TheoryConstants& c, double beta) {
  if (!(c.L > 0) || !(c.mu > 0) || c.mu > c.L) throw std::invalid_argument("theory constants: need 0 < mu <= L");
  if (!(c.r_min > 0)) throw std::domain_error("infeasible beta: r_min = 0, no update fits the bit budget");
  if (c.C2 < 1 || c.C1 < 0) throw std::invalid_argument("theory constants: need C1 >= 0 and C2 >= 1");
  if (c.M < 1) throw std::invalid_argument("theory constants: need M >= 1");
  const double floor_beta = static_cast<double>(c.d) / (c.mu * c.r_min);
  if (!(beta > floor_beta))
    throw std::domain_error("infeasible beta: need beta > d / (mu r_min) = " + std::to_string(floor_beta));
  c.C3 = quantization_factor(c.d, c.levels);
  c.A = 2 * (c.zeta1 + c.zeta2);
  c.beta = beta;
  c.kappa = kappa_for(c, beta);
  c.J = j_value(c);
}

double theorem1_bound(long t, const TheoryConstants& c, double initial_gap) {
  if (t < 1) throw std::invalid_argument("theorem1_bound: t must be >= 1");
  if (initial_gap < 0) throw std::invalid_argument("theorem1_bound: negative initial gap");
  const double J = j_value(c);
  const double lm = c.L * c.M;
  return lm / (2 * (static_cast<double>(t) + c.kappa + 1)) * (J + (c.kappa + 1) * initial_gap) +
         lm / 2 * c.beta * c.A;
}

double estimate_r_min(long d, const DeriveOptions& opts, int devices) {
  const int scheduled = opts.scheduled > 0 ? opts.scheduled : devices;
  if (scheduled < 1 || opts.channel_trials < 1) throw std::invalid_argument("estimate_r_min: empty Monte Carlo");
  Rng rng = make_stream(opts.seed, "r_min");
  double sum = 0;
  double lowest = std::numeric_limits<double>::infinity();
  std::vector<double> caps(static_cast<std::size_t>(scheduled));
  for (long trial = 0; trial < opts.channel_trials; ++trial) {
    for (auto& c : caps) c = draw_channel(rng, opts.snr_db).capacity();
    const auto alloc = allocate_symbols(caps, opts.symbols);
    for (std::size_t i = 0; i < caps.size(); ++i) {
      const auto r = static_cast<double>(max_sparsity(d, opts.levels, static_cast<double>(alloc.symbols[i]) * caps[i]));
      sum += r;
      lowest = std::min(lowest, r);
    }
  }
  if (opts.r_min_from_minimum) return lowest;
  return sum / static_cast<double>(opts.channel_trials * scheduled);
}

std::pair<double, double> fit_gradient_moments(const QuadraticTask<double>& task, const DeriveOptions& opts) {
  bool full = true;
  for (Index k = 0; k < task.num_devices(); ++k)
    if (opts.batch_size != 0 && opts.batch_size < task.shard_size(k)) full = false;
  if (full) return {0.0, 1.0};

  Rng rng = make_stream(opts.seed, "moments");
  std::normal_distribution<double> normal(0.0, 1.0);
  const VectorXd optimum = quadratic_optimum(task).theta;
  std::vector<double> xs, ys;
  std::vector<Index> scratch;
  for (int s = 0; s < opts.theta_samples; ++s) {
    VectorXd theta = optimum;
    for (Index i = 0; i < theta.size(); ++i) theta(i) += opts.theta_radius * normal(rng);
    for (Index k = 0; k < task.num_devices(); ++k) {
      const auto positions = iota_indices(task.shard_size(k));
      Moments m;
      for (long draw = 0; draw < opts.gradient_draws; ++draw)
        m.add(sampled_gradient(task, k, theta, opts.batch_size, positions, scratch, rng).squaredNorm());
      xs.push_back(task.local_gradient(k, theta).squaredNorm());
      ys.push_back(m.mean + 3 * m.standard_error());
    }
  }
  // least-squares slope, clipped below at 1, then the intercept envelope
  const double xbar = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  const double ybar = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - xbar) * (ys[i] - ybar);
    sxx += (xs[i] - xbar) * (xs[i] - xbar);
  }
  const double C2 = std::max(1.0, sxx > 0 ? sxy / sxx : 1.0);
  double C1 = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) C1 = std::max(C1, ys[i] - C2 * xs[i]);
  return {C1, C2};
}

TheoryConstants derive_constants(const QuadraticTask<double>& task, const DeriveOptions& opts) {
  TheoryConstants c;
  c.L = task.smoothness();
  c.mu = task.strong_convexity();
  c.d = task.dim();
  c.levels = opts.levels;
  c.r_min = estimate_r_min(c.d, opts, static_cast<int>(task.num_devices()));
  const auto [C1, C2] = fit_gradient_moments(task, opts);
  c.C1 = C1;
  c.C2 = C2;
  c.M = std::ceil(opts.period_ratio - 1e-9) + 1;
  const LossOptima optima = quadratic_optima(task);
  const HeterogeneityReport het = heterogeneity(optima, default_subset_family(optima, opts.seed));
  c.zeta1 = het.zeta1;
  c.zeta2 = het.zeta2;
  if (!(c.r_min > 0)) throw std::domain_error("infeasible beta: r_min = 0, no update fits the bit budget");
  finalize(c, opts.beta_factor * static_cast<double>(c.d) / (c.mu * c.r_min));
  return c;
}

json to_json(const TheoryConstants& c) {
  return {{"L", c.L},   {"mu", c.mu},       {"d", c.d},         {"levels", c.levels}, {"r_min", c.r_min},
          {"C1", c.C1}, {"C2", c.C2},       {"M", c.M},         {"zeta1", c.zeta1},   {"zeta2", c.zeta2},
          {"A", c.A},   {"C3", c.C3},       {"beta", c.beta},   {"kappa", c.kappa},   {"J", c.J}};
}

namespace {

// JSON has no infinity; keep it readable instead of null.
json number_or_text(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

}  // namespace

json to_json(const CheckResult& r) {
  return {{"name", r.name},     {"lhs", number_or_text(r.lhs)},       {"rhs", number_or_text(r.rhs)},
          {"margin", number_or_text(r.margin())}, {"pass", r.holds},
          {"detail", r.detail}};
}

CheckResult verify_lemma1(const QuadraticTask<double>& task, const VectorXd& theta, double alpha,
                          const WeightedSubset& subset, long retained, double A) {
  const double L = task.smoothness();
  const double mu = task.strong_convexity();
  const auto d = static_cast<double>(task.dim());
  require_dim(theta.size(), task.dim(), "verify_lemma1");
  if (!(alpha > 0) || alpha > 1 / (4 * L)) throw std::invalid_argument("verify_lemma1: need 0 < alpha <= 1/(4L)");
  if (retained < 1 || retained > task.dim()) throw std::invalid_argument("verify_lemma1: r outside [1, d]");
  if (subset.devices.empty() || subset.devices.size() != subset.weights.size())
    throw std::invalid_argument("verify_lemma1: malformed subset");
  const VectorXd optimum = quadratic_optimum(task).theta;
  const double ratio = static_cast<double>(retained) / d;
  VectorXd g = VectorXd::Zero(task.dim());
  for (std::size_t i = 0; i < subset.devices.size(); ++i)
    g += subset.weights[i] * task.local_gradient(subset.devices[i], theta);
  g *= ratio;
  CheckResult r;
  r.name = "lemma1";
  r.lhs = (theta - optimum - alpha * g).squaredNorm();
  r.rhs = (1 - mu * alpha * ratio) * (theta - optimum).squaredNorm() + alpha * ratio * A;
  r.holds = r.lhs <= r.rhs + 1e-12 * std::max(1.0, r.rhs);
  r.detail = {{"alpha", alpha}, {"r", retained}, {"A", A}};
  return r;
}

CheckResult verify_lemma2(const QuadraticTask<double>& task, const VectorXd& theta, const WeightedSubset& subset,
                          const TheoryConstants& c, const Lemma2Options& opts) {
  if (opts.samples < 10000) throw std::invalid_argument("verify_lemma2: need at least 1e4 samples");
  if (opts.retained < 1 || opts.retained > task.dim()) throw std::invalid_argument("verify_lemma2: r outside [1, d]");
  require_dim(theta.size(), task.dim(), "verify_lemma2");
  const Index d = task.dim();
  const VectorXd optimum = quadratic_optimum(task).theta;
  const double ratio = static_cast<double>(opts.retained) / static_cast<double>(d);

  VectorXd mean_g = VectorXd::Zero(d);
  for (std::size_t i = 0; i < subset.devices.size(); ++i)
    mean_g += subset.weights[i] * task.local_gradient(subset.devices[i], theta);
  mean_g *= ratio;

  std::vector<std::vector<Index>> positions;
  for (Index k : subset.devices) positions.push_back(iota_indices(task.shard_size(k)));
  Rng rng = make_stream(opts.seed, "lemma2");
  std::vector<Index> scratch;
  Moments m;
  for (long s = 0; s < opts.samples; ++s) {
    VectorXd g = VectorXd::Zero(d);
    for (std::size_t i = 0; i < subset.devices.size(); ++i) {
      const Index k = subset.devices[i];
      const VectorXd grad = sampled_gradient(task, k, theta, opts.batch_size, positions[i], scratch, rng);
      g += subset.weights[i] * reconstruct<double>(compress(grad, opts.retained, opts.levels, rng));
    }
    m.add((g - mean_g).squaredNorm());
  }
  const double L2 = c.L * c.L;
  const double C3 = quantization_factor(d, opts.levels);
  CheckResult r;
  r.name = "lemma2";
  r.lhs = m.mean;
  r.rhs = C3 * (L2 * c.C2 * (theta - optimum).squaredNorm() + c.C1 / 2 + c.A * L2 * c.C2 / c.mu);
  r.holds = r.lhs <= r.rhs + 3 * m.standard_error();
  r.detail = {{"standard_error", m.standard_error()}, {"samples", opts.samples}, {"r", opts.retained},
              {"levels", opts.levels}};
  return r;
}

CheckResult verify_smoothness_ineq(const QuadraticTask<double>& task, const std::vector<VectorXd>& thetas) {
  const double L = task.smoothness();
  double worst = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  double max_equality_gap = 0;
  for (const auto& theta : thetas) {
    for (Index k = 0; k < task.num_devices(); ++k) {
      const double lhs = 2 * L * task.local_loss(k, theta);
      const double grad = task.local_gradient(k, theta).squaredNorm();
      min_slack = std::min(min_slack, lhs - grad);
      if (lhs > 0) {
        worst = std::max(worst, grad / lhs);
        max_equality_gap = std::max(max_equality_gap, std::abs(lhs - grad) / lhs);
      } else if (grad > 0) {
        worst = std::numeric_limits<double>::infinity();
      }
    }
  }
  CheckResult r;
  r.name = "smoothness";
  r.lhs = worst;
  r.rhs = 1.0;
  r.holds = worst <= 1.0 + 1e-12;
  r.detail = {{"samples", thetas.size()}, {"min_slack", min_slack}, {"max_relative_gap", max_equality_gap}};
  return r;
}

namespace {

template <typename Visit>
void quantizer_draws(const VectorXd& v, int levels, long draws, Rng& rng, double bias, Visit visit) {
  const auto indices = iota_indices(v.size());
  for (long s = 0; s < draws; ++s) visit(reconstruct<double>(quantize(v, indices, levels, rng, bias)));
}

}  // namespace

CheckResult verify_quantizer_unbiased(const std::vector<VectorXd>& vectors, int levels, long draws,
                                      std::uint64_t seed, double bias) {
  double worst = 0;
  for (std::size_t n = 0; n < vectors.size(); ++n) {
    const VectorXd& v = vectors[n];
    Rng rng = make_stream(seed, "unbiased", n);
    VectorXd sum = VectorXd::Zero(v.size()), sq = VectorXd::Zero(v.size());
    quantizer_draws(v, levels, draws, rng, bias, [&](const VectorXd& q) {
      sum += q;
      sq += q.cwiseProduct(q);
    });
    const auto count = static_cast<double>(draws);
    for (Index i = 0; i < v.size(); ++i) {
      const double mean = sum(i) / count;
      const double var = std::max(0.0, (sq(i) - count * mean * mean) / (count - 1));
      const double se = std::sqrt(var / count);
      const double err = std::abs(mean - v(i));
      const double tol = 1e-9 * std::max(1.0, v.norm());
      worst = std::max(worst, se > 0 ? err / se : (err <= tol ? 0.0 : std::numeric_limits<double>::infinity()));
    }
  }
  CheckResult r;
  r.name = "quantizer_unbiased";
  r.lhs = worst;
  r.rhs = 4.0;
  r.holds = worst <= 4.0;
  r.detail = {{"vectors", vectors.size()}, {"draws", draws}, {"levels", levels}, {"bias", bias},
              {"statistic", "max |mean - u| / standard error"}};
  return r;
}

CheckResult verify_quantizer_variance(const std::vector<VectorXd>& vectors, int levels, long draws,
                                      std::uint64_t seed, double bias) {
  double worst = 0;
  for (std::size_t n = 0; n < vectors.size(); ++n) {
    const VectorXd& v = vectors[n];
    Rng rng = make_stream(seed, "variance", n);
    Moments m;
    quantizer_draws(v, levels, draws, rng, bias, [&](const VectorXd& q) { m.add((q - v).squaredNorm()); });
    const double bound = static_cast<double>(v.size()) * v.squaredNorm() / (4.0 * levels * levels);
    worst = std::max(worst, (m.mean - 3 * m.standard_error()) / bound);
  }
  CheckResult r;
  r.name = "quantizer_variance";
  r.lhs = worst;
  r.rhs = 1.0;
  r.holds = worst <= 1.0;
  r.detail = {{"vectors", vectors.size()}, {"draws", draws}, {"levels", levels},
              {"statistic", "max (mean - 3 se) / (r ||u||^2 / (4 nu^2))"}};
  return r;
}

double quantizer_variance(const VectorXd& u, int levels) {
  const double norm = u.norm();
  if (norm == 0) return 0;
  double var = 0;
  for (Index i = 0; i < u.size(); ++i) {
    const double ratio = levels * std::abs(u(i)) / norm;
    const double p = ratio - std::floor(ratio);
    var += p * (1 - p);
  }
  return var * (norm / levels) * (norm / levels);
}

TheoremCheck theorem1_check(const QuadraticTask<double>& task, const TheoremCheckOptions& opts) {
  if (opts.seeds < 1 || opts.horizon < 1) throw std::invalid_argument("theorem1_check: need seeds and a horizon");
  DeriveOptions derive = opts.derive;
  derive.period_ratio = 1.0;
  derive.scheduled = static_cast<int>(task.num_devices());

  TheoremCheck out;
  out.constants = derive_constants(task, derive);
  const auto opt = quadratic_optimum(task);
  out.initial_gap = opt.theta.squaredNorm();

  SimConfig sim = opts.sim;
  sim.devices = static_cast<int>(task.num_devices());
  sim.max_scheduled = sim.devices;
  sim.period = 1.0;
  sim.t_max = 1.0;
  sim.t_min = std::min(sim.t_min, 1.0);
  sim.local_steps = 1;
  sim.lambda = 0.0;
  sim.batch_size = derive.batch_size;
  sim.levels = derive.levels;
  sim.symbols = derive.symbols;
  sim.snr_db = derive.snr_db;
  sim.gamma = 1.0;
  sim.mode = Mode::async_periodic;
  sim.horizon = 0;
  sim.ticks = opts.horizon;
  sim.lr = LearningRate::theory_schedule(out.constants.beta, out.constants.kappa);

  BuiltTask built;
  auto copy = std::make_shared<QuadraticTask<double>>(task);
  built.task = copy;
  built.quadratic = copy;
  built.optimum_value = opt.value;
  for (Index k = 0; k < task.num_devices(); ++k) built.histograms.push_back({task.shard_size(k)});

  const auto points = static_cast<std::size_t>(opts.horizon + 1);
  std::vector<Moments> gaps(points);
  for (int s = 0; s < opts.seeds; ++s) {
    sim.seed = opts.sim.seed + static_cast<std::uint64_t>(s);
    const SimResult res = run_async(sim, built);
    gaps[0].add(res.initial_loss - opt.value);
    for (std::size_t i = 0; i < res.rounds.size(); ++i) gaps[i + 1].add(res.rounds[i].loss - opt.value);
  }
  out.holds = true;
  for (std::size_t i = 0; i < points; ++i) {
    out.mean_gap.push_back(gaps[i].mean);
    out.standard_error.push_back(gaps[i].standard_error());
    out.bound.push_back(theorem1_bound(static_cast<long>(i) + 1, out.constants, out.initial_gap));
    if (i < points - 1) {
      out.worst_ratio = std::max(out.worst_ratio, out.mean_gap[i] / out.bound[i]);
      if (out.mean_gap[i] > out.bound[i]) out.holds = false;
    }
  }
  return out;
}

json to_json(const TheoremCheck& c) {
  json j;
  j["constants"] = to_json(c.constants);
  j["initial_gap"] = c.initial_gap;
  j["holds"] = c.holds;
  j["worst_ratio"] = c.worst_ratio;
  j["mean_gap"] = c.mean_gap;
  j["standard_error"] = c.standard_error;
  j["bound"] = c.bound;
  return j;
}

}  // namespace afl
