#include "afl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "afl/analysis.hpp"
#include "afl/channel.hpp"
#include "afl/report.hpp"
#include "afl/scheduler.hpp"

namespace afl {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FEDASYNC_OUT"); env && *env) return env;
  return "runs";
}

fs::path write_run(const fs::path& root, const SimConfig& cfg, SimResult* result_out) {
  const std::string started = utc_now();
  const std::string hash = input_hash(cfg);
  const BuiltTask task = build_task(cfg);
  SimResult result = run(cfg, task);
  const fs::path dir = fresh_directory(root, "run-" + hash.substr(0, 12));

  std::ostringstream csv;
  write_rounds_csv(csv, cfg, result, hash);
  write_text(dir / "rounds.csv", csv.str());
  write_text(dir / "summary.json", run_summary(cfg, task, result, hash).dump(2) + "\n");
  json manifest = {{"hash", hash},
                   {"seed", cfg.seed},
                   {"config", to_json(cfg)},
                   {"outputs", {(dir / "rounds.csv").string(), (dir / "summary.json").string()}},
                   {"started", started},
                   {"finished", utc_now()}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  if (result_out) *result_out = std::move(result);
  return dir;
}

namespace {

std::vector<VectorXd> random_vectors(int count, Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<VectorXd> out;
  for (int i = 0; i < count; ++i) {
    VectorXd v(d);
    for (Index j = 0; j < d; ++j) v(j) = normal(rng);
    out.push_back(std::move(v));
  }
  return out;
}

// Lemma 1 over random quadratic tasks, subsets, models, rates and sparsity.
CheckResult lemma1_sweep(int trials, std::uint64_t seed) {
  Rng rng = make_stream(seed, "lemma1");
  std::uniform_int_distribution<int> devices(1, 6), dims(1, 8);
  std::normal_distribution<double> normal(0.0, 1.0);
  int violations = 0;
  double worst = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < trials; ++trial) {
    QuadraticTaskSpec spec;
    spec.dim = dims(rng);
    spec.curvature_min = 0.2 + uniform01(rng);
    spec.curvature_max = spec.curvature_min * (1 + 4 * uniform01(rng));
    spec.target_spread = 2 * uniform01(rng);
    spec.samples_per_device = 1 + static_cast<int>(20 * uniform01(rng));
    const auto task = make_quadratic_task(spec, devices(rng), rng());
    const LossOptima optima = quadratic_optima(task);
    const auto family = default_subset_family(optima, rng());
    const HeterogeneityReport het = heterogeneity(optima, family);
    const auto& subset = family[std::uniform_int_distribution<std::size_t>(0, family.size() - 1)(rng)];
    VectorXd theta(task.dim());
    for (Index i = 0; i < theta.size(); ++i) theta(i) = 3 * normal(rng);
    const double alpha = (1 - uniform01(rng)) / (4 * task.smoothness());
    const long r = std::uniform_int_distribution<long>(1, task.dim())(rng);
    const auto res = verify_lemma1(task, theta, alpha, subset, r, 2 * (het.zeta1 + het.zeta2));
    if (!res.holds) ++violations;
    worst = std::max(worst, (res.lhs - res.rhs) / std::max(1.0, res.rhs));
  }
  CheckResult r;
  r.name = "lemma1";
  r.lhs = violations;
  r.rhs = 0;
  r.holds = violations == 0;
  r.detail = {{"trials", trials}, {"worst_relative_excess", worst}};
  return r;
}

CheckResult smoothness_sweep(const QuadraticTask<double>& task, int samples, std::uint64_t seed) {
  Rng rng = make_stream(seed, "smoothness");
  CheckResult r = verify_smoothness_ineq(task, random_vectors(samples, task.dim(), rng));
  // scalar 1/2 L theta^2 saturates the inequality
  const double L = 1.5;
  const QuadraticTask<double> scalar({VectorXd::Constant(1, L)}, {VectorXd::Zero(1)}, std::vector<Index>{1});
  std::vector<VectorXd> points;
  for (int i = 0; i < 20; ++i) points.push_back(VectorXd::Constant(1, 0.5 * (i - 10)));
  const CheckResult eq = verify_smoothness_ineq(scalar, points);
  const double gap = eq.detail["max_relative_gap"].get<double>();
  r.detail["scalar_equality_gap"] = gap;
  r.holds = r.holds && eq.holds && gap <= 1e-12;
  return r;
}

CheckResult theorem_result(const std::string& name, const TheoremCheck& tc, long decay_from, long decay_to,
                           bool check_decay) {
  CheckResult r;
  r.name = name;
  r.lhs = tc.worst_ratio;
  r.rhs = 1.0;
  r.holds = tc.holds;
  r.detail = {{"constants", to_json(tc.constants)},
              {"initial_gap", tc.initial_gap},
              {"horizon", tc.mean_gap.size() - 1},
              {"statistic", "max_t seed-mean gap(t) / bound(t)"}};
  if (check_decay) {
    const auto from = static_cast<std::size_t>(decay_from - 1);
    const auto to = static_cast<std::size_t>(decay_to - 1);
    const double ratio = tc.mean_gap.at(to) / tc.mean_gap.at(from);
    r.detail["decay_ratio"] = ratio;
    r.detail["decay_window"] = {decay_from, decay_to};
    r.holds = r.holds && ratio < 0.1;
  }
  return r;
}

void add_check(json& report, const CheckResult& r) {
  report["checks"].push_back(to_json(r));
  if (!r.holds) report["pass"] = false;
}

}  // namespace

json verification_report(const SimConfig& cfg, const VerifyOptions& opts) {
  if (cfg.task.type != "quadratic") throw ConfigError("task.type", "verify needs a quadratic task");
  json report = {{"pass", true}, {"checks", json::array()}, {"seed", opts.seed}};
  Rng rng = make_stream(opts.seed, "verify");

  const auto vectors = random_vectors(opts.quantizer_vectors, 16, rng);
  add_check(report, verify_quantizer_unbiased(vectors, cfg.levels, opts.quantizer_draws, opts.seed, opts.quantizer_bias));
  add_check(report, verify_quantizer_variance(vectors, cfg.levels, opts.quantizer_draws, opts.seed, opts.quantizer_bias));
  {
    VectorXd u(2);
    u << 3, 4;
    CheckResult exact;
    exact.name = "quantizer_variance_exact";
    exact.lhs = quantizer_variance(u, 4);
    exact.rhs = 2 * u.squaredNorm() / (4.0 * 16);
    exact.holds = std::abs(exact.lhs - 0.625) < 1e-12 && std::abs(exact.rhs - 0.78125) < 1e-12 && exact.lhs <= exact.rhs;
    add_check(report, exact);
  }
  add_check(report, lemma1_sweep(opts.lemma1_trials, opts.seed));

  const QuadraticTask<double> task = make_quadratic_task(cfg.task.quadratic, cfg.devices, cfg.seed);
  DeriveOptions derive;
  derive.levels = cfg.levels;
  derive.symbols = cfg.symbols;
  derive.snr_db = cfg.snr_db;
  derive.seed = opts.seed;
  derive.batch_size = cfg.batch_size;

  // Lemma 2 needs mini-batch noise; fall back to a quarter shard under full batch.
  {
    DeriveOptions d2 = derive;
    if (d2.batch_size == 0) d2.batch_size = std::max<Index>(1, task.shard_size(0) / 4);
    d2.period_ratio = 1.0;
    try {
      const TheoryConstants c = derive_constants(task, d2);
      WeightedSubset all = data_weighted_subset(quadratic_optima(task), [&] {
        std::vector<Index> v(static_cast<std::size_t>(task.num_devices()));
        std::iota(v.begin(), v.end(), Index{0});
        return v;
      }());
      VectorXd theta = quadratic_optimum(task).theta;
      for (Index i = 0; i < theta.size(); ++i) theta(i) += std::normal_distribution<double>(0.0, 1.0)(rng);
      Lemma2Options lo;
      lo.batch_size = d2.batch_size;
      lo.retained = std::max<long>(1, task.dim() / 2);
      lo.levels = cfg.levels;
      lo.samples = opts.lemma2_samples;
      lo.seed = opts.seed;
      CheckResult r = verify_lemma2(task, theta, all, c, lo);
      r.detail["C1"] = c.C1;
      r.detail["C2"] = c.C2;
      r.detail["batch_size"] = d2.batch_size;
      add_check(report, r);
    } catch (const std::domain_error& e) {
      add_check(report, CheckResult{"lemma2", 0, 0, false, {{"error", e.what()}}});
    }
  }
  add_check(report, smoothness_sweep(task, opts.smoothness_samples, opts.seed));

  TheoremCheckOptions to;
  to.sim = cfg;
  to.derive = derive;
  to.seeds = opts.theorem_seeds;
  to.horizon = opts.theorem_horizon;
  const long decay_from = std::min<long>(10, opts.theorem_horizon);
  for (bool shared : {false, true}) {
    const std::string name = shared ? "theorem1_homogeneous" : "theorem1";
    try {
      QuadraticTaskSpec spec = cfg.task.quadratic;
      spec.shared_target = shared;
      const QuadraticTask<double> t = make_quadratic_task(spec, cfg.devices, cfg.seed);
      const TheoremCheck tc = theorem1_check(t, to);
      add_check(report, theorem_result(name, tc, decay_from, opts.theorem_horizon, shared));
    } catch (const std::domain_error& e) {
      add_check(report, CheckResult{name, 0, 0, false, {{"error", e.what()}}});
    }
  }
  return report;
}

json random_oracle_instances(int count, std::uint64_t seed, int max_prefilter, int max_scheduled) {
  Rng rng = make_stream(seed, "oracle-instances");
  json instances = json::array();
  for (int i = 0; i < count; ++i) {
    const int population = std::uniform_int_distribution<int>(1, 2 * max_prefilter + 1)(rng);
    const int classes = std::uniform_int_distribution<int>(2, 10)(rng);
    const int R = std::uniform_int_distribution<int>(1, std::min(max_scheduled, population))(rng);
    json hist = json::array(), caps = json::array(), ready = json::array();
    for (int k = 0; k < population; ++k) {
      std::vector<std::int64_t> h(static_cast<std::size_t>(classes), 0);
      const int labels = std::uniform_int_distribution<int>(1, classes)(rng);
      for (int l = 0; l < labels; ++l)
        h[std::uniform_int_distribution<std::size_t>(0, h.size() - 1)(rng)] +=
            std::uniform_int_distribution<int>(1, 60)(rng);
      hist.push_back(h);
      caps.push_back(draw_channel(rng, 13.0).capacity());
      if (uniform01(rng) < 0.7) ready.push_back(k);
    }
    if (ready.empty()) ready.push_back(0);
    instances.push_back({{"histograms", hist}, {"capacities", caps}, {"ready", ready}, {"max_scheduled", R}});
  }
  return {{"instances", instances}};
}

json oracle_report(const json& doc, double guard) {
  if (!doc.contains("instances") || !doc["instances"].is_array())
    throw std::invalid_argument("oracle: instance file must hold an \"instances\" array");
  json out = {{"pass", true}, {"instances", json::array()}};
  std::size_t equal = 0;
  for (const auto& inst : doc["instances"]) {
    const auto hist = inst.at("histograms").get<std::vector<LabelHistogram>>();
    ScheduleContext ctx;
    ctx.capacity = inst.at("capacities").get<std::vector<double>>();
    if (ctx.capacity.size() != hist.size()) throw std::invalid_argument("oracle: one capacity per histogram required");
    if (inst.contains("ready")) {
      ctx.ready = inst["ready"].get<std::vector<Index>>();
    } else {
      for (std::size_t k = 0; k < hist.size(); ++k) ctx.ready.push_back(static_cast<Index>(k));
    }
    for (Index k : ctx.ready)
      if (k < 0 || static_cast<std::size_t>(k) >= hist.size()) throw std::invalid_argument("oracle: ready id out of range");
    ctx.histograms = &hist;
    ctx.max_scheduled = inst.at("max_scheduled").get<int>();
    ctx.population = inst.value("population", static_cast<int>(hist.size()));
    SchedulerOptions opts;
    opts.prefilter_fraction = inst.value("prefilter_fraction", 0.5);

    const auto prefilter = capacity_prefilter(ctx, opts);
    const std::size_t size = std::min<std::size_t>(static_cast<std::size_t>(ctx.max_scheduled), prefilter.size());
    Rng unused(0);
    const auto proposed = schedule(Policy::proposed, ctx, unused, opts);
    const auto best = oracle_min_omega(hist, prefilter, size, guard);
    const bool same = scaled_omega(hist, proposed) == scaled_omega(hist, best);
    if (same) ++equal;
    else out["pass"] = false;
    out["instances"].push_back({{"prefilter_size", prefilter.size()},
                                {"scheduled", proposed},
                                {"oracle", best},
                                {"proposed_omega", omega(hist, proposed)},
                                {"oracle_omega", omega(hist, best)},
                                {"equal", same}});
  }
  out["equal"] = equal;
  out["total"] = doc["instances"].size();
  return out;
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
}

struct CommonFlags {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

json config_document(const CommonFlags& f) {
  json doc = f.config.empty() ? json::object() : read_json_file(f.config);
  for (const auto& o : f.overrides) apply_override(doc, o);
  if (f.seed_given) doc["seed"] = f.seed;
  return doc;
}

void add_common(CLI::App* app, CommonFlags& f, bool config_required) {
  auto* c = app->add_option("--config", f.config, "JSON configuration file");
  if (config_required) c->required();
  app->add_option("--out", f.out, "output root (default $FEDASYNC_OUT or ./runs)");
  app->add_option("--override", f.overrides, "key=value, dotted keys, repeatable");
  app->add_option("--seed", f.seed, "seed override")->each([&f](const std::string&) { f.seed_given = true; });
}

int cmd_run(const CommonFlags& f, std::ostream& out) {
  const SimConfig cfg = parse_config(config_document(f));
  const fs::path dir = write_run(output_root(f.out), cfg);
  out << dir.string() << '\n';
  return exit_ok;
}

int cmd_verify(const CommonFlags& f, const VerifyOptions& opts, std::ostream& out) {
  const SimConfig cfg = parse_config(config_document(f));
  const json report = verification_report(cfg, opts);
  const fs::path dir = fresh_directory(output_root(f.out), "verify-" + input_hash(cfg).substr(0, 12));
  write_text(dir / "verify.json", report.dump(2) + "\n");
  for (const auto& c : report["checks"])
    out << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << " lhs=" << c["lhs"]
        << " rhs=" << c["rhs"] << '\n';
  out << dir.string() << '\n';
  return report["pass"].get<bool>() ? exit_ok : exit_check_failed;
}

struct SweepPoint {
  json value;
  SimConfig cfg;
  fs::path dir;
  SimResult result;
};

int cmd_sweep(const CommonFlags& f, const std::string& axis, int jobs, std::uint64_t stride, std::ostream& out) {
  const auto eq = axis.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--axis", "expected key=v1,v2,...");
  const std::string key = axis.substr(0, eq);
  std::vector<std::string> values;
  std::stringstream ss(axis.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');)
    if (!v.empty()) values.push_back(v);
  if (values.empty()) throw ConfigError("--axis", "no values");

  const json base = config_document(f);
  const SimConfig base_cfg = parse_config(base);
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    json doc = base;
    apply_override(doc, key + "=" + values[i]);
    SimConfig cfg = parse_config(doc);
    cfg.seed = base_cfg.seed + stride * i;
    json parsed;
    try {
      parsed = json::parse(values[i]);
    } catch (const json::parse_error&) {
      parsed = values[i];
    }
    points.push_back({parsed, cfg, {}, {}});
  }

  const std::string sweep_hash = git_blob_sha1(to_json(base_cfg).dump() + "\n" + axis);
  const fs::path dir = fresh_directory(output_root(f.out), "sweep-" + sweep_hash.substr(0, 12));
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        points[i].dir = write_run(dir, points[i].cfg, &points[i].result);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int j = 0; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::ostringstream csv;
  csv << "# manifest " << sweep_hash << '\n';
  csv << "axis,value,point,seed";
  for (const auto& c : core_columns()) csv << ',' << c;
  csv << '\n';
  json summary = {{"manifest", sweep_hash}, {"axis", key}, {"points", json::array()}};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const std::string value = p.value.is_string() ? p.value.get<std::string>() : p.value.dump();
    for (const auto& r : p.result.rounds) {
      csv << key << ',' << value << ',' << i << ',' << p.cfg.seed;
      for (const auto& field : core_fields(p.cfg, r)) csv << ',' << field;
      csv << '\n';
    }
    const auto tail = final_quarter(p.result);
    summary["points"].push_back({{"value", p.value},
                                 {"seed", p.cfg.seed},
                                 {"dir", p.dir.string()},
                                 {"manifest", input_hash(p.cfg)},
                                 {"final_loss", p.result.rounds.back().loss},
                                 {"final_quarter_loss", tail.loss},
                                 {"final_quarter_accuracy", tail.accuracy ? json(*tail.accuracy) : json(nullptr)}});
  }
  write_text(dir / "sweep.csv", csv.str());
  write_text(dir / "sweep_summary.json", summary.dump(2) + "\n");
  out << dir.string() << '\n';
  return exit_ok;
}

int cmd_oracle(const std::string& instances, int random_count, std::uint64_t seed, double guard,
               const std::string& out_path, std::ostream& out) {
  json doc;
  if (!instances.empty()) doc = read_json_file(instances);
  else if (random_count > 0) doc = random_oracle_instances(random_count, seed);
  else throw ConfigError("--instances", "give an instance file or --random <count>");
  json report;
  try {
    report = oracle_report(doc, guard);
  } catch (const std::length_error& e) {
    out << "refused: " << e.what() << '\n';
    return exit_usage;
  }
  if (!out_path.empty()) write_text(out_path, report.dump(2) + "\n");
  out << (report["pass"].get<bool>() ? "PASS" : "FAIL") << " oracle " << report["equal"] << "/" << report["total"]
      << '\n';
  return report["pass"].get<bool>() ? exit_ok : exit_check_failed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Asynchronous federated learning simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, verify_flags, sweep_flags;
  auto* run_cmd = app.add_subcommand("run", "simulate one configuration");
  add_common(run_cmd, run_flags, true);

  VerifyOptions vopts;
  auto* verify_cmd = app.add_subcommand("verify", "numerical checks of the convergence analysis");
  add_common(verify_cmd, verify_flags, false);
  verify_cmd->add_option("--inject-bias", vopts.quantizer_bias, "shift quantizer round-up probabilities (negative control)");
  verify_cmd->add_option("--seeds", vopts.theorem_seeds, "seeds averaged in the theorem check");
  verify_cmd->add_option("--horizon", vopts.theorem_horizon, "iterations in the theorem check");
  verify_cmd->add_option("--draws", vopts.quantizer_draws, "quantizer draws per vector");
  verify_cmd->add_option("--samples", vopts.lemma2_samples, "Monte Carlo samples for the variance lemma");

  std::string axis;
  int jobs = 1;
  std::uint64_t stride = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "one run per axis value");
  add_common(sweep_cmd, sweep_flags, true);
  sweep_cmd->add_option("--axis", axis, "key=v1,v2,...")->required();
  sweep_cmd->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--seed-stride", stride, "seed offset between points (0 keeps one seed)");

  std::string instances, oracle_out;
  int random_count = 0;
  std::uint64_t oracle_seed = 1;
  double guard = 1e6;
  auto* oracle_cmd = app.add_subcommand("oracle", "proposed scheduler against exhaustive search");
  oracle_cmd->add_option("--instances", instances, "JSON instance file");
  oracle_cmd->add_option("--random", random_count, "generate this many random instances instead");
  oracle_cmd->add_option("--seed", oracle_seed, "seed for --random");
  oracle_cmd->add_option("--guard", guard, "largest subset count searched exhaustively");
  oracle_cmd->add_option("--out", oracle_out, "report path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*run_cmd) return cmd_run(run_flags, out);
    if (*verify_cmd) {
      vopts.seed = verify_flags.seed_given ? verify_flags.seed : vopts.seed;
      return cmd_verify(verify_flags, vopts, out);
    }
    if (*sweep_cmd) return cmd_sweep(sweep_flags, axis, jobs, stride, out);
    if (*oracle_cmd) return cmd_oracle(instances, random_count, oracle_seed, guard, oracle_out, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_check_failed;
  }
  return exit_usage;
}

}  // namespace afl
