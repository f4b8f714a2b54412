#include "afl/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

namespace afl {

using nlohmann::json;

Mode parse_mode(const std::string& name) {
  if (name == "async_periodic" || name == "async") return Mode::async_periodic;
  if (name == "sync_fedavg" || name == "fedavg") return Mode::sync_fedavg;
  if (name == "fedasync") return Mode::fedasync;
  throw std::invalid_argument("unknown mode: " + name);
}

std::string to_string(Mode m) {
  switch (m) {
    case Mode::async_periodic: return "async_periodic";
    case Mode::sync_fedavg: return "sync_fedavg";
    case Mode::fedasync: return "fedasync";
  }
  return "unknown";
}

namespace {

std::string lr_kind_name(LearningRate::Kind k) {
  switch (k) {
    case LearningRate::Kind::theory: return "theory";
    case LearningRate::Kind::constant: return "constant";
    case LearningRate::Kind::diminishing: break;
  }
  return "diminishing";
}

LearningRate::Kind parse_lr_kind(const std::string& s) {
  if (s == "diminishing") return LearningRate::Kind::diminishing;
  if (s == "theory") return LearningRate::Kind::theory;
  if (s == "constant") return LearningRate::Kind::constant;
  throw std::invalid_argument("unknown learning-rate schedule: " + s);
}

// Rejects keys that the defaults do not have, recursing into objects.
void check_keys(const json& defaults, const json& doc, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError(path, "unknown key");
    if (defaults[it.key()].is_object()) check_keys(defaults[it.key()], it.value(), path);
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& node(const std::string& path) const {
    const json* cur = &root_;
    std::size_t start = 0;
    while (true) {
      const auto dot = path.find('.', start);
      cur = &cur->at(path.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    return *cur;
  }

  double number(const std::string& path) const {
    const auto& v = node(path);
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
  }

  long integer(const std::string& path) const {
    const auto& v = node(path);
    if (v.is_number_integer()) return v.get<long>();
    if (v.is_number_float()) {
      const double x = v.get<double>();
      if (std::floor(x) == x && std::abs(x) < 9e15) return static_cast<long>(x);
    }
    throw ConfigError(path, "expected an integer");
  }

  std::uint64_t unsigned_integer(const std::string& path) const {
    const auto& v = node(path);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(path, "expected a nonnegative integer");
  }

  bool boolean(const std::string& path) const {
    const auto& v = node(path);
    if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& path) const {
    const auto& v = node(path);
    if (!v.is_string()) throw ConfigError(path, "expected a string");
    return v.get<std::string>();
  }

  template <typename Parse>
  auto choice(const std::string& path, Parse parse) const {
    const auto s = string(path);
    try {
      return parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
  }

 private:
  const json& root_;
};

int as_int(long v, const std::string& path) {
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw ConfigError(path, "value out of range");
  return static_cast<int>(v);
}

}  // namespace

long SimConfig::aggregation_ticks() const {
  const double t = wallclock_horizon() / tick_period();
  return static_cast<long>(std::floor(t + 1e-9));
}

json to_json(const SimConfig& c) {
  json j;
  j["devices"] = c.devices;
  j["max_scheduled"] = c.max_scheduled;
  j["symbols"] = c.symbols;
  j["period"] = c.period;
  j["period_ratio"] = c.period_ratio;
  j["t_min"] = c.t_min;
  j["t_max"] = c.t_max;
  j["levels"] = c.levels;
  j["gamma"] = c.gamma;
  j["lambda"] = c.lambda;
  j["local_steps"] = c.local_steps;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = {{"schedule", lr_kind_name(c.lr.kind)},
                        {"initial", c.lr.initial},
                        {"offset", c.lr.offset},
                        {"beta", c.lr.beta},
                        {"kappa", c.lr.kappa}};
  j["mode"] = to_string(c.mode);
  j["policy"] = to_string(c.policy);
  j["fedasync_alpha"] = c.fedasync_alpha;
  j["fedasync_operand"] = c.fedasync_operand == FedAsyncOperand::device_model ? "device_model" : "raw_update";
  const auto& q = c.task.quadratic;
  const auto& s = c.task.classification;
  j["task"] = {{"type", c.task.type},
               {"partition", c.task.partition},
               {"quadratic",
                {{"dim", q.dim},
                 {"curvature_min", q.curvature_min},
                 {"curvature_max", q.curvature_max},
                 {"target_spread", q.target_spread},
                 {"samples_per_device", q.samples_per_device},
                 {"gradient_noise", q.gradient_noise},
                 {"shared_target", q.shared_target}}},
               {"classification",
                {{"source", s.source},
                 {"train_path", s.train_path},
                 {"test_path", s.test_path},
                 {"classes", s.classes},
                 {"features", s.features},
                 {"samples_per_class", s.samples_per_class},
                 {"test_per_class", s.test_per_class},
                 {"separation", s.separation},
                 {"noise", s.noise}}}};
  j["snr_db"] = c.snr_db;
  j["horizon"] = c.horizon;
  j["ticks"] = c.ticks;
  j["seed"] = c.seed;
  j["redraw_durations"] = c.redraw_durations;
  j["scheduler"] = {{"prefilter_fraction", c.scheduler.prefilter_fraction},
                    {"exhaustive_limit", c.scheduler.exhaustive_limit}};
  return j;
}

SimConfig parse_config(const json& doc) {
  const json defaults = to_json(SimConfig{});
  check_keys(defaults, doc, "");
  json merged = defaults;
  merged.merge_patch(doc);
  const Reader r(merged);

  SimConfig c;
  c.devices = as_int(r.integer("devices"), "devices");
  c.max_scheduled = as_int(r.integer("max_scheduled"), "max_scheduled");
  c.symbols = r.integer("symbols");
  c.period = r.number("period");
  c.period_ratio = r.number("period_ratio");
  c.t_min = r.number("t_min");
  c.t_max = r.number("t_max");
  c.levels = as_int(r.integer("levels"), "levels");
  c.gamma = r.number("gamma");
  c.lambda = r.number("lambda");
  c.local_steps = as_int(r.integer("local_steps"), "local_steps");
  c.batch_size = r.integer("batch_size");
  c.lr.kind = r.choice("learning_rate.schedule", parse_lr_kind);
  c.lr.initial = r.number("learning_rate.initial");
  c.lr.offset = r.number("learning_rate.offset");
  c.lr.beta = r.number("learning_rate.beta");
  c.lr.kappa = r.number("learning_rate.kappa");
  c.mode = r.choice("mode", parse_mode);
  c.policy = r.choice("policy", parse_policy);
  c.fedasync_alpha = r.number("fedasync_alpha");
  c.fedasync_operand = r.choice("fedasync_operand", [](const std::string& s) {
    if (s == "device_model") return FedAsyncOperand::device_model;
    if (s == "raw_update") return FedAsyncOperand::raw_update;
    throw std::invalid_argument("expected device_model or raw_update");
  });
  c.task.type = r.string("task.type");
  c.task.partition = r.string("task.partition");
  auto& q = c.task.quadratic;
  q.dim = as_int(r.integer("task.quadratic.dim"), "task.quadratic.dim");
  q.curvature_min = r.number("task.quadratic.curvature_min");
  q.curvature_max = r.number("task.quadratic.curvature_max");
  q.target_spread = r.number("task.quadratic.target_spread");
  q.samples_per_device = as_int(r.integer("task.quadratic.samples_per_device"), "task.quadratic.samples_per_device");
  q.gradient_noise = r.number("task.quadratic.gradient_noise");
  q.shared_target = r.boolean("task.quadratic.shared_target");
  auto& s = c.task.classification;
  s.source = r.string("task.classification.source");
  s.train_path = r.string("task.classification.train_path");
  s.test_path = r.string("task.classification.test_path");
  s.classes = as_int(r.integer("task.classification.classes"), "task.classification.classes");
  s.features = as_int(r.integer("task.classification.features"), "task.classification.features");
  s.samples_per_class =
      as_int(r.integer("task.classification.samples_per_class"), "task.classification.samples_per_class");
  s.test_per_class = as_int(r.integer("task.classification.test_per_class"), "task.classification.test_per_class");
  s.separation = r.number("task.classification.separation");
  s.noise = r.number("task.classification.noise");
  c.snr_db = r.number("snr_db");
  c.horizon = r.number("horizon");
  c.ticks = r.integer("ticks");
  c.seed = r.unsigned_integer("seed");
  c.redraw_durations = r.boolean("redraw_durations");
  c.scheduler.prefilter_fraction = r.number("scheduler.prefilter_fraction");
  c.scheduler.exhaustive_limit = r.number("scheduler.exhaustive_limit");
  validate(c);
  return c;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc);
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!cur->is_object()) *cur = json::object();
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      break;
    }
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

void validate(const SimConfig& c) {
  if (c.devices < 1) throw ConfigError("devices", "need at least one device");
  if (c.max_scheduled < 1) throw ConfigError("max_scheduled", "must be >= 1");
  if (c.max_scheduled > c.devices) throw ConfigError("max_scheduled", "R must not exceed N");
  if (c.symbols < c.max_scheduled) throw ConfigError("symbols", "n must be >= R");
  if (c.period < 0) throw ConfigError("period", "must be positive (or 0 to derive from period_ratio)");
  if (c.period == 0 && !(c.period_ratio > 0)) throw ConfigError("period_ratio", "must be positive");
  if (!(c.t_min > 0)) throw ConfigError("t_min", "must be positive");
  if (c.t_min > c.t_max) throw ConfigError("t_min", "T_min must not exceed T_max");
  if (c.levels < 1) throw ConfigError("levels", "must be >= 1");
  if (!(c.gamma > 0)) throw ConfigError("gamma", "must be positive");
  if (c.lambda < 0) throw ConfigError("lambda", "must be nonnegative");
  if (c.local_steps < 1) throw ConfigError("local_steps", "must be >= 1");
  if (c.batch_size < 0) throw ConfigError("batch_size", "must be nonnegative");
  if (c.lr.kind == LearningRate::Kind::theory) {
    if (!(c.lr.beta > 0)) throw ConfigError("learning_rate.beta", "must be positive for the theory schedule");
    if (c.lr.kappa < 0) throw ConfigError("learning_rate.kappa", "must be nonnegative");
  } else {
    if (!(c.lr.initial > 0)) throw ConfigError("learning_rate.initial", "must be positive");
    if (c.lr.kind == LearningRate::Kind::diminishing && !(c.lr.offset > 0))
      throw ConfigError("learning_rate.offset", "must be positive");
  }
  if (!(c.fedasync_alpha > 0) || c.fedasync_alpha > 1) throw ConfigError("fedasync_alpha", "must lie in (0, 1]");
  if (c.task.type != "quadratic" && c.task.type != "classification")
    throw ConfigError("task.type", "expected quadratic or classification");
  if (c.task.partition != "iid" && c.task.partition != "noniid")
    throw ConfigError("task.partition", "expected iid or noniid");
  const auto& q = c.task.quadratic;
  if (q.dim < 1) throw ConfigError("task.quadratic.dim", "must be >= 1");
  if (!(q.curvature_min > 0)) throw ConfigError("task.quadratic.curvature_min", "must be positive");
  if (q.curvature_max < q.curvature_min) throw ConfigError("task.quadratic.curvature_max", "below curvature_min");
  if (q.target_spread < 0) throw ConfigError("task.quadratic.target_spread", "must be nonnegative");
  if (q.samples_per_device < 1) throw ConfigError("task.quadratic.samples_per_device", "must be >= 1");
  if (q.gradient_noise < 0) throw ConfigError("task.quadratic.gradient_noise", "must be nonnegative");
  const auto& s = c.task.classification;
  if (s.source != "synthetic" && s.source != "csv")
    throw ConfigError("task.classification.source", "expected synthetic or csv");
  if (s.source == "csv" && s.train_path.empty())
    throw ConfigError("task.classification.train_path", "required for csv data");
  if (s.classes < 2) throw ConfigError("task.classification.classes", "need at least two classes");
  if (s.features < 1) throw ConfigError("task.classification.features", "must be >= 1");
  if (s.samples_per_class < 1) throw ConfigError("task.classification.samples_per_class", "must be >= 1");
  if (s.test_per_class < 0) throw ConfigError("task.classification.test_per_class", "must be nonnegative");
  if (!std::isfinite(c.snr_db)) throw ConfigError("snr_db", "must be finite");
  if (c.horizon < 0) throw ConfigError("horizon", "must be positive (or 0 to use ticks)");
  if (c.horizon == 0 && c.ticks <= 0) throw ConfigError("ticks", "horizon must be positive");
  if (c.aggregation_ticks() < 1) throw ConfigError("horizon", "shorter than one aggregation period");
  if (!(c.scheduler.prefilter_fraction >= 0) || c.scheduler.prefilter_fraction > 1)
    throw ConfigError("scheduler.prefilter_fraction", "must lie in [0, 1]");
  if (c.scheduler.exhaustive_limit < 0) throw ConfigError("scheduler.exhaustive_limit", "must be nonnegative");
}

QuadraticTask<double> make_quadratic_task(const QuadraticTaskSpec& q, int devices, std::uint64_t seed) {
  if (devices < 1) throw std::invalid_argument("make_quadratic_task: need at least one device");
  Rng rng = make_stream(seed, "task");
  std::uniform_real_distribution<double> curv(q.curvature_min, q.curvature_max);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<VectorXd> curvatures, targets;
  std::vector<Eigen::MatrixXd> noise;
  VectorXd shared(q.dim);
  for (int i = 0; i < q.dim; ++i) shared(i) = q.target_spread * normal(rng);
  for (int k = 0; k < devices; ++k) {
    VectorXd a(q.dim), c(q.dim);
    for (int i = 0; i < q.dim; ++i) a(i) = curv(rng);
    for (int i = 0; i < q.dim; ++i) c(i) = q.target_spread * normal(rng);
    if (q.shared_target) c = shared;
    Eigen::MatrixXd xi(q.dim, q.samples_per_device);
    for (Index col = 0; col < xi.cols(); ++col)
      for (Index row = 0; row < xi.rows(); ++row) xi(row, col) = q.gradient_noise * normal(rng);
    curvatures.push_back(std::move(a));
    targets.push_back(std::move(c));
    noise.push_back(std::move(xi));
  }
  return QuadraticTask<double>(std::move(curvatures), std::move(targets), std::move(noise));
}

BuiltTask build_task(const SimConfig& cfg) {
  BuiltTask out;
  const auto n = static_cast<std::size_t>(cfg.devices);
  if (cfg.task.type == "quadratic") {
    auto quad = std::make_shared<QuadraticTask<double>>(make_quadratic_task(cfg.task.quadratic, cfg.devices, cfg.seed));
    out.optimum_value = quadratic_optimum(*quad).value;
    out.quadratic = quad;
    out.task = quad;
    // label-free task: one pseudo-class, so Omega is constant over schedules
    for (std::size_t k = 0; k < n; ++k) out.histograms.push_back({quad->shard_size(static_cast<Index>(k))});
    out.partition = {{"type", "quadratic"}, {"devices", cfg.devices}};
    return out;
  }

  const auto& s = cfg.task.classification;
  std::shared_ptr<Dataset> train, test;
  if (s.source == "csv") {
    train = std::make_shared<Dataset>(load_csv_dataset(s.train_path));
    if (!s.test_path.empty()) test = std::make_shared<Dataset>(load_csv_dataset(s.test_path));
  } else {
    GaussianClustersSpec spec;
    spec.num_classes = s.classes;
    spec.num_features = s.features;
    spec.samples_per_class = s.samples_per_class;
    spec.separation = s.separation;
    spec.noise = s.noise;
    Rng train_rng = make_stream(cfg.seed, "dataset", 0);
    train = std::make_shared<Dataset>(make_gaussian_clusters(spec, cfg.seed, train_rng));
    if (s.test_per_class > 0) {
      spec.samples_per_class = s.test_per_class;
      Rng test_rng = make_stream(cfg.seed, "dataset", 1);
      test = std::make_shared<Dataset>(make_gaussian_clusters(spec, cfg.seed, test_rng));
    }
  }
  const auto shards = cfg.task.partition == "noniid" ? partition_noniid(*train, cfg.devices, cfg.seed)
                                                     : partition_iid(*train, cfg.devices, cfg.seed);
  for (const auto& sh : shards)
    if (sh.size() == 0) throw ConfigError("devices", "more devices than training samples");
  out.histograms = label_histograms(*train, shards);
  out.partition = partition_manifest(*train, shards);
  out.partition["type"] = cfg.task.partition;
  out.task = std::make_shared<ClassificationTask<double>>(train, shard_indices(shards), test);
  return out;
}

}  // namespace afl
