#include "afl/report.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace afl {

using nlohmann::json;

std::string git_blob_sha1(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) && EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("git_blob_sha1: digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string input_hash(const SimConfig& cfg) { return git_blob_sha1(to_json(cfg).dump()); }

std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  if (res.ec != std::errc{}) throw std::runtime_error("format_number: conversion failed");
  return std::string(buf, res.ptr);
}

std::vector<std::string> core_columns() {
  return {"t", "wallclock", "mode", "policy", "K", "Pi", "max_age", "M_t", "loss", "accuracy", "bits_used",
          "symbols_used"};
}

std::vector<std::string> core_fields(const SimConfig& cfg, const RoundRecord& r) {
  return {std::to_string(r.t),
          format_number(r.wallclock),
          to_string(cfg.mode),
          cfg.mode == Mode::fedasync ? "fedasync" : to_string(cfg.policy),
          std::to_string(r.ready.size()),
          std::to_string(r.scheduled.size()),
          std::to_string(r.max_age),
          std::to_string(r.distinct_ages),
          format_number(r.loss),
          r.accuracy ? format_number(*r.accuracy) : "",
          std::to_string(r.cumulative_bits),
          std::to_string(r.cumulative_symbols)};
}

int device_blocks(const SimConfig& cfg) { return cfg.mode == Mode::fedasync ? 1 : cfg.max_scheduled; }

namespace {

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << fields[i];
  }
  out << '\n';
}

}  // namespace

void write_rounds_csv(std::ostream& out, const SimConfig& cfg, const SimResult& result, const std::string& hash) {
  out << "# manifest " << hash << '\n';
  auto header = core_columns();
  const int blocks = device_blocks(cfg);
  for (int i = 1; i <= blocks; ++i)
    for (const char* f : {"id", "age", "r", "n", "C", "w"}) header.push_back("dev" + std::to_string(i) + "_" + f);
  write_row(out, header);
  for (const auto& r : result.rounds) {
    auto fields = core_fields(cfg, r);
    for (int i = 0; i < blocks; ++i) {
      if (static_cast<std::size_t>(i) < r.devices.size()) {
        const auto& d = r.devices[static_cast<std::size_t>(i)];
        fields.insert(fields.end(), {std::to_string(d.id), std::to_string(d.age), std::to_string(d.retained),
                                     std::to_string(d.symbols), format_number(d.capacity), format_number(d.weight)});
      } else {
        fields.insert(fields.end(), 6, "");
      }
    }
    write_row(out, fields);
  }
}

TailMetrics final_quarter(const SimResult& result) {
  if (result.rounds.empty()) throw std::invalid_argument("final_quarter: no records");
  const std::size_t n = result.rounds.size();
  const std::size_t start = n - std::max<std::size_t>(1, n / 4);
  TailMetrics m;
  double acc = 0;
  bool have_acc = true;
  for (std::size_t i = start; i < n; ++i) {
    m.loss += result.rounds[i].loss;
    if (result.rounds[i].accuracy) acc += *result.rounds[i].accuracy;
    else have_acc = false;
  }
  const auto count = static_cast<double>(n - start);
  m.loss /= count;
  if (have_acc) m.accuracy = acc / count;
  return m;
}

double symbols_per_time(const SimResult& result) {
  if (result.rounds.empty() || !(result.horizon > 0)) return 0;
  return static_cast<double>(result.rounds.back().cumulative_symbols) / result.horizon;
}

json run_summary(const SimConfig& cfg, const BuiltTask& task, const SimResult& result, const std::string& hash) {
  json s;
  s["manifest"] = hash;
  s["seed"] = cfg.seed;
  s["mode"] = to_string(cfg.mode);
  s["policy"] = to_string(cfg.policy);
  s["records"] = result.rounds.size();
  s["gamma"] = cfg.gamma;
  s["constants"] = {{"levels", cfg.levels},
                    {"lambda", cfg.lambda},
                    {"initial_learning_rate", cfg.lr.initial},
                    {"gamma", cfg.gamma},
                    {"period", cfg.tick_period()},
                    {"snr_db", cfg.snr_db},
                    {"symbols", cfg.symbols},
                    {"max_scheduled", cfg.max_scheduled},
                    {"devices", cfg.devices},
                    {"symbol_budget", result.symbol_budget}};
  s["initial_loss"] = result.initial_loss;
  if (!result.rounds.empty()) {
    const auto& last = result.rounds.back();
    s["final_loss"] = last.loss;
    s["final_accuracy"] = last.accuracy ? json(*last.accuracy) : json(nullptr);
    const auto tail = final_quarter(result);
    s["final_quarter_loss"] = tail.loss;
    s["final_quarter_accuracy"] = tail.accuracy ? json(*tail.accuracy) : json(nullptr);
    s["total_symbols"] = last.cumulative_symbols;
    s["total_bits"] = last.cumulative_bits;
  }
  s["optimum_value"] = task.optimum_value ? json(*task.optimum_value) : json(nullptr);
  s["horizon"] = result.horizon;
  s["symbols_per_time"] = symbols_per_time(result);
  s["target_symbols_per_time"] = static_cast<double>(cfg.symbols) / cfg.tick_period();
  s["config"] = to_json(cfg);
  return s;
}

std::filesystem::path fresh_directory(const std::filesystem::path& root, const std::string& stem) {
  std::filesystem::create_directories(root);
  for (int i = 1;; ++i) {
    const auto p = root / (i == 1 ? stem : stem + "-" + std::to_string(i));
    if (std::filesystem::create_directory(p)) return p;
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (std::filesystem::exists(path)) throw std::runtime_error("refusing to overwrite " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace afl
