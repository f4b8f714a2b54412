#pragma once

// CSV and JSON artifacts.
//
// rounds.csv starts with a "# manifest <hash>" line, then a header:
//   t, wallclock, mode, policy, K, Pi, max_age, M_t, loss, accuracy,
//   bits_used, symbols_used,
//   then for i = 1..B: dev<i>_id, dev<i>_age, dev<i>_r, dev<i>_n, dev<i>_C, dev<i>_w
// B is R (1 for fedasync); unused blocks are empty. bits_used and
// symbols_used are cumulative. accuracy is empty for tasks without a test set.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "afl/config.hpp"
#include "afl/engine.hpp"

namespace afl {

/// SHA-1 of "blob <size>\0<content>", lowercase hex.
std::string git_blob_sha1(std::string_view content);

/// Content hash of the resolved configuration.
std::string input_hash(const SimConfig& cfg);

/// Shortest round-trip decimal form.
std::string format_number(double x);

/// Core columns shared by rounds.csv and sweep.csv.
std::vector<std::string> core_columns();
std::vector<std::string> core_fields(const SimConfig& cfg, const RoundRecord& r);

int device_blocks(const SimConfig& cfg);

void write_rounds_csv(std::ostream& out, const SimConfig& cfg, const SimResult& result, const std::string& hash);

struct TailMetrics {
  double loss = 0;
  std::optional<double> accuracy;
};

/// Means over the last quarter of the records (at least one record).
TailMetrics final_quarter(const SimResult& result);

/// Average symbol consumption per unit wall-clock time.
double symbols_per_time(const SimResult& result);

nlohmann::json run_summary(const SimConfig& cfg, const BuiltTask& task, const SimResult& result,
                           const std::string& hash);

/// `root/<stem>`, or `root/<stem>-2`, `-3`, ... when taken. Created on return.
std::filesystem::path fresh_directory(const std::filesystem::path& root, const std::string& stem);

void write_text(const std::filesystem::path& path, const std::string& text);

/// UTC timestamp, ISO 8601.
std::string utc_now();

}  // namespace afl
