#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "afl/config.hpp"
#include "afl/engine.hpp"

namespace afl {

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_usage = 2 };

/// Entry point shared by the executable and the tests; args excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Resolves the output root: the flag, else $FEDASYNC_OUT, else "runs".
std::filesystem::path output_root(const std::string& flag);

/// Runs one configuration and writes rounds.csv, summary.json and manifest.json
/// into a fresh run directory under `root`. Returns that directory.
std::filesystem::path write_run(const std::filesystem::path& root, const SimConfig& cfg, SimResult* result = nullptr);

struct VerifyOptions {
  long quantizer_draws = 100000;
  int quantizer_vectors = 50;
  int lemma1_trials = 1000;
  long lemma2_samples = 100000;
  int smoothness_samples = 1000;
  int theorem_seeds = 20;
  long theorem_horizon = 500;
  double quantizer_bias = 0.0;  // negative control
  std::uint64_t seed = 2024;
};

/// Every analysis check on the configured quadratic task:
/// {"pass": bool, "checks": [{"name", "lhs", "rhs", "margin", "pass", "detail"}...]}
nlohmann::json verification_report(const SimConfig& cfg, const VerifyOptions& opts);

/// Random scheduler instances for the oracle harness.
nlohmann::json random_oracle_instances(int count, std::uint64_t seed, int max_prefilter = 12, int max_scheduled = 6);

/// Compares the proposed policy against the exhaustive oracle per instance.
/// Throws std::length_error when an instance exceeds the guard.
nlohmann::json oracle_report(const nlohmann::json& instances, double guard = 1e6);

}  // namespace afl
