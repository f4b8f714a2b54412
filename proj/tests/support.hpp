#pragma once

#include <filesystem>
#include <string>

#include <unistd.h>

#include "afl/config.hpp"
#include "afl/task.hpp"

namespace afl::testing {

// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("afl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

inline std::string config_path(const std::string& name) { return std::string(AFL_CONFIG_DIR) + "/" + name; }

// F_k = 1/2 c_k (theta - t_k)^2 per coordinate, scalar helper.
inline QuadraticTask<double> scalar_quadratic(std::vector<double> curvature, std::vector<double> target,
                                              std::vector<Index> sizes) {
  std::vector<VectorXd> c, t;
  for (double v : curvature) c.push_back(VectorXd::Constant(1, v));
  for (double v : target) t.push_back(VectorXd::Constant(1, v));
  return QuadraticTask<double>(c, t, sizes);
}

}  // namespace afl::testing
