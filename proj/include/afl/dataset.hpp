#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "afl/rng.hpp"

namespace afl {

using Index = Eigen::Index;

/// Labeled samples: one row of `features` per sample, labels in [0, num_classes).
struct Dataset {
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int num_classes = 0;

  Index size() const { return static_cast<Index>(labels.size()); }
  Index num_features() const { return features.cols(); }
};

/// Reads a CSV with one sample per row: feature columns followed by an
/// integer label. A non-numeric first row is treated as a header.
Dataset load_csv_dataset(const std::filesystem::path& path);

struct GaussianClustersSpec {
  int num_classes = 10;
  int num_features = 16;
  int samples_per_class = 200;
  double separation = 1.0;  // stddev of class means
  double noise = 1.0;       // within-class stddev
};

/// Gaussian class clusters; labels are emitted in shuffled order. Two calls with
/// the same `means_seed` share class means, so train/test splits are consistent.
Dataset make_gaussian_clusters(const GaussianClustersSpec& spec, std::uint64_t means_seed,
                               Rng& sample_rng);

/// Copies the selected rows.
Dataset subset(const Dataset& data, const std::vector<Index>& rows);

}  // namespace afl
