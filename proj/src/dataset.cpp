#include "afl/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace afl {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

bool parse_double(const std::string& s, double& v) {
  try {
    std::size_t pos = 0;
    v = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::string line;
  std::size_t width = 0;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    std::vector<double> values(cells.size());
    bool numeric = true;
    for (std::size_t i = 0; i < cells.size(); ++i) numeric = numeric && parse_double(cells[i], values[i]);
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw std::runtime_error("non-numeric cell in " + path.string() + " line " +
                               std::to_string(line_no));
    }
    first = false;
    if (values.size() < 2)
      throw std::runtime_error("dataset row needs at least one feature and a label");
    if (width == 0) width = values.size();
    if (values.size() != width)
      throw std::runtime_error("ragged dataset row at line " + std::to_string(line_no));
    double label = values.back();
    if (label < 0 || label != std::floor(label))
      throw std::runtime_error("label must be a nonnegative integer at line " +
                               std::to_string(line_no));
    labels.push_back(static_cast<int>(label));
    values.pop_back();
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw std::runtime_error("empty dataset: " + path.string());

  Dataset data;
  data.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(width - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c + 1 < width; ++c)
      data.features(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  data.labels = std::move(labels);
  data.num_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
  return data;
}

Dataset make_gaussian_clusters(const GaussianClustersSpec& spec, std::uint64_t means_seed,
                               Rng& sample_rng) {
  if (spec.num_classes < 1 || spec.num_features < 1 || spec.samples_per_class < 1)
    throw std::invalid_argument("gaussian clusters: sizes must be positive");

  Rng means_rng = make_stream(means_seed, "class-means");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd means(spec.num_classes, spec.num_features);
  for (Index c = 0; c < means.rows(); ++c)
    for (Index f = 0; f < means.cols(); ++f) means(c, f) = spec.separation * normal(means_rng);

  const Index n = static_cast<Index>(spec.num_classes) * spec.samples_per_class;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i / spec.samples_per_class);
  std::shuffle(labels.begin(), labels.end(), sample_rng);

  Dataset data;
  data.num_classes = spec.num_classes;
  data.features.resize(n, spec.num_features);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    for (Index f = 0; f < spec.num_features; ++f)
      data.features(i, f) = means(y, f) + spec.noise * normal(sample_rng);
  }
  data.labels = std::move(labels);
  return data;
}

Dataset subset(const Dataset& data, const std::vector<Index>& rows) {
  Dataset out;
  out.num_classes = data.num_classes;
  out.features.resize(static_cast<Index>(rows.size()), data.num_features());
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = data.features.row(rows[i]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(rows[i])]);
  }
  return out;
}

}  // namespace afl
