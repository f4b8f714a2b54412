#pragma once

// Learning tasks: per-device empirical losses F_k over data shards, their
// mini-batch gradients, and the global loss F over the union of shards.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "afl/dataset.hpp"

namespace afl {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  return v.allFinite();
}

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(got) + ", expected " + std::to_string(want) + ")");
}

/// Loss over per-device shards. Sample j of device k is addressed by its
/// position within the shard, 0 <= j < shard_size(k).
template <typename Scalar>
class Task {
 public:
  using Vec = Vector<Scalar>;

  virtual ~Task() = default;

  virtual Index dim() const = 0;
  virtual Index num_devices() const = 0;
  virtual Index shard_size(Index device) const = 0;

  virtual Scalar sample_loss(Index device, Index sample, const Vec& theta) const = 0;

  /// Mean gradient over `batch` (positions within the device shard).
  virtual Vec batch_gradient(Index device, const Vec& theta, std::span<const Index> batch) const = 0;

  /// F_k(theta). The default averages sample losses.
  virtual Scalar local_loss(Index device, const Vec& theta) const {
    Scalar sum = 0;
    for (Index j = 0; j < shard_size(device); ++j) sum += sample_loss(device, j, theta);
    return sum / static_cast<Scalar>(shard_size(device));
  }

  virtual Vec local_gradient(Index device, const Vec& theta) const {
    std::vector<Index> all(static_cast<std::size_t>(shard_size(device)));
    for (Index j = 0; j < shard_size(device); ++j) all[static_cast<std::size_t>(j)] = j;
    return batch_gradient(device, theta, all);
  }

  /// Held-out accuracy in [0, 1], for tasks that have one.
  virtual std::optional<double> test_accuracy(const Vec&) const { return std::nullopt; }

  Index total_samples() const {
    Index n = 0;
    for (Index k = 0; k < num_devices(); ++k) n += shard_size(k);
    return n;
  }

  /// |S_k| / |S| for every device.
  std::vector<Scalar> data_weights() const {
    std::vector<Scalar> w(static_cast<std::size_t>(num_devices()));
    const auto total = static_cast<Scalar>(total_samples());
    for (Index k = 0; k < num_devices(); ++k)
      w[static_cast<std::size_t>(k)] = static_cast<Scalar>(shard_size(k)) / total;
    return w;
  }
};

/// (1/|S|) sum over every sample of every shard of l(theta, x).
template <typename Scalar>
Scalar global_loss(const Task<Scalar>& task, const Vector<Scalar>& theta) {
  require_dim(theta.size(), task.dim(), "global_loss");
  const Index total = task.total_samples();
  if (total == 0) throw std::invalid_argument("global_loss: empty dataset");
  Scalar sum = 0;
  for (Index k = 0; k < task.num_devices(); ++k)
    for (Index j = 0; j < task.shard_size(k); ++j) sum += task.sample_loss(k, j, theta);
  return sum / static_cast<Scalar>(total);
}

/// Sum_k (|S_k|/|S|) F_k(theta).
template <typename Scalar>
Scalar weighted_local_loss(const Task<Scalar>& task, const Vector<Scalar>& theta) {
  require_dim(theta.size(), task.dim(), "weighted_local_loss");
  const auto w = task.data_weights();
  Scalar sum = 0;
  for (Index k = 0; k < task.num_devices(); ++k)
    sum += w[static_cast<std::size_t>(k)] * task.local_loss(k, theta);
  return sum;
}

/// Checked mini-batch gradient of F_k.
template <typename Scalar>
Vector<Scalar> gradient(const Task<Scalar>& task, Index device, const Vector<Scalar>& theta,
                        std::span<const Index> batch) {
  require_dim(theta.size(), task.dim(), "gradient");
  if (device < 0 || device >= task.num_devices())
    throw std::out_of_range("gradient: device id out of range");
  if (batch.empty()) throw std::invalid_argument("gradient: empty batch");
  for (Index j : batch)
    if (j < 0 || j >= task.shard_size(device))
      throw std::out_of_range("gradient: batch index outside the device shard");
  return task.batch_gradient(device, theta, batch);
}

/// F_k(theta) = 1/2 (theta - c_k)^T A_k (theta - c_k) with diagonal A_k.
///
/// Each shard sample carries a zero-mean perturbation xi_j with loss
/// l_j(theta) = F_k(theta) + xi_j^T (theta - c_k), so mini-batch gradients are
/// noisy while the shard mean is exactly the quadratic (F_k* = 0 at c_k).
template <typename Scalar>
class QuadraticTask final : public Task<Scalar> {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  /// Noise-free devices; each shard holds `sizes[k]` identical samples.
  QuadraticTask(std::vector<Vec> curvatures, std::vector<Vec> targets, std::vector<Index> sizes)
      : curvature_(std::move(curvatures)), target_(std::move(targets)) {
    if (sizes.size() != curvature_.size())
      throw std::invalid_argument("QuadraticTask: one shard size per device required");
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (sizes[k] < 1) throw std::invalid_argument("QuadraticTask: empty shard");
      noise_.push_back(Mat::Zero(dim_of(), sizes[k]));
    }
    validate();
  }

  /// Devices with explicit per-sample perturbations (columns, re-centred to mean zero).
  QuadraticTask(std::vector<Vec> curvatures, std::vector<Vec> targets, std::vector<Mat> noise)
      : curvature_(std::move(curvatures)), target_(std::move(targets)), noise_(std::move(noise)) {
    for (auto& xi : noise_) {
      if (xi.cols() < 1) throw std::invalid_argument("QuadraticTask: empty shard");
      const Vec mean = xi.rowwise().mean();
      xi.colwise() -= mean;
    }
    validate();
  }

  /// Point-cloud quadratics: l(theta, x) = 1/2 (theta - x)^T A_k (theta - x) up to
  /// a per-device constant, for points x given as columns.
  static QuadraticTask from_points(std::vector<Vec> curvatures, const std::vector<Mat>& points) {
    std::vector<Vec> targets;
    std::vector<Mat> noise;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const Vec c = points[k].rowwise().mean();
      targets.push_back(c);
      // gradient of the point loss minus the centred quadratic: A_k (c - x)
      Mat xi = (-(points[k].colwise() - c)).array().colwise() * curvatures.at(k).array();
      noise.push_back(std::move(xi));
    }
    return QuadraticTask(std::move(curvatures), std::move(targets), std::move(noise));
  }

  Index dim() const override { return dim_of(); }
  Index num_devices() const override { return static_cast<Index>(curvature_.size()); }
  Index shard_size(Index k) const override { return noise_[static_cast<std::size_t>(k)].cols(); }

  Scalar sample_loss(Index k, Index j, const Vec& theta) const override {
    const auto& xi = noise_[static_cast<std::size_t>(k)];
    const Vec diff = theta - target(k);
    return local_loss(k, theta) + xi.col(j).dot(diff);
  }

  Scalar local_loss(Index k, const Vec& theta) const override {
    require_dim(theta.size(), dim(), "QuadraticTask::local_loss");
    const Vec diff = theta - target(k);
    return Scalar(0.5) * (diff.array().square() * curvature(k).array()).sum();
  }

  Vec batch_gradient(Index k, const Vec& theta, std::span<const Index> batch) const override {
    const auto& xi = noise_[static_cast<std::size_t>(k)];
    Vec g = curvature(k).cwiseProduct(theta - target(k));
    Vec noise_mean = Vec::Zero(dim());
    for (Index j : batch) noise_mean += xi.col(j);
    g += noise_mean / static_cast<Scalar>(batch.size());
    return g;
  }

  Vec local_gradient(Index k, const Vec& theta) const override {
    return curvature(k).cwiseProduct(theta - target(k));
  }

  const Vec& curvature(Index k) const { return curvature_[static_cast<std::size_t>(k)]; }
  const Vec& target(Index k) const { return target_[static_cast<std::size_t>(k)]; }
  const Mat& noise(Index k) const { return noise_[static_cast<std::size_t>(k)]; }

  /// Smoothness constant: largest curvature across devices.
  Scalar smoothness() const {
    Scalar l = curvature_.front().maxCoeff();
    for (const auto& a : curvature_) l = std::max(l, a.maxCoeff());
    return l;
  }

  /// Strong-convexity constant: smallest curvature across devices.
  Scalar strong_convexity() const {
    Scalar m = curvature_.front().minCoeff();
    for (const auto& a : curvature_) m = std::min(m, a.minCoeff());
    return m;
  }

 private:
  Index dim_of() const {
    if (curvature_.empty()) throw std::invalid_argument("QuadraticTask: no devices");
    return curvature_.front().size();
  }

  void validate() const {
    if (curvature_.empty()) throw std::invalid_argument("QuadraticTask: no devices");
    if (target_.size() != curvature_.size() || noise_.size() != curvature_.size())
      throw std::invalid_argument("QuadraticTask: per-device arrays differ in length");
    const Index d = dim_of();
    for (std::size_t k = 0; k < curvature_.size(); ++k) {
      require_dim(curvature_[k].size(), d, "QuadraticTask curvature");
      require_dim(target_[k].size(), d, "QuadraticTask target");
      require_dim(noise_[k].rows(), d, "QuadraticTask noise");
      if ((curvature_[k].array() <= Scalar(0)).any())
        throw std::invalid_argument("QuadraticTask: curvature must be positive");
      if (!all_finite(curvature_[k]) || !all_finite(target_[k]) || !all_finite(noise_[k]))
        throw std::invalid_argument("QuadraticTask: non-finite parameters");
    }
  }

  std::vector<Vec> curvature_;
  std::vector<Vec> target_;
  std::vector<Mat> noise_;
};

template <typename Scalar>
struct QuadraticOptimum {
  Vector<Scalar> theta;
  Scalar value;
};

/// Minimizer of sum_k w_k F_k: (sum w_k A_k) theta* = sum w_k A_k c_k.
template <typename Scalar>
QuadraticOptimum<Scalar> quadratic_optimum(const QuadraticTask<Scalar>& task,
                                           std::span<const Scalar> weights) {
  if (static_cast<Index>(weights.size()) != task.num_devices())
    throw std::invalid_argument("quadratic_optimum: one weight per device required");
  const Index d = task.dim();
  Vector<Scalar> curvature = Vector<Scalar>::Zero(d);
  Vector<Scalar> rhs = Vector<Scalar>::Zero(d);
  for (Index k = 0; k < task.num_devices(); ++k) {
    const Scalar w = weights[static_cast<std::size_t>(k)];
    curvature += w * task.curvature(k);
    rhs += w * task.curvature(k).cwiseProduct(task.target(k));
  }
  const Scalar scale = std::max(curvature.cwiseAbs().maxCoeff(), Scalar(1));
  if ((curvature.array().abs() <= Scalar(1e-14) * scale).any())
    throw std::domain_error("quadratic_optimum: singular aggregate curvature");
  QuadraticOptimum<Scalar> opt{rhs.cwiseQuotient(curvature), Scalar(0)};
  for (Index k = 0; k < task.num_devices(); ++k)
    opt.value += weights[static_cast<std::size_t>(k)] * task.local_loss(k, opt.theta);
  return opt;
}

/// Optimum of the global loss F (data-proportional weights).
template <typename Scalar>
QuadraticOptimum<Scalar> quadratic_optimum(const QuadraticTask<Scalar>& task) {
  const auto w = task.data_weights();
  return quadratic_optimum<Scalar>(task, std::span<const Scalar>(w));
}

/// Multinomial linear classifier with cross-entropy loss. Parameters are the
/// column-major (classes x (features + 1)) weight matrix, last column the bias.
template <typename Scalar>
class ClassificationTask final : public Task<Scalar> {
 public:
  using Vec = Vector<Scalar>;
  using Mat = Matrix<Scalar>;

  ClassificationTask(std::shared_ptr<const Dataset> train, std::vector<std::vector<Index>> shards,
                     std::shared_ptr<const Dataset> test = nullptr)
      : train_(std::move(train)), test_(std::move(test)), shards_(std::move(shards)) {
    if (!train_ || train_->size() == 0) throw std::invalid_argument("ClassificationTask: empty dataset");
    if (shards_.empty()) throw std::invalid_argument("ClassificationTask: no shards");
    for (const auto& s : shards_) {
      if (s.empty()) throw std::invalid_argument("ClassificationTask: empty shard");
      for (Index i : s)
        if (i < 0 || i >= train_->size()) throw std::out_of_range("ClassificationTask: shard index");
    }
    classes_ = train_->num_classes;
    features_ = train_->num_features();
    x_ = train_->features.template cast<Scalar>();
    if (test_) {
      require_dim(test_->num_features(), features_, "ClassificationTask test set");
      x_test_ = test_->features.template cast<Scalar>();
    }
  }

  Index dim() const override { return static_cast<Index>(classes_) * (features_ + 1); }
  Index num_devices() const override { return static_cast<Index>(shards_.size()); }
  Index shard_size(Index k) const override {
    return static_cast<Index>(shards_[static_cast<std::size_t>(k)].size());
  }

  Scalar sample_loss(Index k, Index j, const Vec& theta) const override {
    const Index row = shards_[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
    const Vec logits = scores(theta, x_.row(row).transpose());
    const Scalar top = logits.maxCoeff();
    const Scalar lse = top + std::log((logits.array() - top).exp().sum());
    return lse - logits(train_->labels[static_cast<std::size_t>(row)]);
  }

  Vec batch_gradient(Index k, const Vec& theta, std::span<const Index> batch) const override {
    Mat grad = Mat::Zero(classes_, features_ + 1);
    const auto& shard = shards_[static_cast<std::size_t>(k)];
    for (Index j : batch) {
      const Index row = shard[static_cast<std::size_t>(j)];
      const Vec logits = scores(theta, x_.row(row).transpose());
      Vec p = (logits.array() - logits.maxCoeff()).exp();
      p /= p.sum();
      p(train_->labels[static_cast<std::size_t>(row)]) -= Scalar(1);
      grad.leftCols(features_).noalias() += p * x_.row(row);
      grad.col(features_) += p;
    }
    grad /= static_cast<Scalar>(batch.size());
    return Eigen::Map<const Vec>(grad.data(), grad.size());
  }

  std::optional<double> test_accuracy(const Vec& theta) const override {
    if (!test_ || test_->size() == 0) return std::nullopt;
    Index correct = 0;
    for (Index i = 0; i < test_->size(); ++i) {
      Index best = 0;
      scores(theta, x_test_.row(i).transpose()).maxCoeff(&best);
      if (best == test_->labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test_->size());
  }

  int num_classes() const { return classes_; }
  const std::vector<std::vector<Index>>& shards() const { return shards_; }
  const Dataset& train() const { return *train_; }

 private:
  Vec scores(const Vec& theta, const Vec& x) const {
    require_dim(theta.size(), dim(), "ClassificationTask");
    Eigen::Map<const Mat> w(theta.data(), classes_, features_ + 1);
    return w.leftCols(features_) * x + w.col(features_);
  }

  std::shared_ptr<const Dataset> train_;
  std::shared_ptr<const Dataset> test_;
  std::vector<std::vector<Index>> shards_;
  int classes_ = 0;
  Index features_ = 0;
  Mat x_;
  Mat x_test_;
};

}  // namespace afl
