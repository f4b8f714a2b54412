#pragma once

#include <algorithm>
#include <iterator>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "afl/rng.hpp"
#include "afl/task.hpp"

namespace afl {

/// alpha(t): either alpha1 * k0 / (t - 1 + k0) or beta / (t + kappa).
struct LearningRate {
  enum class Kind { diminishing, theory, constant };

  Kind kind = Kind::diminishing;
  double initial = 0.01;  // alpha(1) for diminishing/constant
  double offset = 50.0;   // k0
  double beta = 0.0;
  double kappa = 0.0;

  static LearningRate theory_schedule(double beta, double kappa) {
    return {Kind::theory, 0.0, 0.0, beta, kappa};
  }
  static LearningRate constant_rate(double alpha) { return {Kind::constant, alpha, 0.0, 0.0, 0.0}; }

  double operator()(long t) const {
    switch (kind) {
      case Kind::theory:
        return beta / (static_cast<double>(t) + kappa);
      case Kind::constant:
        return initial;
      case Kind::diminishing:
      default:
        return initial * offset / (static_cast<double>(t) - 1.0 + offset);
    }
  }
};

struct TrainerConfig {
  int local_steps = 1;     // E
  double lambda = 0.02;    // proximal coefficient
  Index batch_size = 0;    // 0 selects the whole shard
  LearningRate lr;
};

/// F_k(theta) + lambda/2 ||theta - anchor||^2
template <typename Scalar>
Scalar regularized_loss(const Task<Scalar>& task, Index device, const Vector<Scalar>& theta,
                        const Vector<Scalar>& anchor, Scalar lambda) {
  require_dim(theta.size(), task.dim(), "regularized_loss");
  require_dim(anchor.size(), task.dim(), "regularized_loss anchor");
  return task.local_loss(device, theta) + lambda / Scalar(2) * (theta - anchor).squaredNorm();
}

/// Runs E proximal SGD steps from `anchor` and returns u_k = theta(E) - theta(0).
/// Mini-batches are drawn uniformly without replacement, fresh each step.
template <typename Scalar>
Vector<Scalar> local_train(const Task<Scalar>& task, Index device, const Vector<Scalar>& anchor,
                           const TrainerConfig& cfg, long round, Rng& rng) {
  require_dim(anchor.size(), task.dim(), "local_train");
  if (cfg.local_steps < 1) throw std::invalid_argument("local_train: local step count must be >= 1");
  if (cfg.lambda < 0) throw std::invalid_argument("local_train: lambda must be nonnegative");
  const Index shard = task.shard_size(device);
  const Index batch = cfg.batch_size == 0 ? shard : cfg.batch_size;
  if (batch < 1 || batch > shard)
    throw std::invalid_argument("local_train: batch size exceeds the device shard");
  const double alpha = cfg.lr(round);
  if (!(alpha > 0)) throw std::invalid_argument("local_train: learning rate must be positive");

  std::vector<Index> positions(static_cast<std::size_t>(shard));
  std::iota(positions.begin(), positions.end(), Index{0});
  std::vector<Index> picked;
  picked.reserve(static_cast<std::size_t>(batch));

  const auto lambda = static_cast<Scalar>(cfg.lambda);
  Vector<Scalar> theta = anchor;
  for (int step = 0; step < cfg.local_steps; ++step) {
    Vector<Scalar> g;
    if (batch == shard) {
      g = task.batch_gradient(device, theta, positions);
    } else {
      picked.clear();
      std::sample(positions.begin(), positions.end(), std::back_inserter(picked), batch, rng);
      g = task.batch_gradient(device, theta, picked);
    }
    g += lambda * (theta - anchor);
    theta -= static_cast<Scalar>(alpha) * g;
  }
  if (!all_finite(theta)) throw std::runtime_error("local_train: non-finite model after training");
  return theta - anchor;
}

}  // namespace afl
