#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "afl/task.hpp"

namespace afl {

/// s_k(t), the global iteration at which device k last received a broadcast.
/// Every device receives the initial model, so s_k(1) = 1.
class AgeTracker {
 public:
  explicit AgeTracker(Index devices) : last_received_(static_cast<std::size_t>(devices), 1) {}

  /// Broadcast of theta(t + 1) to the ready set K(t).
  void broadcast(std::span<const Index> ready, long t) {
    for (Index k : ready) last_received_.at(static_cast<std::size_t>(k)) = t + 1;
  }

  long last_received(Index k) const { return last_received_.at(static_cast<std::size_t>(k)); }

  /// a_k(t) = t - s_k(t)
  long age(Index k, long t) const {
    const long a = t - last_received(k);
    if (a < 0) throw std::logic_error("AgeTracker: age queried before the last broadcast");
    return a;
  }

  std::vector<long> ages(long t) const {
    std::vector<long> out(last_received_.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = age(static_cast<Index>(k), t);
    return out;
  }

  Index size() const { return static_cast<Index>(last_received_.size()); }

 private:
  std::vector<long> last_received_;
};

/// Number of distinct ages among the aggregated devices, M(t).
inline std::size_t distinct_ages(std::vector<long> ages) {
  std::sort(ages.begin(), ages.end());
  return static_cast<std::size_t>(std::unique(ages.begin(), ages.end()) - ages.begin());
}

/// w_k = |S_k| gamma^{a_k} / sum_i |S_i| gamma^{a_i}. Ages enter relative to
/// their minimum, which leaves the weights unchanged and avoids underflow.
inline std::vector<double> age_weights(std::span<const double> sizes, std::span<const long> ages, double gamma) {
  if (!(gamma > 0)) throw std::invalid_argument("age_weights: gamma must be positive");
  if (sizes.empty() || sizes.size() != ages.size())
    throw std::invalid_argument("age_weights: need one size and one age per scheduled device");
  const long youngest = *std::min_element(ages.begin(), ages.end());
  std::vector<double> w(sizes.size());
  double total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = sizes[i] * std::pow(gamma, static_cast<double>(ages[i] - youngest));
    total += w[i];
  }
  if (!(total > 0)) throw std::domain_error("age_weights: all weights vanish");
  for (auto& x : w) x /= total;
  return w;
}

/// theta(t+1) = sum_k w_k (theta_k(t,0) + u_hat_k)
template <typename Scalar>
Vector<Scalar> aggregate_async(std::span<const Vector<Scalar>> bases, std::span<const Vector<Scalar>> updates,
                               std::span<const double> weights) {
  if (bases.empty() || bases.size() != updates.size() || bases.size() != weights.size())
    throw std::invalid_argument("aggregate_async: mismatched inputs");
  double wsum = 0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("aggregate_async: weights not normalized");
  Vector<Scalar> out = Vector<Scalar>::Zero(bases.front().size());
  for (std::size_t i = 0; i < bases.size(); ++i) {
    require_dim(bases[i].size(), out.size(), "aggregate_async base");
    require_dim(updates[i].size(), out.size(), "aggregate_async update");
    out += static_cast<Scalar>(weights[i]) * (bases[i] + updates[i]);
  }
  return out;
}

/// theta(t+1) = theta(t) + sum_k |S_k| / sum_j |S_j| u_hat_k
template <typename Scalar>
Vector<Scalar> aggregate_sync(const Vector<Scalar>& theta, std::span<const Vector<Scalar>> updates,
                              std::span<const double> sizes) {
  if (updates.empty() || updates.size() != sizes.size())
    throw std::invalid_argument("aggregate_sync: mismatched inputs");
  double total = 0;
  for (double s : sizes) total += s;
  Vector<Scalar> out = theta;
  for (std::size_t i = 0; i < updates.size(); ++i) {
    require_dim(updates[i].size(), theta.size(), "aggregate_sync update");
    out += static_cast<Scalar>(sizes[i] / total) * updates[i];
  }
  return out;
}

/// (1 - alpha) theta + alpha operand
template <typename Scalar>
Vector<Scalar> fedasync_step(const Vector<Scalar>& theta, const Vector<Scalar>& operand, double alpha) {
  if (!(alpha > 0) || alpha > 1) throw std::invalid_argument("fedasync_step: alpha must lie in (0, 1]");
  require_dim(operand.size(), theta.size(), "fedasync_step");
  return static_cast<Scalar>(1 - alpha) * theta + static_cast<Scalar>(alpha) * operand;
}

/// Broadcast versions theta(s) for the last `depth` iterations.
template <typename Scalar>
class ModelHistory {
 public:
  ModelHistory(Vector<Scalar> initial, std::size_t depth) : depth_(std::max<std::size_t>(depth, 1)) {
    versions_.push_back(std::move(initial));
  }

  /// Appends theta(latest + 1).
  void push(Vector<Scalar> theta) {
    versions_.push_back(std::move(theta));
    ++latest_;
    while (versions_.size() > depth_) {
      versions_.pop_front();
      ++oldest_;
    }
  }

  const Vector<Scalar>& at(long iteration) const {
    if (iteration < oldest_ || iteration > latest_)
      throw std::out_of_range("ModelHistory: version " + std::to_string(iteration) + " not retained");
    return versions_[static_cast<std::size_t>(iteration - oldest_)];
  }

  const Vector<Scalar>& latest() const { return versions_.back(); }
  long latest_iteration() const { return latest_; }

 private:
  std::size_t depth_;
  std::deque<Vector<Scalar>> versions_;
  long oldest_ = 1;
  long latest_ = 1;
};

}  // namespace afl
