#pragma once

// Random sparsification followed by the nu-level random quantizer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "afl/rng.hpp"
#include "afl/task.hpp"

namespace afl {

/// Wire-level content of one compressed update. Indices are 0-based and
/// ascending; `negative[i]` and `level[i]` describe element `indices[i]`.
struct CompressedUpdate {
  Index dim = 0;
  int levels = 4;  // nu
  std::vector<Index> indices;
  float norm = 0.0f;
  std::vector<std::uint8_t> negative;
  std::vector<std::uint32_t> level;

  Index retained() const { return static_cast<Index>(indices.size()); }

  friend bool operator==(const CompressedUpdate&, const CompressedUpdate&) = default;
};

template <typename Scalar>
struct Sparsified {
  Vector<Scalar> values;       // u_i on the kept indices, zero elsewhere
  std::vector<Index> indices;  // ascending
};

/// Keeps a uniformly random r-subset of coordinates.
template <typename Scalar>
Sparsified<Scalar> sparsify(const Vector<Scalar>& u, Index r, Rng& rng) {
  const Index d = u.size();
  if (r < 0 || r > d) throw std::invalid_argument("sparsify: retained count outside [0, d]");
  Sparsified<Scalar> out{Vector<Scalar>::Zero(d), {}};
  out.indices.reserve(static_cast<std::size_t>(r));
  std::vector<Index> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), Index{0});
  std::sample(all.begin(), all.end(), std::back_inserter(out.indices), r, rng);
  for (Index i : out.indices) out.values(i) = u(i);
  return out;
}

/// nu-level stochastic rounding of |x_i| / ||x|| on `indices`. `bias`
/// shifts the round-up probability and exists only as a negative control for
/// verification; it must be zero in normal use.
template <typename Scalar>
CompressedUpdate quantize(const Vector<Scalar>& sparse, const std::vector<Index>& indices, int levels,
                          Rng& rng, double bias = 0.0) {
  if (levels < 1) throw std::invalid_argument("quantize: quantization levels must be >= 1");
  CompressedUpdate c;
  c.dim = sparse.size();
  c.levels = levels;
  c.indices = indices;
  std::sort(c.indices.begin(), c.indices.end());
  double sq = 0;
  for (Index i : c.indices) sq += static_cast<double>(sparse(i)) * static_cast<double>(sparse(i));
  c.norm = static_cast<float>(std::sqrt(sq));
  c.negative.assign(c.indices.size(), 0);
  c.level.assign(c.indices.size(), 0);
  if (c.norm == 0.0f) return c;

  const double norm = c.norm;
  const double nu = levels;
  for (std::size_t n = 0; n < c.indices.size(); ++n) {
    const double x = static_cast<double>(sparse(c.indices[n]));
    c.negative[n] = x < 0 ? 1 : 0;
    const double ratio = std::min(nu * std::abs(x) / norm, nu);
    const double z = std::floor(ratio);
    const double p = std::clamp(ratio - z + bias, 0.0, 1.0);
    auto lvl = static_cast<std::uint32_t>(z) + (uniform01(rng) < p ? 1u : 0u);
    c.level[n] = std::min<std::uint32_t>(lvl, static_cast<std::uint32_t>(levels));
  }
  return c;
}

/// u_hat: norm * sign * level / nu on the kept indices, zero elsewhere.
template <typename Scalar>
Vector<Scalar> reconstruct(const CompressedUpdate& c) {
  Vector<Scalar> out = Vector<Scalar>::Zero(c.dim);
  const double scale = static_cast<double>(c.norm) / c.levels;
  for (std::size_t n = 0; n < c.indices.size(); ++n) {
    const double v = scale * c.level[n];
    out(c.indices[n]) = static_cast<Scalar>(c.negative[n] ? -v : v);
  }
  return out;
}

/// Sparsify then quantize.
template <typename Scalar>
CompressedUpdate compress(const Vector<Scalar>& u, Index r, int levels, Rng& rng, double bias = 0.0) {
  const auto s = sparsify(u, r, rng);
  return quantize(s.values, s.indices, levels, rng, bias);
}

}  // namespace afl
