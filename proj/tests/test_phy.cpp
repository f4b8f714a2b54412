#include <doctest.h>

#include <boost/math/special_functions/binomial.hpp>

#include <cmath>
#include <numeric>

#include "afl/channel.hpp"
#include "afl/codec.hpp"
#include "afl/compression.hpp"

using namespace afl;

namespace {

// Exact binomial through Boost.Math as an independent reference.
double reference_cost(long d, int levels, long r) {
  const double c = boost::math::binomial_coefficient<double>(static_cast<unsigned>(d), static_cast<unsigned>(r));
  return std::log2(c) + 32 + static_cast<double>(r) * (std::ceil(std::log2(levels + 1.0)) + 1);
}

CompressedUpdate random_update(Rng& rng) {
  std::uniform_int_distribution<long> dims(1, 300);
  const long d = dims(rng);
  const long r = std::uniform_int_distribution<long>(0, d)(rng);
  const int levels = std::uniform_int_distribution<int>(1, 16)(rng);
  VectorXd u(d);
  std::normal_distribution<double> n(0.0, 1.0);
  for (long i = 0; i < d; ++i) u(i) = n(rng);
  return compress(u, r, levels, rng);
}

}  // namespace

TEST_CASE("capacity at a fixed gain") {
  CHECK(db_to_linear(13.0) == doctest::Approx(19.9526).epsilon(1e-5));
  CHECK(fixed_channel(1.0, 13.0).capacity() == doctest::Approx(std::log2(1 + std::pow(10.0, 1.3))));
  CHECK(fixed_channel(1.0, 13.0).capacity() == doctest::Approx(4.389).epsilon(1e-3));
  CHECK(fixed_channel(0.0, 13.0).capacity() == 0.0);
}

TEST_CASE("Rayleigh fading has unit mean power") {
  Rng rng(2024);
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += draw_channel(rng, 13.0).fading_power();
  CHECK(sum / n >= 0.99);
  CHECK(sum / n <= 1.01);
}

TEST_CASE("symbol allocation examples") {
  SUBCASE("two devices") {
    const std::vector<double> caps{2, 4};
    const auto a = allocate_symbols(caps, 300);
    CHECK(a.symbols == std::vector<long>{200, 100});
    CHECK(a.total == 300);
  }
  SUBCASE("single device") {
    const std::vector<double> caps{3.3};
    CHECK(allocate_symbols(caps, 77).symbols == std::vector<long>{77});
  }
  SUBCASE("equal capacities") {
    const std::vector<double> caps{2.5, 2.5, 2.5};
    CHECK(allocate_symbols(caps, 10).symbols == std::vector<long>{4, 3, 3});
  }
}

TEST_CASE("symbol allocation balances products") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = std::uniform_int_distribution<int>(1, 12)(rng);
    std::vector<double> caps;
    for (int i = 0; i < k; ++i) caps.push_back(draw_channel(rng, 13.0).capacity() + 1e-3);
    const long n = std::uniform_int_distribution<long>(k, 5000)(rng);
    const auto a = allocate_symbols(caps, n);
    CHECK(std::accumulate(a.symbols.begin(), a.symbols.end(), 0L) == n);
    double lo = INFINITY, hi = -INFINITY;
    for (int i = 0; i < k; ++i) {
      lo = std::min(lo, a.symbols[static_cast<std::size_t>(i)] * caps[static_cast<std::size_t>(i)]);
      hi = std::max(hi, a.symbols[static_cast<std::size_t>(i)] * caps[static_cast<std::size_t>(i)]);
    }
    CHECK(hi - lo <= *std::max_element(caps.begin(), caps.end()) + 1e-9);
  }
}

TEST_CASE("transmission cost and sparsity") {
  CHECK(transmission_cost(10, 4, 5) == doctest::Approx(59.977).epsilon(1e-4));
  CHECK(transmission_cost(10, 4, 6) == doctest::Approx(63.714).epsilon(1e-4));
  CHECK(max_sparsity(10, 4, 60) == 5);
  CHECK(max_sparsity(10, 4, 31) == 0);
  CHECK(element_bits(4) == 4);  // sign plus three level bits
  for (long d = 1; d <= 64; ++d) {
    for (long r = 0; r <= d; ++r)
      CHECK(transmission_cost(d, 4, r) == doctest::Approx(reference_cost(d, 4, r)).epsilon(1e-10));
    for (long r = 1; r <= d / 2; ++r) CHECK(transmission_cost(d, 4, r) >= transmission_cost(d, 4, r - 1));
  }
  // max_sparsity agrees with a linear scan
  for (double budget : {0.0, 40.0, 100.0, 500.0, 2000.0})
    for (long d : {1L, 7L, 64L, 170L}) {
      long best = 0;
      for (long r = 1; r <= d; ++r)
        if (transmission_cost(d, 4, r) <= budget) best = r;
      CHECK(max_sparsity(d, 4, budget) == best);
    }
}

TEST_CASE("sparsification") {
  Rng rng(3);
  VectorXd u(5);
  u << 1, -2, 3, -4, 5;
  CHECK(sparsify(u, 5, rng).values == u);
  CHECK(sparsify(u, 0, rng).values.isZero());
  CHECK_THROWS_AS(sparsify(u, 6, rng), std::invalid_argument);

  const int d = 8, r = 3, draws = 100000;
  std::vector<int> hits(d, 0);
  const VectorXd v = VectorXd::Ones(d);
  for (int i = 0; i < draws; ++i)
    for (Index j : sparsify(v, r, rng).indices) ++hits[static_cast<std::size_t>(j)];
  const double p = static_cast<double>(r) / d;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (int j = 0; j < d; ++j) CHECK(std::abs(hits[static_cast<std::size_t>(j)] / double(draws) - p) <= 3 * sigma);
}

TEST_CASE("quantizer two-outcome law on [3, 4]") {
  VectorXd u(2);
  u << 3, 4;
  const std::vector<Index> idx{0, 1};
  Rng rng(11);
  const int draws = 200000;
  int high0 = 0, high1 = 0;
  VectorXd mean = VectorXd::Zero(2);
  for (int i = 0; i < draws; ++i) {
    const VectorXd q = reconstruct<double>(quantize(u, idx, 4, rng));
    CHECK(((q(0) == 3.75) || (q(0) == 2.5)));
    CHECK(((q(1) == 5.0) || (q(1) == 3.75)));
    high0 += q(0) == 3.75;
    high1 += q(1) == 5.0;
    mean += q;
  }
  mean /= draws;
  const double se = std::sqrt(0.25 / draws);
  CHECK(std::abs(high0 / double(draws) - 0.4) < 4 * se);
  CHECK(std::abs(high1 / double(draws) - 0.2) < 4 * se);
  CHECK(std::abs(mean(0) - 3) < 4 * 1.25 * se);
  CHECK(std::abs(mean(1) - 4) < 4 * 1.25 * se);
  // exact second moments: 1.25^2 0.4 0.6 + 1.25^2 0.2 0.8
  CHECK(1.5625 * 0.24 + 1.5625 * 0.16 == doctest::Approx(0.625));
}

TEST_CASE("quantizer of zero is zero") {
  Rng rng(1);
  const VectorXd z = VectorXd::Zero(6);
  const auto c = compress(z, 4, 4, rng);
  CHECK(c.norm == 0.0f);
  CHECK(reconstruct<double>(c).isZero());
}

TEST_CASE("reconstruction") {
  CompressedUpdate c;
  c.dim = 3;
  c.levels = 4;
  c.indices = {1};
  c.norm = 5.0f;
  c.negative = {0};
  c.level = {4};
  CHECK(reconstruct<double>(c)(1) == doctest::Approx(5.0));
  c.level = {0};
  CHECK(reconstruct<double>(c).isZero());
  c.indices.clear();
  c.negative.clear();
  c.level.clear();
  CHECK(reconstruct<double>(c).isZero());
}

TEST_CASE("subset ranking") {
  const std::vector<Index> v{0, 2};  // {1, 3} one-based
  CHECK(rank_subset(v, 4) == 1);
  CHECK(index_bits(4, 2) == 3);
  CHECK(index_bits(10, 5) == 8);
  CHECK(index_bits(7, 7) == 0);
  CHECK(binomial(10, 5) == 252);
  // lexicographic order of all 2-subsets of 4
  long expected = 0;
  for (Index a = 0; a < 4; ++a)
    for (Index b = a + 1; b < 4; ++b) {
      const std::vector<Index> s{a, b};
      CHECK(rank_subset(s, 4) == expected);
      CHECK(unrank_subset(BigInt(expected), 4, 2) == s);
      ++expected;
    }
  // big dimensions need arbitrary precision
  std::vector<Index> wide;
  for (Index i = 0; i < 100; ++i) wide.push_back(2 * i + 1);
  CHECK(unrank_subset(rank_subset(wide, 400), 400, 100) == wide);
}

TEST_CASE("codec round trip and exact length") {
  Rng rng(2025);
  for (int i = 0; i < 10000; ++i) {
    const auto c = random_update(rng);
    const BitString bits = encode(c);
    const long d = c.dim, r = c.retained();
    const auto want = static_cast<std::size_t>(index_bits(d, r) + 32 + r * (std::ceil(std::log2(c.levels + 1.0)) + 1));
    CHECK(bits.size() == want);
    CHECK(encoded_bits(d, r, c.levels) == want);
    CHECK(decode(bits, d, r, c.levels) == c);
  }
  CHECK(encoded_bits(10, 5, 4) == 60);
}

TEST_CASE("decoder rejects malformed input") {
  Rng rng(1);
  VectorXd u = VectorXd::LinSpaced(10, -1, 1);
  const auto c = compress(u, 5, 4, rng);
  BitString bits = encode(c);
  CHECK_THROWS_AS(decode(bits, 10, 4, 4), std::invalid_argument);
  bits.push(true);
  CHECK_THROWS_AS(decode(bits, 10, 5, 4), std::invalid_argument);
  // rank past C(d, r)
  BitString bad;
  bad.push_bits(255, 8);
  bad.push_bits(0, 32);
  bad.push_bits(0, 20);
  CHECK_THROWS_AS(decode(bad, 10, 5, 4), std::invalid_argument);
}
