#include "afl/codec.hpp"

#include <bit>
#include <stdexcept>
#include <string>

#include "afl/channel.hpp"

namespace afl {

void BitString::push(bool bit) {
  if (bits_ % 8 == 0) bytes_.push_back(0);
  if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
  ++bits_;
}

void BitString::push_bits(std::uint64_t value, int count) {
  for (int i = count - 1; i >= 0; --i) push(((value >> i) & 1u) != 0);
}

bool BitString::at(std::size_t i) const {
  if (i >= bits_) throw std::out_of_range("BitString: read past end");
  return (bytes_[i / 8] & (0x80u >> (i % 8))) != 0;
}

BigInt binomial(long n, long k) {
  if (k < 0 || n < 0 || k > n) return 0;
  k = std::min(k, n - k);
  BigInt c = 1;
  for (long i = 1; i <= k; ++i) {
    c *= n - k + i;
    c /= i;
  }
  return c;
}

int index_bits(long dim, long retained) {
  const BigInt count = binomial(dim, retained);
  if (count <= 1) return 0;
  const BigInt top = count - 1;
  return static_cast<int>(boost::multiprecision::msb(top)) + 1;
}

BigInt rank_subset(std::span<const Index> subset, long dim) {
  const long r = static_cast<long>(subset.size());
  // rank = C(d, r) - 1 - sum_i C(d - 1 - c_i, r - i)
  BigInt colex = 0;
  for (long i = 0; i < r; ++i) {
    const Index c = subset[static_cast<std::size_t>(i)];
    if (c < 0 || c >= dim || (i > 0 && c <= subset[static_cast<std::size_t>(i - 1)]))
      throw std::invalid_argument("rank_subset: indices must be ascending and inside [0, d)");
    colex += binomial(dim - 1 - c, r - i);
  }
  return binomial(dim, r) - 1 - colex;
}

std::vector<Index> unrank_subset(const BigInt& rank, long dim, long retained) {
  const BigInt count = binomial(dim, retained);
  if (rank < 0 || rank >= count) throw std::invalid_argument("unrank_subset: rank out of range");
  BigInt remaining = count - 1 - rank;
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(retained));
  long x = dim - 1;  // candidate value of d - 1 - c_i, strictly decreasing in i
  BigInt cur = binomial(x, retained);
  for (long k = retained; k >= 1; --k) {
    while (cur > remaining) {
      // C(x - 1, k) = C(x, k) (x - k) / x
      cur = x > k ? BigInt(cur * (x - k) / x) : BigInt(0);
      --x;
    }
    out.push_back(static_cast<Index>(dim - 1 - x));
    remaining -= cur;
    // C(x - 1, k - 1) = C(x, k) k / x
    if (k > 1) {
      cur = (cur > 0 && x > 0) ? BigInt(cur * k / x) : binomial(x - 1, k - 1);
      --x;
    }
  }
  return out;
}

std::size_t encoded_bits(long dim, long retained, int levels) {
  return static_cast<std::size_t>(index_bits(dim, retained)) + 32 +
         static_cast<std::size_t>(retained) * static_cast<std::size_t>(element_bits(levels));
}

BitString encode(const CompressedUpdate& c) {
  const long r = static_cast<long>(c.retained());
  if (c.negative.size() != c.indices.size() || c.level.size() != c.indices.size())
    throw std::invalid_argument("encode: per-element arrays differ in length");
  BitString out;
  const int rank_len = index_bits(c.dim, r);
  const BigInt rank = rank_subset(c.indices, c.dim);
  for (int i = rank_len - 1; i >= 0; --i) out.push(boost::multiprecision::bit_test(rank, static_cast<unsigned>(i)));
  out.push_bits(std::bit_cast<std::uint32_t>(c.norm), 32);
  const int level_len = element_bits(c.levels) - 1;
  for (std::size_t n = 0; n < c.indices.size(); ++n) {
    if (c.level[n] > static_cast<std::uint32_t>(c.levels)) throw std::invalid_argument("encode: level above nu");
    out.push(c.negative[n] != 0);
    out.push_bits(c.level[n], level_len);
  }
  return out;
}

CompressedUpdate decode(const BitString& bits, long dim, long retained, int levels) {
  if (retained < 0 || retained > dim) throw std::invalid_argument("decode: retained count outside [0, d]");
  const std::size_t want = encoded_bits(dim, retained, levels);
  if (bits.size() != want)
    throw std::invalid_argument("decode: expected " + std::to_string(want) + " bits, got " +
                                std::to_string(bits.size()));
  std::size_t pos = 0;
  BigInt rank = 0;
  for (int i = 0; i < index_bits(dim, retained); ++i) {
    rank <<= 1;
    if (bits.at(pos++)) rank |= 1;
  }
  CompressedUpdate c;
  c.dim = dim;
  c.levels = levels;
  c.indices = unrank_subset(rank, dim, retained);
  std::uint32_t raw = 0;
  for (int i = 0; i < 32; ++i) raw = (raw << 1) | (bits.at(pos++) ? 1u : 0u);
  c.norm = std::bit_cast<float>(raw);
  const int level_len = element_bits(levels) - 1;
  c.negative.resize(static_cast<std::size_t>(retained));
  c.level.resize(static_cast<std::size_t>(retained));
  for (long n = 0; n < retained; ++n) {
    c.negative[static_cast<std::size_t>(n)] = bits.at(pos++) ? 1 : 0;
    std::uint32_t lvl = 0;
    for (int i = 0; i < level_len; ++i) lvl = (lvl << 1) | (bits.at(pos++) ? 1u : 0u);
    if (lvl > static_cast<std::uint32_t>(levels)) throw std::invalid_argument("decode: level above nu");
    c.level[static_cast<std::size_t>(n)] = lvl;
  }
  return c;
}

}  // namespace afl
