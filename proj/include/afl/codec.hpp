#pragma once

// Bit-exact wire format of a compressed update, most significant bit first:
//   [ceil(log2 C(d, r)) bits: lexicographic rank of the index set]
//   [32 bits: IEEE-754 single-precision norm]
//   [r x (1 sign bit + ceil(log2(nu + 1)) level bits)], ascending index order
// d, r and nu travel out of band.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "afl/compression.hpp"

namespace afl {

using BigInt = boost::multiprecision::cpp_int;

class BitString {
 public:
  void push(bool bit);
  void push_bits(std::uint64_t value, int count);
  bool at(std::size_t i) const;
  std::size_t size() const { return bits_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bits_ = 0;
};

BigInt binomial(long n, long k);

/// ceil(log2 C(d, r)), exact.
int index_bits(long dim, long retained);

/// Lexicographic rank of an ascending 0-based r-subset of {0..d-1}.
BigInt rank_subset(std::span<const Index> subset, long dim);

/// Inverse of rank_subset.
std::vector<Index> unrank_subset(const BigInt& rank, long dim, long retained);

/// Exact encoded length in bits.
std::size_t encoded_bits(long dim, long retained, int levels);

BitString encode(const CompressedUpdate& c);

/// Throws std::invalid_argument on a length mismatch, an out-of-range rank, or
/// a level above nu.
CompressedUpdate decode(const BitString& bits, long dim, long retained, int levels);

}  // namespace afl
