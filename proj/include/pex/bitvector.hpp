#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pex/error.hpp"

namespace pex {

// Fixed-length binary predicate representation. Immutable after construction;
// "mutating" helpers return fresh vectors.
class BitVector {
public:
  BitVector() = default;

  explicit BitVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    for (auto& b : bits_) b = b ? 1 : 0;
  }

  static BitVector ones(std::size_t d) {
    return BitVector(std::vector<std::uint8_t>(d, 1));
  }

  static BitVector zeros(std::size_t d) {
    return BitVector(std::vector<std::uint8_t>(d, 0));
  }

  // Bit i of `mask` becomes element i. Only meaningful for d <= 64; used by
  // exhaustive enumerations.
  static BitVector from_mask(std::size_t d, std::uint64_t mask) {
    if (d > 64) throw ContractError("BitVector::from_mask requires d <= 64");
    std::vector<std::uint8_t> bits(d);
    for (std::size_t i = 0; i < d; ++i) bits[i] = (mask >> i) & 1u;
    return BitVector(std::move(bits));
  }

  static BitVector from_string(std::string_view s) {
    std::vector<std::uint8_t> bits;
    bits.reserve(s.size());
    for (char c : s) {
      if (c != '0' && c != '1')
        throw ParseError("bitvector string must contain only 0/1, got '" +
                         std::string(1, c) + "'");
      bits.push_back(c == '1');
    }
    return BitVector(std::move(bits));
  }

  std::size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }

  bool operator[](std::size_t i) const { return bits_[i] != 0; }

  bool test(std::size_t i) const {
    if (i >= bits_.size()) throw ContractError("bit index out of range");
    return bits_[i] != 0;
  }

  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

  std::size_t hamming(const BitVector& other) const {
    if (other.size() != size())
      throw ContractError("hamming distance needs equal lengths");
    std::size_t n = 0;
    for (std::size_t i = 0; i < bits_.size(); ++i) n += bits_[i] != other.bits_[i];
    return n;
  }

  BitVector with_bit(std::size_t i, bool v) const {
    if (i >= bits_.size()) throw ContractError("bit index out of range");
    auto copy = bits_;
    copy[i] = v ? 1 : 0;
    return BitVector(std::move(copy));
  }

  std::string str() const {
    std::string s(bits_.size(), '0');
    for (std::size_t i = 0; i < bits_.size(); ++i)
      if (bits_[i]) s[i] = '1';
    return s;
  }

  const std::vector<std::uint8_t>& raw() const { return bits_; }

  friend bool operator==(const BitVector& a, const BitVector& b) {
    return a.bits_ == b.bits_;
  }
  friend bool operator!=(const BitVector& a, const BitVector& b) {
    return !(a == b);
  }

private:
  std::vector<std::uint8_t> bits_;
};

struct BitVectorHash {
  std::size_t operator()(const BitVector& v) const {
    // FNV-1a over the 0/1 bytes.
    std::uint64_t h = 1469598103934665603ull;
    for (auto b : v.raw()) {
      h ^= b;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace pex
