#pragma once

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace powq {

using Nonce = std::uint64_t;
using ByteBuffer = std::vector<std::uint8_t>;

/// Fixed-width opaque byte string. The tag keeps digests, keys and
/// signatures from being mixed up; ordering is lexicographic, i.e. the
/// big-endian numeric order used for threshold and leader comparisons.
template <class Tag, std::size_t N>
struct FixedBytes {
  static constexpr std::size_t size = N;
  std::array<std::uint8_t, N> data{};

  static constexpr FixedBytes filled(std::uint8_t byte) {
    FixedBytes out;
    out.data.fill(byte);
    return out;
  }

  static constexpr FixedBytes from_u64(std::uint64_t value) {
    FixedBytes out;
    for (std::size_t i = 0; i < N && i < 8; ++i) {
      out.data[N - 1 - i] = static_cast<std::uint8_t>(value >> (8 * i));
    }
    return out;
  }

  /// Leading eight bytes as a big-endian integer.
  constexpr std::uint64_t prefix_u64() const {
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      value <<= 8;
      if (i < N) value |= data[i];
    }
    return value;
  }

  std::span<const std::uint8_t> bytes() const { return {data.data(), N}; }

  friend bool operator==(const FixedBytes& a, const FixedBytes& b) {
    return std::memcmp(a.data.data(), b.data.data(), N) == 0;
  }
  friend std::strong_ordering operator<=>(const FixedBytes& a, const FixedBytes& b) {
    if constexpr (N == 8) return a.prefix_u64() <=> b.prefix_u64();
    const int c = std::memcmp(a.data.data(), b.data.data(), N);
    return c < 0 ? std::strong_ordering::less
                 : (c > 0 ? std::strong_ordering::greater : std::strong_ordering::equal);
  }
};

template <class Tag, std::size_t N>
std::string to_hex(const FixedBytes<Tag, N>& value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * N);
  for (auto byte : value.data) {
    out.push_back(digits[byte >> 4]);
    out.push_back(digits[byte & 0xf]);
  }
  return out;
}

struct FixedBytesHash {
  template <class Tag, std::size_t N>
  std::size_t operator()(const FixedBytes<Tag, N>& value) const noexcept {
    std::uint64_t h = 0;
    std::memcpy(&h, value.data.data(), std::min<std::size_t>(N, 8));
    // Digests are already uniformly distributed; one multiply spreads the
    // low bits of fast-hash outputs.
    return static_cast<std::size_t>(h * 0x9e3779b97f4a7c15ULL);
  }
};

inline void append_bytes(ByteBuffer& out, std::span<const std::uint8_t> bytes) {
  out.insert(out.end(), bytes.begin(), bytes.end());
}

inline void append_u64(ByteBuffer& out, std::uint64_t value) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

}  // namespace powq
