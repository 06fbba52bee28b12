#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "stcp/bytes.hpp"

namespace stcp::crypto {

/// Source of key, nonce, and IV material. Implementations need not be
/// thread-safe unless stated.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<std::uint8_t> out) = 0;

  Bytes bytes(std::size_t n) {
    Bytes out(n);
    fill(out);
    return out;
  }
};

/// OpenSSL's DRBG. Thread-safe; failure to gather entropy throws CryptoError.
class SystemRandom final : public RandomSource {
 public:
  void fill(std::span<std::uint8_t> out) override;
  static SystemRandom& instance();
};

/// SHA-256 in counter mode over a fixed seed. Used by the scenario harness so
/// that identical seeds replay identical frame traces. Not for production keys.
class DeterministicRandom final : public RandomSource {
 public:
  explicit DeterministicRandom(std::uint64_t seed, std::string_view stream = {});
  void fill(std::span<std::uint8_t> out) override;

 private:
  Bytes seed_;
  std::uint64_t counter_ = 0;
  Digest block_{};
  std::size_t used_ = kDigestSize;
};

}  // namespace stcp::crypto
