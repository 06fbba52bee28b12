#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stcp {

using Bytes = std::vector<std::uint8_t>;
using BytesView = std::span<const std::uint8_t>;

inline constexpr std::size_t kDigestSize = 32;
using Digest = std::array<std::uint8_t, kDigestSize>;

std::string to_hex(BytesView data);
/// Throws CodecError on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

template <std::size_t N>
std::array<std::uint8_t, N> to_array(BytesView data);

inline BytesView as_view(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline void append(Bytes& out, BytesView data) { out.insert(out.end(), data.begin(), data.end()); }

/// Concatenates any number of byte ranges in the given order.
template <typename... Parts>
Bytes concat(const Parts&... parts) {
  Bytes out;
  (append(out, BytesView(parts)), ...);
  return out;
}

/// Big-endian writer used by every on-wire and on-disk encoding.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(BytesView data) { append(buf_, data); }
  /// u16 length followed by the bytes.
  void var16(BytesView data);
  /// u32 length followed by the bytes.
  void var32(BytesView data);

  std::size_t size() const { return buf_.size(); }
  const Bytes& bytes() const& { return buf_; }
  Bytes take() && { return std::move(buf_); }

 private:
  Bytes buf_;
};

/// Bounds-checked big-endian reader. Every failure throws CodecError carrying
/// the offset at which decoding stopped.
class ByteReader {
 public:
  explicit ByteReader(BytesView data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  BytesView raw(std::size_t n);
  template <std::size_t N>
  std::array<std::uint8_t, N> fixed() {
    auto v = raw(N);
    std::array<std::uint8_t, N> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
  }
  BytesView var16() { return raw(u16()); }
  BytesView var32() { return raw(u32()); }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  /// Throws if any bytes are left unread.
  void expect_end() const;

 private:
  BytesView data_;
  std::size_t pos_ = 0;
};

}  // namespace stcp
