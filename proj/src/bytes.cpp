#include "stcp/bytes.hpp"

#include "stcp/error.hpp"

namespace stcp {

std::string to_hex(BytesView data) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

namespace {
int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw CodecError("odd-length hex string", hex.size());
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw CodecError("invalid hex character", 2 * i);
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

template <std::size_t N>
std::array<std::uint8_t, N> to_array(BytesView data) {
  if (data.size() != N) {
    throw CodecError("expected " + std::to_string(N) + " bytes, got " + std::to_string(data.size()), 0);
  }
  std::array<std::uint8_t, N> out{};
  std::copy(data.begin(), data.end(), out.begin());
  return out;
}

template std::array<std::uint8_t, 16> to_array<16>(BytesView);
template std::array<std::uint8_t, 32> to_array<32>(BytesView);

void ByteWriter::u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
  buf_.push_back(static_cast<std::uint8_t>(v));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) buf_.push_back(static_cast<std::uint8_t>(v >> shift));
}

void ByteWriter::var16(BytesView data) {
  if (data.size() > 0xffff) throw CodecError("field exceeds u16 length", buf_.size());
  u16(static_cast<std::uint16_t>(data.size()));
  raw(data);
}

void ByteWriter::var32(BytesView data) {
  if (data.size() > 0xffffffffULL) throw CodecError("field exceeds u32 length", buf_.size());
  u32(static_cast<std::uint32_t>(data.size()));
  raw(data);
}

BytesView ByteReader::raw(std::size_t n) {
  if (n > remaining()) {
    throw CodecError("truncated input: need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()),
                     pos_);
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return raw(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto b = raw(2);
  return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
}

std::uint32_t ByteReader::u32() {
  auto b = raw(4);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
}

std::uint64_t ByteReader::u64() {
  auto b = raw(8);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

void ByteReader::expect_end() const {
  if (remaining() != 0) throw CodecError(std::to_string(remaining()) + " trailing bytes", pos_);
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::Crypto: return "CRYPTO_ERROR";
    case ErrorCode::ProtocolViolation: return "PROTOCOL_VIOLATION";
    case ErrorCode::Codec: return "CODEC_ERROR";
    case ErrorCode::Config: return "CONFIG_ERROR";
    case ErrorCode::State: return "STATE_ERROR";
    case ErrorCode::Provisioning: return "PROVISIONING_ERROR";
    case ErrorCode::Persistence: return "PERSISTENCE_ERROR";
    case ErrorCode::UnrecoverableSession: return "UNRECOVERABLE_SESSION";
    case ErrorCode::ExpiredSession: return "EXPIRED_SESSION";
    case ErrorCode::Integrity: return "INTEGRITY_ERROR";
    case ErrorCode::Timeout: return "TIMEOUT";
    case ErrorCode::Transport: return "TRANSPORT_ERROR";
    case ErrorCode::Usage: return "USAGE_ERROR";
  }
  return "UNKNOWN_ERROR";
}

}  // namespace stcp
