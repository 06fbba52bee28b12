#pragma once

// Wire messages of the three-message handshake plus the Abort frame, and the
// binary codec for them. docs/wire-format.md describes the layout byte by byte.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "stcp/bytes.hpp"
#include "stcp/crypto.hpp"
#include "stcp/tpm.hpp"

namespace stcp::proto {

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kFrameHeaderSize = 6;
inline constexpr std::size_t kMaxExponentBytes = 1024;

/// Opaque 16-byte device identifier. Carries no information about the
/// device's function; human-readable names never reach the wire.
struct DeviceIdentity {
  std::array<std::uint8_t, 16> bytes{};

  static DeviceIdentity random(crypto::RandomSource& rng);
  static DeviceIdentity from_hex(std::string_view hex);
  std::string hex() const { return to_hex(bytes); }
  BytesView view() const { return bytes; }
  friend auto operator<=>(const DeviceIdentity&, const DeviceIdentity&) = default;
};

struct SessionCookie {
  Digest digest{};
  std::string hex() const { return to_hex(digest); }
  friend auto operator<=>(const SessionCookie&, const SessionCookie&) = default;
};

enum class MessageType : std::uint8_t {
  Msg1 = 0x01,
  Msg2 = 0x02,
  Msg3 = 0x03,
  Abort = 0x7f,
};

std::string_view message_type_name(MessageType t);

/// Why a session ended without being established. Values up to
/// MalformedMessage may appear on the wire; the rest are local outcomes that
/// are also sent so the peer can stop waiting.
enum class AbortReason : std::uint8_t {
  CookieMismatch = 1,
  DegenerateExponential = 2,
  SealIntegrity = 3,
  PeerSignatureInvalid = 4,
  AttestationSignatureInvalid = 5,
  AttestationStale = 6,
  AttestationStateMismatch = 7,
  AttestationMissing = 8,
  MalformedMessage = 9,
  UnknownPeer = 10,
  Timeout = 11,
  RoleConflict = 12,
  Evicted = 13,
  PeerAborted = 14,
};

std::string_view abort_reason_name(AbortReason r);
std::optional<AbortReason> parse_abort_reason(std::string_view name);

/// Field order follows the handshake table: ids, nonce, exponential, VR, cookie.
/// Exponentials are carried as fixed-width big-endian bytes (group width).
struct Msg1 {
  DeviceIdentity ad1_id;
  DeviceIdentity ad2_id;
  crypto::Nonce n_ad1;
  Bytes dh_ad1;
  bool validation_request = true;
  SessionCookie cookie;
  friend bool operator==(const Msg1&, const Msg1&) = default;
};

struct Msg2 {
  DeviceIdentity ad2_id;
  DeviceIdentity ad1_id;
  crypto::Nonce n_ad2;
  Bytes dh_ad2;
  crypto::SealedEnvelope sealed_auth;
  bool validation_request = true;
  SessionCookie cookie;
  friend bool operator==(const Msg2&, const Msg2&) = default;
};

struct Msg3 {
  crypto::SealedEnvelope sealed_auth;
  SessionCookie cookie;
  friend bool operator==(const Msg3&, const Msg3&) = default;
};

struct Abort {
  AbortReason reason = AbortReason::MalformedMessage;
  SessionCookie cookie;
  friend bool operator==(const Abort&, const Abort&) = default;
};

using ProtocolMessage = std::variant<Msg1, Msg2, Msg3, Abort>;

MessageType type_of(const ProtocolMessage& m);
const SessionCookie& cookie_of(const ProtocolMessage& m);

/// version(1) | type(1) | body length(u32) | body.
Bytes encode(const ProtocolMessage& m);
/// Strict inverse of encode. Any deviation (unknown version or type, short
/// body, trailing bytes, non-boolean flag) throws CodecError.
ProtocolMessage decode(BytesView frame);

/// Contents of a sealed envelope: the device's transcript signature and,
/// when the peer asked for validation, a TPM quote.
struct AuthPayload {
  Bytes device_signature;
  std::optional<tpm::Quote> tpm_quote;

  Bytes encode() const;
  static AuthPayload decode(BytesView data);
  friend bool operator==(const AuthPayload&, const AuthPayload&) = default;
};

}  // namespace stcp::proto
