#include "stcp/messages.hpp"

#include "stcp/error.hpp"

namespace stcp::proto {

DeviceIdentity DeviceIdentity::random(crypto::RandomSource& rng) {
  DeviceIdentity id;
  rng.fill(id.bytes);
  return id;
}

DeviceIdentity DeviceIdentity::from_hex(std::string_view hex) {
  DeviceIdentity id;
  id.bytes = to_array<16>(stcp::from_hex(hex));
  return id;
}

std::string_view message_type_name(MessageType t) {
  switch (t) {
    case MessageType::Msg1: return "Msg1";
    case MessageType::Msg2: return "Msg2";
    case MessageType::Msg3: return "Msg3";
    case MessageType::Abort: return "Abort";
  }
  return "Unknown";
}

namespace {
constexpr std::pair<AbortReason, std::string_view> kReasons[] = {
    {AbortReason::CookieMismatch, "CookieMismatch"},
    {AbortReason::DegenerateExponential, "DegenerateExponential"},
    {AbortReason::SealIntegrity, "SealIntegrity"},
    {AbortReason::PeerSignatureInvalid, "PeerSignatureInvalid"},
    {AbortReason::AttestationSignatureInvalid, "AttestationSignatureInvalid"},
    {AbortReason::AttestationStale, "AttestationStale"},
    {AbortReason::AttestationStateMismatch, "AttestationStateMismatch"},
    {AbortReason::AttestationMissing, "AttestationMissing"},
    {AbortReason::MalformedMessage, "MalformedMessage"},
    {AbortReason::UnknownPeer, "UnknownPeer"},
    {AbortReason::Timeout, "Timeout"},
    {AbortReason::RoleConflict, "RoleConflict"},
    {AbortReason::Evicted, "Evicted"},
    {AbortReason::PeerAborted, "PeerAborted"},
};
}  // namespace

std::string_view abort_reason_name(AbortReason r) {
  for (const auto& [reason, name] : kReasons) {
    if (reason == r) return name;
  }
  return "Unknown";
}

std::optional<AbortReason> parse_abort_reason(std::string_view name) {
  for (const auto& [reason, n] : kReasons) {
    if (n == name) return reason;
  }
  return std::nullopt;
}

MessageType type_of(const ProtocolMessage& m) {
  return std::visit(
      [](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Msg1>) return MessageType::Msg1;
        else if constexpr (std::is_same_v<T, Msg2>) return MessageType::Msg2;
        else if constexpr (std::is_same_v<T, Msg3>) return MessageType::Msg3;
        else return MessageType::Abort;
      },
      m);
}

const SessionCookie& cookie_of(const ProtocolMessage& m) {
  return std::visit([](const auto& msg) -> const SessionCookie& { return msg.cookie; }, m);
}

namespace {

void write_exponential(ByteWriter& w, const Bytes& dh) {
  if (dh.empty() || dh.size() > kMaxExponentBytes) throw CodecError("exponential length out of range", w.size());
  w.var16(dh);
}

Bytes read_exponential(ByteReader& r) {
  const auto at = r.offset();
  auto v = r.var16();
  if (v.empty() || v.size() > kMaxExponentBytes) throw CodecError("exponential length out of range", at);
  return Bytes(v.begin(), v.end());
}

bool read_flag(ByteReader& r) {
  const auto at = r.offset();
  auto b = r.u8();
  if (b > 1) throw CodecError("validation-request flag must be 0 or 1", at);
  return b == 1;
}

crypto::SealedEnvelope read_envelope(ByteReader& r) {
  const auto at = r.offset();
  auto raw = r.var32();
  try {
    return crypto::SealedEnvelope::decode(raw);
  } catch (const CodecError& e) {
    throw CodecError(std::string("sealed envelope: ") + e.what(), at + 4 + e.offset());
  }
}

void encode_body(ByteWriter& w, const Msg1& m) {
  w.raw(m.ad1_id.bytes);
  w.raw(m.ad2_id.bytes);
  w.raw(m.n_ad1.bytes);
  write_exponential(w, m.dh_ad1);
  w.u8(m.validation_request ? 1 : 0);
  w.raw(m.cookie.digest);
}

void encode_body(ByteWriter& w, const Msg2& m) {
  w.raw(m.ad2_id.bytes);
  w.raw(m.ad1_id.bytes);
  w.raw(m.n_ad2.bytes);
  write_exponential(w, m.dh_ad2);
  w.var32(m.sealed_auth.encode());
  w.u8(m.validation_request ? 1 : 0);
  w.raw(m.cookie.digest);
}

void encode_body(ByteWriter& w, const Msg3& m) {
  w.var32(m.sealed_auth.encode());
  w.raw(m.cookie.digest);
}

void encode_body(ByteWriter& w, const Abort& m) {
  w.u8(static_cast<std::uint8_t>(m.reason));
  w.raw(m.cookie.digest);
}

DeviceIdentity read_id(ByteReader& r) { return DeviceIdentity{r.fixed<16>()}; }
SessionCookie read_cookie(ByteReader& r) { return SessionCookie{r.fixed<kDigestSize>()}; }
crypto::Nonce read_nonce(ByteReader& r) { return crypto::Nonce{r.fixed<crypto::kNonceSize>()}; }

}  // namespace

Bytes encode(const ProtocolMessage& m) {
  ByteWriter body;
  std::visit([&](const auto& msg) { encode_body(body, msg); }, m);
  ByteWriter w;
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(type_of(m)));
  w.var32(body.bytes());
  return std::move(w).take();
}

ProtocolMessage decode(BytesView frame) {
  ByteReader r(frame);
  const auto version = r.u8();
  if (version != kWireVersion) throw CodecError("unsupported wire version " + std::to_string(version), 0);
  const auto type = r.u8();
  const auto length = r.u32();
  if (length != r.remaining()) {
    throw CodecError("body length " + std::to_string(length) + " does not match frame (" +
                         std::to_string(r.remaining()) + " bytes follow)",
                     2);
  }
  switch (static_cast<MessageType>(type)) {
    case MessageType::Msg1: {
      Msg1 m;
      m.ad1_id = read_id(r);
      m.ad2_id = read_id(r);
      m.n_ad1 = read_nonce(r);
      m.dh_ad1 = read_exponential(r);
      m.validation_request = read_flag(r);
      m.cookie = read_cookie(r);
      r.expect_end();
      return m;
    }
    case MessageType::Msg2: {
      Msg2 m;
      m.ad2_id = read_id(r);
      m.ad1_id = read_id(r);
      m.n_ad2 = read_nonce(r);
      m.dh_ad2 = read_exponential(r);
      m.sealed_auth = read_envelope(r);
      m.validation_request = read_flag(r);
      m.cookie = read_cookie(r);
      r.expect_end();
      return m;
    }
    case MessageType::Msg3: {
      Msg3 m;
      m.sealed_auth = read_envelope(r);
      m.cookie = read_cookie(r);
      r.expect_end();
      return m;
    }
    case MessageType::Abort: {
      Abort m;
      const auto at = r.offset();
      const auto code = r.u8();
      if (code < static_cast<std::uint8_t>(AbortReason::CookieMismatch) ||
          code > static_cast<std::uint8_t>(AbortReason::PeerAborted)) {
        throw CodecError("unknown abort reason " + std::to_string(code), at);
      }
      m.reason = static_cast<AbortReason>(code);
      m.cookie = read_cookie(r);
      r.expect_end();
      return m;
    }
  }
  throw CodecError("unknown message type " + std::to_string(type), 1);
}

Bytes AuthPayload::encode() const {
  ByteWriter w;
  w.var16(device_signature);
  if (tpm_quote) {
    w.u8(1);
    w.var32(tpm_quote->encode());
  } else {
    w.u8(0);
  }
  return std::move(w).take();
}

AuthPayload AuthPayload::decode(BytesView data) {
  ByteReader r(data);
  AuthPayload p;
  auto sig = r.var16();
  p.device_signature.assign(sig.begin(), sig.end());
  const auto at = r.offset();
  const auto has_quote = r.u8();
  if (has_quote > 1) throw CodecError("quote-present flag must be 0 or 1", at);
  if (has_quote == 1) p.tpm_quote = tpm::Quote::decode(r.var32());
  r.expect_end();
  return p;
}

}  // namespace stcp::proto
