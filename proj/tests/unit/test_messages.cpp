#include "doctest.h"

#include "stcp/error.hpp"
#include "stcp/messages.hpp"
#include "support.hpp"

using namespace stcp;
using namespace stcp::proto;

namespace {

Msg1 sample_msg1(oracle::Rng& rng, std::size_t width = 128) {
  Msg1 m;
  auto fill = [&](auto& arr) {
    const auto b = rng.bytes(arr.size());
    std::copy(b.begin(), b.end(), arr.begin());
  };
  fill(m.ad1_id.bytes);
  fill(m.ad2_id.bytes);
  fill(m.n_ad1.bytes);
  m.dh_ad1 = testing::to_bytes(rng.bytes(width));
  m.validation_request = rng.below(2) == 1;
  fill(m.cookie.digest);
  return m;
}

crypto::SealedEnvelope sample_envelope(oracle::Rng& rng) {
  crypto::SealedEnvelope e;
  const auto iv = rng.bytes(16);
  std::copy(iv.begin(), iv.end(), e.iv.begin());
  e.ciphertext = testing::to_bytes(rng.bytes(16 * (1 + rng.below(6))));
  const auto tag = rng.bytes(32);
  std::copy(tag.begin(), tag.end(), e.tag.begin());
  return e;
}

}  // namespace

TEST_SUITE("messages") {

TEST_CASE("abort frame layout") {
  Abort a{AbortReason::SealIntegrity, {}};
  a.cookie.digest.fill(0xab);
  const auto wire = encode(a);
  REQUIRE(wire.size() == 39);
  CHECK(to_hex(BytesView(wire).first(7)) == "017f0000002103");
  CHECK(std::get<Abort>(decode(wire)) == a);
}

TEST_CASE("msg1 layout and size") {
  oracle::Rng rng(1);
  const auto m = sample_msg1(rng);
  const auto wire = encode(m);
  CHECK(wire.size() == kFrameHeaderSize + 16 + 16 + 32 + 2 + 128 + 1 + 32);
  CHECK(wire[0] == kWireVersion);
  CHECK(wire[1] == 0x01);
  CHECK(BytesView(wire).subspan(6, 16).size() == 16);
  CHECK(std::equal(m.ad1_id.bytes.begin(), m.ad1_id.bytes.end(), wire.begin() + 6));
  CHECK(std::get<Msg1>(decode(wire)) == m);
}

TEST_CASE("round trips for every message type") {
  oracle::Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto m1 = sample_msg1(rng, 1 + rng.below(256));
    CHECK(std::get<Msg1>(decode(encode(m1))) == m1);

    Msg2 m2;
    m2.ad1_id = m1.ad2_id;
    m2.ad2_id = m1.ad1_id;
    m2.n_ad2 = m1.n_ad1;
    m2.dh_ad2 = m1.dh_ad1;
    m2.sealed_auth = sample_envelope(rng);
    m2.validation_request = i % 2 == 0;
    m2.cookie = m1.cookie;
    const ProtocolMessage pm2 = m2;
    CHECK(type_of(pm2) == MessageType::Msg2);
    CHECK(cookie_of(pm2) == m1.cookie);
    CHECK(std::get<Msg2>(decode(encode(m2))) == m2);

    Msg3 m3{sample_envelope(rng), m1.cookie};
    CHECK(std::get<Msg3>(decode(encode(m3))) == m3);
  }
}

TEST_CASE("decode rejects malformed frames") {
  oracle::Rng rng(3);
  const auto good = encode(sample_msg1(rng));

  auto bad = good;
  bad[0] = 2;
  CHECK_THROWS_AS(decode(bad), CodecError);
  bad = good;
  bad[1] = 0x04;
  CHECK_THROWS_AS(decode(bad), CodecError);
  bad = good;
  bad.push_back(0);
  CHECK_THROWS_AS(decode(bad), CodecError);
  CHECK_THROWS_AS(decode(BytesView(good).first(good.size() - 1)), CodecError);
  CHECK_THROWS_AS(decode(BytesView(good).first(3)), CodecError);
  CHECK_THROWS_AS(decode({}), CodecError);

  // validation-request flag sits right before the 32-byte cookie
  bad = good;
  bad[bad.size() - 33] = 2;
  CHECK_THROWS_AS(decode(bad), CodecError);

  // exponential length zero, with the frame length adjusted to match
  Msg1 m = sample_msg1(rng);
  m.dh_ad1 = {};
  CHECK_THROWS_AS(encode(m), CodecError);
  m.dh_ad1 = Bytes(kMaxExponentBytes + 1, 1);
  CHECK_THROWS_AS(encode(m), CodecError);

  Abort a{AbortReason::Timeout, {}};
  auto ab = encode(a);
  ab[6] = 0;
  CHECK_THROWS_AS(decode(ab), CodecError);
  ab[6] = 15;
  CHECK_THROWS_AS(decode(ab), CodecError);
}

TEST_CASE("codec errors carry an offset") {
  oracle::Rng rng(4);
  auto wire = encode(sample_msg1(rng));
  wire[wire.size() - 33] = 7;
  try {
    decode(wire);
    FAIL("expected a codec error");
  } catch (const CodecError& e) {
    CHECK(e.offset() == wire.size() - 33);
  }
}

TEST_CASE("auth payload") {
  AuthPayload p;
  p.device_signature = Bytes(64, 3);
  CHECK(AuthPayload::decode(p.encode()) == p);
  tpm::PcrBank bank(crypto::SignatureKeyPair::ed25519_from_seed(Bytes(32, 1)));
  p.tpm_quote = bank.quote(std::vector<int>{0, 8}, as_view("q"));
  CHECK(AuthPayload::decode(p.encode()) == p);
  auto wire = p.encode();
  wire[2 + 64] = 2;
  CHECK_THROWS_AS(AuthPayload::decode(wire), CodecError);
  wire = p.encode();
  wire.push_back(0);
  CHECK_THROWS_AS(AuthPayload::decode(wire), CodecError);
}

TEST_CASE("abort reason names") {
  for (int code = 1; code <= 14; ++code) {
    const auto r = static_cast<AbortReason>(code);
    CHECK(parse_abort_reason(abort_reason_name(r)) == r);
  }
  CHECK(abort_reason_name(AbortReason::AttestationStateMismatch) == "AttestationStateMismatch");
  CHECK_FALSE(parse_abort_reason("Nope").has_value());
}

TEST_CASE("device identities") {
  const auto id = DeviceIdentity::from_hex("00112233445566778899aabbccddeeff");
  CHECK(id.hex() == "00112233445566778899aabbccddeeff");
  CHECK_THROWS(DeviceIdentity::from_hex("0011"));
  crypto::DeterministicRandom rng(1);
  CHECK(DeviceIdentity::random(rng) != DeviceIdentity::random(rng));
}

}  // TEST_SUITE
