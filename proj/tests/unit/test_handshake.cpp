#include "doctest.h"

#include "stcp/error.hpp"
#include "stcp/handshake.hpp"
#include "support.hpp"

using namespace stcp;
using namespace stcp::proto;

namespace {

struct Run {
  HandshakeState a;
  HandshakeState b;
  Msg1 m1;
  std::optional<ProtocolMessage> m2;
  std::optional<ProtocolMessage> m3;
};

Run full_run(const std::vector<Device>& d, crypto::RandomSource& rng) {
  Run r;
  r.m1 = initiate(r.a, d[0], d[1].identity, rng);
  auto resp = respond(r.m1, d[1], rng);
  r.b = resp.state;
  r.m2 = resp.reply;
  r.m3 = process_msg2(r.a, std::get<Msg2>(*r.m2), d[0], rng);
  if (r.m3 && std::holds_alternative<Msg3>(*r.m3)) {
    auto reply = process_msg3(r.b, std::get<Msg3>(*r.m3), d[1]);
    CHECK_FALSE(reply.has_value());
  }
  return r;
}

}  // namespace

TEST_SUITE("handshake") {

TEST_CASE("honest run establishes identical keys") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(1);
  auto r = full_run(d, rng);
  REQUIRE(r.a.phase == Phase::Established);
  REQUIRE(r.b.phase == Phase::Established);
  CHECK(r.a.keys->k_e == r.b.keys->k_e);
  CHECK(r.a.keys->k_a == r.b.keys->k_a);
  CHECK(r.a.cookie == r.b.cookie);
  CHECK(r.a.peer_verdict == tpm::TrustVerdict::Trusted);
  CHECK(r.b.peer_verdict == tpm::TrustVerdict::Trusted);
  CHECK(r.a.role == Role::Initiator);
  CHECK(r.b.role == Role::Responder);
}

TEST_CASE("ephemeral secrets are erased once established") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(2);
  auto r = full_run(d, rng);
  CHECK_FALSE(r.a.own_dh.has_value());
  CHECK_FALSE(r.b.own_dh.has_value());
  CHECK(r.a.keys->k_dh.empty());
  CHECK(r.b.keys->k_dh.empty());
}

TEST_CASE("cookie and transcripts are hashes of the listed fields") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(3);
  auto r = full_run(d, rng);
  const auto& m2 = std::get<Msg2>(*r.m2);
  auto cat = [](std::initializer_list<BytesView> parts) {
    oracle::Bytes out;
    for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };
  CHECK(r.m1.cookie.digest == oracle::sha256(cat({r.m1.dh_ad1, r.m1.n_ad1.view(), r.m1.ad1_id.view(), r.m1.ad2_id.view()})));
  CHECK(responder_transcript(m2.ad2_id, m2.ad1_id, r.m1.dh_ad1, m2.dh_ad2, r.m1.n_ad1, m2.n_ad2) ==
        oracle::sha256(cat({m2.ad2_id.view(), m2.ad1_id.view(), r.m1.dh_ad1, m2.dh_ad2, r.m1.n_ad1.view(), m2.n_ad2.view()})));
  CHECK(initiator_transcript(r.m1.ad1_id, r.m1.ad2_id, m2.dh_ad2, r.m1.dh_ad1, m2.n_ad2, r.m1.n_ad1) ==
        oracle::sha256(cat({r.m1.ad1_id.view(), r.m1.ad2_id.view(), m2.dh_ad2, r.m1.dh_ad1, m2.n_ad2.view(), r.m1.n_ad1.view()})));
}

TEST_CASE("initiate refuses unknown peers and reused state") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(4);
  HandshakeState s;
  CHECK_THROWS_AS(initiate(s, d[0], DeviceIdentity{}, rng), ProvisioningError);
  HandshakeState used;
  initiate(used, d[0], d[1].identity, rng);
  CHECK_THROWS_AS(initiate(used, d[0], d[1].identity, rng), StateError);
}

TEST_CASE("responder checks on Msg1") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(5);
  HandshakeState s;
  const auto m1 = initiate(s, d[0], d[1].identity, rng);

  auto bad = m1;
  bad.n_ad1.bytes[0] ^= 1;
  auto r = respond(bad, d[1], rng);
  CHECK(r.state.phase == Phase::Aborted);
  REQUIRE(r.reply);
  CHECK(std::get<Abort>(*r.reply).reason == AbortReason::CookieMismatch);

  bad = m1;
  bad.dh_ad1 = crypto::BigInt(1).to_bytes(d[1].group.modulus_bytes());
  bad.cookie = compute_cookie(bad.dh_ad1, bad.n_ad1, bad.ad1_id, bad.ad2_id);
  r = respond(bad, d[1], rng);
  REQUIRE(r.reply);
  CHECK(std::get<Abort>(*r.reply).reason == AbortReason::DegenerateExponential);

  bad = m1;
  bad.dh_ad1.pop_back();  // wrong width
  bad.cookie = compute_cookie(bad.dh_ad1, bad.n_ad1, bad.ad1_id, bad.ad2_id);
  r = respond(bad, d[1], rng);
  REQUIRE(r.reply);
  CHECK(std::get<Abort>(*r.reply).reason == AbortReason::DegenerateExponential);

  // Unknown initiator or a Msg1 addressed elsewhere: dropped without a reply.
  bad = m1;
  bad.ad1_id.bytes[0] ^= 1;
  r = respond(bad, d[1], rng);
  CHECK(r.state.phase == Phase::Aborted);
  CHECK_FALSE(r.reply);
  r = respond(m1, d[0], rng);
  CHECK_FALSE(r.reply);
}

TEST_CASE("initiator checks on Msg2") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(6);

  SUBCASE("foreign cookie is ignored") {
    HandshakeState a;
    const auto m1 = initiate(a, d[0], d[1].identity, rng);
    auto m2 = std::get<Msg2>(*respond(m1, d[1], rng).reply);
    m2.cookie.digest[0] ^= 1;
    CHECK_FALSE(process_msg2(a, m2, d[0], rng).has_value());
    CHECK(a.phase == Phase::AwaitMsg2);
  }
  SUBCASE("tampered envelope") {
    HandshakeState a;
    const auto m1 = initiate(a, d[0], d[1].identity, rng);
    auto m2 = std::get<Msg2>(*respond(m1, d[1], rng).reply);
    m2.sealed_auth.ciphertext[0] ^= 1;
    auto out = process_msg2(a, m2, d[0], rng);
    REQUIRE(out);
    CHECK(std::get<Abort>(*out).reason == AbortReason::SealIntegrity);
    CHECK(a.phase == Phase::Aborted);
    CHECK_FALSE(a.keys.has_value());
    CHECK_FALSE(a.own_dh.has_value());
  }
  SUBCASE("substituted exponential breaks the signature or the seal") {
    HandshakeState a;
    const auto m1 = initiate(a, d[0], d[1].identity, rng);
    auto m2 = std::get<Msg2>(*respond(m1, d[1], rng).reply);
    m2.dh_ad2 = crypto::generate_dh_keypair(d[0].group, rng).public_exponential.to_bytes(d[0].group.modulus_bytes());
    auto out = process_msg2(a, m2, d[0], rng);
    REQUIRE(out);
    CHECK(std::get<Abort>(*out).reason == AbortReason::SealIntegrity);
  }
  SUBCASE("degenerate responder exponential") {
    HandshakeState a;
    const auto m1 = initiate(a, d[0], d[1].identity, rng);
    auto m2 = std::get<Msg2>(*respond(m1, d[1], rng).reply);
    m2.dh_ad2 = Bytes(d[0].group.modulus_bytes(), 0);
    auto out = process_msg2(a, m2, d[0], rng);
    REQUIRE(out);
    CHECK(std::get<Abort>(*out).reason == AbortReason::DegenerateExponential);
  }
  SUBCASE("Msg2 arriving twice") {
    auto r = full_run(d, rng);
    CHECK_FALSE(process_msg2(r.a, std::get<Msg2>(*r.m2), d[0], rng).has_value());
    CHECK(r.a.phase == Phase::Established);
  }
}

TEST_CASE("responder checks on Msg3") {
  const auto d = testing::device_pair();
  crypto::DeterministicRandom rng(7);
  HandshakeState a;
  const auto m1 = initiate(a, d[0], d[1].identity, rng);
  auto resp = respond(m1, d[1], rng);
  auto m3 = std::get<Msg3>(*process_msg2(a, std::get<Msg2>(*resp.reply), d[0], rng));

  auto other = m3;
  other.cookie.digest[5] ^= 1;
  auto b = resp.state;
  CHECK_FALSE(process_msg3(b, other, d[1]).has_value());
  CHECK(b.phase == Phase::AwaitMsg3);

  auto t = m3;
  t.sealed_auth.tag[0] ^= 1;
  auto out = process_msg3(b, t, d[1]);
  REQUIRE(out);
  CHECK(std::get<Abort>(*out).reason == AbortReason::SealIntegrity);
}

TEST_CASE("attestation failures map to abort reasons") {
  SUBCASE("modified boot image") {
    auto d = testing::device_pair();
    d[1].tpm.reset();
    auto m = stcp::harness::default_manifest("AD2");
    m.components.back().image = Bytes{1, 2, 3};
    d[1].tpm.boot(m);
    crypto::DeterministicRandom rng(8);
    auto r = full_run(d, rng);
    CHECK(r.a.phase == Phase::Aborted);
    CHECK(r.a.abort_reason == AbortReason::AttestationStateMismatch);
    CHECK(r.a.peer_verdict == tpm::TrustVerdict::StateMismatch);
  }
  SUBCASE("quote signed by another AIK") {
    auto d = testing::device_pair();
    auto fake = crypto::SignatureKeyPair::ed25519_from_seed(Bytes(32, 0xee));
    d[1].quote_source = [&, fake](std::span<const int> idx, BytesView q) {
      return tpm::make_quote(tpm::golden_values(stcp::harness::default_manifest("AD2"), idx), q, fake);
    };
    crypto::DeterministicRandom rng(9);
    auto r = full_run(d, rng);
    CHECK(r.a.abort_reason == AbortReason::AttestationSignatureInvalid);
  }
  SUBCASE("replayed quote") {
    auto d = testing::device_pair();
    const auto old = d[1].tpm.quote(d[1].attestation_indices, as_view("yesterday"));
    d[1].quote_source = [old](std::span<const int>, BytesView) { return old; };
    crypto::DeterministicRandom rng(10);
    auto r = full_run(d, rng);
    CHECK(r.a.abort_reason == AbortReason::AttestationStale);
  }
  SUBCASE("no quote when one was required") {
    auto d = testing::device_pair();
    crypto::DeterministicRandom rng(11);
    HandshakeState a;
    auto m1 = initiate(a, d[0], d[1].identity, rng);
    m1.validation_request = false;  // a stripped VR flag leaves the quote out
    auto resp = respond(m1, d[1], rng);
    auto out = process_msg2(a, std::get<Msg2>(*resp.reply), d[0], rng);
    REQUIRE(out);
    CHECK(std::get<Abort>(*out).reason == AbortReason::AttestationMissing);
  }
  SUBCASE("signature by the wrong device key") {
    auto d = testing::device_pair();
    d[1].signing_key = crypto::SignatureKeyPair::ed25519_from_seed(Bytes(32, 0x42));
    crypto::DeterministicRandom rng(12);
    auto r = full_run(d, rng);
    CHECK(r.a.abort_reason == AbortReason::PeerSignatureInvalid);
  }
}

TEST_CASE("attestation can be switched off by policy on both sides") {
  auto d = testing::device_pair();
  d[0].policy.require_attestation = false;
  d[1].policy.require_attestation = false;
  crypto::DeterministicRandom rng(13);
  auto r = full_run(d, rng);
  CHECK(r.a.phase == Phase::Established);
  CHECK(r.b.phase == Phase::Established);
  CHECK_FALSE(r.a.peer_verdict.has_value());
}

TEST_CASE("phase transitions are monotonic") {
  HandshakeState s;
  s.advance(Phase::AwaitMsg2);
  CHECK_THROWS_AS(s.advance(Phase::Start), StateError);
  s.abort(AbortReason::Timeout);
  CHECK(s.terminal());
  CHECK_THROWS_AS(s.advance(Phase::Established), StateError);
}

TEST_CASE("registry rules") {
  auto d = testing::device_pair();
  PeerRegistry reg;
  const auto* ad2 = d[0].registry.find(d[1].identity);
  REQUIRE(ad2);
  reg.add(*ad2);
  CHECK_THROWS_AS(reg.add(*ad2), ConfigError);
  auto missing = *ad2;
  missing.identity.bytes[0] ^= 1;
  missing.attestation_indices.push_back(17);
  CHECK_THROWS_AS(reg.add(missing), ConfigError);
  CHECK(ad2->required_golden().size() == ad2->attestation_indices.size());
}

}  // TEST_SUITE
