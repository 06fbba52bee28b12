#include "stcp/handshake.hpp"

#include <algorithm>

#include "stcp/error.hpp"

namespace stcp::proto {

namespace {

template <typename F>
auto timed(std::chrono::nanoseconds& acc, F&& f) {
  const auto start = std::chrono::steady_clock::now();
  struct Add {
    std::chrono::nanoseconds& acc;
    std::chrono::steady_clock::time_point start;
    ~Add() { acc += std::chrono::steady_clock::now() - start; }
  } add{acc, start};
  return f();
}

bool exponential_ok(const crypto::DhGroup& group, BytesView wire) {
  if (wire.size() != group.modulus_bytes()) return false;
  return crypto::is_valid_public(group, crypto::BigInt::from_bytes(wire));
}

AbortReason verdict_reason(tpm::TrustVerdict v) {
  switch (v) {
    case tpm::TrustVerdict::SignatureInvalid: return AbortReason::AttestationSignatureInvalid;
    case tpm::TrustVerdict::FreshnessFailure: return AbortReason::AttestationStale;
    default: return AbortReason::AttestationStateMismatch;
  }
}

/// Opens an authentication envelope and checks the device signature and (if
/// we asked for it) the quote. Returns the abort reason on failure.
std::optional<AbortReason> check_auth(HandshakeState& state, const crypto::SealedEnvelope& envelope,
                                      const Device& self, const Digest& expected_signed,
                                      BytesView expected_qualifying) {
  Bytes plain;
  try {
    plain = timed(state.timings.seal, [&] { return crypto::open(envelope, *state.keys); });
  } catch (const IntegrityError&) {
    return AbortReason::SealIntegrity;
  }
  AuthPayload payload;
  try {
    payload = AuthPayload::decode(plain);
  } catch (const CodecError&) {
    return AbortReason::MalformedMessage;
  }
  const PeerRecord* peer = self.registry.find(state.peer_id);
  if (!peer) return AbortReason::UnknownPeer;

  const bool sig_ok =
      timed(state.timings.verify, [&] { return crypto::verify(expected_signed, payload.device_signature, peer->device_key); });
  if (!sig_ok) return AbortReason::PeerSignatureInvalid;

  if (self.policy.require_attestation) {
    if (!payload.tpm_quote) return AbortReason::AttestationMissing;
    const auto golden = peer->required_golden();
    const auto verdict = timed(state.timings.verify, [&] {
      return tpm::verify_quote(*payload.tpm_quote, peer->aik, expected_qualifying, golden);
    });
    state.peer_verdict = verdict;
    if (verdict != tpm::TrustVerdict::Trusted) return verdict_reason(verdict);
  }
  return std::nullopt;
}

crypto::SealedEnvelope build_auth(HandshakeState& state, const Device& self, const Digest& transcript,
                                  bool include_quote, BytesView qualifying, crypto::RandomSource& rng) {
  AuthPayload payload;
  payload.device_signature = timed(state.timings.sign, [&] { return crypto::sign(transcript, self.signing_key); });
  if (include_quote) {
    payload.tpm_quote = timed(state.timings.sign, [&] { return self.make_quote(qualifying); });
  }
  const Bytes plain = payload.encode();
  return timed(state.timings.seal, [&] { return crypto::seal(plain, *state.keys, rng); });
}

void finish_established(HandshakeState& state) {
  state.advance(Phase::Established);
  state.own_dh.reset();
  state.keys->forget_shared_secret();
}

}  // namespace

std::vector<tpm::PcrValue> PeerRecord::required_golden() const {
  std::vector<tpm::PcrValue> out;
  for (int i : attestation_indices) {
    auto it = std::find_if(golden.begin(), golden.end(), [&](const tpm::PcrValue& v) { return v.index == i; });
    if (it != golden.end()) out.push_back(*it);
  }
  return out;
}

void PeerRegistry::add(PeerRecord record) {
  for (int i : record.attestation_indices) {
    auto it = std::find_if(record.golden.begin(), record.golden.end(),
                           [&](const tpm::PcrValue& v) { return v.index == i; });
    if (it == record.golden.end()) {
      throw ConfigError("peer " + record.identity.hex() + ": no golden value for PCR " + std::to_string(i));
    }
  }
  const auto id = record.identity;
  if (!peers_.emplace(id, std::move(record)).second) {
    throw ConfigError("duplicate peer identity " + id.hex());
  }
}

const PeerRecord* PeerRegistry::find(const DeviceIdentity& id) const {
  auto it = peers_.find(id);
  return it == peers_.end() ? nullptr : &it->second;
}

tpm::Quote Device::make_quote(BytesView qualifying_data) const {
  if (quote_source) return quote_source(attestation_indices, qualifying_data);
  return tpm.quote(attestation_indices, qualifying_data);
}

std::string_view role_name(Role r) { return r == Role::Initiator ? "initiator" : "responder"; }

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Start: return "Start";
    case Phase::AwaitMsg2: return "AwaitMsg2";
    case Phase::AwaitMsg3: return "AwaitMsg3";
    case Phase::Established: return "Established";
    case Phase::Aborted: return "Aborted";
  }
  return "Unknown";
}

PhaseTimings& PhaseTimings::operator+=(const PhaseTimings& o) {
  dh += o.dh;
  sign += o.sign;
  verify += o.verify;
  seal += o.seal;
  return *this;
}

Abort HandshakeState::abort(AbortReason reason) {
  if (phase != Phase::Aborted) {
    phase = Phase::Aborted;
    abort_reason = reason;
  }
  own_dh.reset();
  keys.reset();
  return Abort{reason, cookie};
}

void HandshakeState::advance(Phase next) {
  if (phase == Phase::Aborted || static_cast<int>(next) <= static_cast<int>(phase)) {
    throw StateError(std::string("illegal handshake transition ") + std::string(phase_name(phase)) + " -> " +
                     std::string(phase_name(next)));
  }
  phase = next;
}

SessionCookie compute_cookie(BytesView dh_ad1, const crypto::Nonce& n_ad1, const DeviceIdentity& ad1,
                             const DeviceIdentity& ad2) {
  return SessionCookie{crypto::hash(concat(dh_ad1, n_ad1.view(), ad1.view(), ad2.view()))};
}

Digest responder_transcript(const DeviceIdentity& ad2, const DeviceIdentity& ad1, BytesView dh_ad1, BytesView dh_ad2,
                            const crypto::Nonce& n_ad1, const crypto::Nonce& n_ad2) {
  return crypto::hash(concat(ad2.view(), ad1.view(), dh_ad1, dh_ad2, n_ad1.view(), n_ad2.view()));
}

Digest initiator_transcript(const DeviceIdentity& ad1, const DeviceIdentity& ad2, BytesView dh_ad2, BytesView dh_ad1,
                            const crypto::Nonce& n_ad2, const crypto::Nonce& n_ad1) {
  return crypto::hash(concat(ad1.view(), ad2.view(), dh_ad2, dh_ad1, n_ad2.view(), n_ad1.view()));
}

Msg1 initiate(HandshakeState& state, const Device& self, const DeviceIdentity& peer, crypto::RandomSource& rng) {
  if (state.phase != Phase::Start) throw StateError("initiate requires a fresh handshake state");
  if (!self.registry.find(peer)) throw ProvisioningError("peer " + peer.hex() + " is not provisioned");

  state.role = Role::Initiator;
  state.self_id = self.identity;
  state.peer_id = peer;
  state.own_nonce = crypto::Nonce::random(rng);
  state.own_dh = timed(state.timings.dh, [&] { return crypto::generate_dh_keypair(self.group, rng); });
  state.own_exponential = state.own_dh->public_exponential.to_bytes(self.group.modulus_bytes());
  state.cookie = compute_cookie(state.own_exponential, state.own_nonce, self.identity, peer);
  state.advance(Phase::AwaitMsg2);

  return Msg1{self.identity, peer, state.own_nonce, state.own_exponential, self.policy.require_attestation,
              state.cookie};
}

Response respond(const Msg1& msg1, const Device& self, crypto::RandomSource& rng) {
  Response out;
  auto& state = out.state;
  state.role = Role::Responder;
  state.self_id = self.identity;
  state.peer_id = msg1.ad1_id;
  state.cookie = msg1.cookie;

  if (msg1.ad2_id != self.identity || !self.registry.find(msg1.ad1_id)) {
    state.abort(AbortReason::UnknownPeer);
    return out;
  }
  if (compute_cookie(msg1.dh_ad1, msg1.n_ad1, msg1.ad1_id, msg1.ad2_id) != msg1.cookie) {
    out.reply = state.abort(AbortReason::CookieMismatch);
    return out;
  }
  if (!exponential_ok(self.group, msg1.dh_ad1)) {
    out.reply = state.abort(AbortReason::DegenerateExponential);
    return out;
  }

  state.peer_nonce = msg1.n_ad1;
  state.peer_exponential = msg1.dh_ad1;
  state.peer_requested_validation = msg1.validation_request;
  state.own_nonce = crypto::Nonce::random(rng);

  timed(state.timings.dh, [&] {
    auto pair = crypto::generate_dh_keypair(self.group, rng);
    state.own_exponential = pair.public_exponential.to_bytes(self.group.modulus_bytes());
    auto k_dh = crypto::compute_shared_secret(pair, crypto::BigInt::from_bytes(msg1.dh_ad1), self.group);
    state.keys = crypto::derive_session_keys(k_dh, msg1.n_ad1, state.own_nonce);
    return 0;
  });

  const auto transcript =
      responder_transcript(self.identity, msg1.ad1_id, msg1.dh_ad1, state.own_exponential, msg1.n_ad1, state.own_nonce);
  const auto qualifying = concat(msg1.n_ad1.view(), state.own_nonce.view());
  auto sealed = build_auth(state, self, transcript, msg1.validation_request, qualifying, rng);

  state.advance(Phase::AwaitMsg3);
  out.reply = Msg2{self.identity,    msg1.ad1_id, state.own_nonce, state.own_exponential, std::move(sealed),
                   self.policy.require_attestation, msg1.cookie};
  return out;
}

std::optional<ProtocolMessage> process_msg2(HandshakeState& state, const Msg2& msg2, const Device& self,
                                            crypto::RandomSource& rng) {
  if (state.role != Role::Initiator || state.phase != Phase::AwaitMsg2) return std::nullopt;
  if (msg2.ad1_id != state.self_id || msg2.ad2_id != state.peer_id) return std::nullopt;
  // A different cookie means a different session, not a broken one.
  if (msg2.cookie != state.cookie) return std::nullopt;

  if (!exponential_ok(self.group, msg2.dh_ad2)) return state.abort(AbortReason::DegenerateExponential);

  state.peer_nonce = msg2.n_ad2;
  state.peer_exponential = msg2.dh_ad2;
  state.peer_requested_validation = msg2.validation_request;
  timed(state.timings.dh, [&] {
    auto k_dh = crypto::compute_shared_secret(*state.own_dh, crypto::BigInt::from_bytes(msg2.dh_ad2), self.group);
    state.keys = crypto::derive_session_keys(k_dh, state.own_nonce, msg2.n_ad2);
    return 0;
  });

  const auto expected = responder_transcript(state.peer_id, state.self_id, state.own_exponential, msg2.dh_ad2,
                                              state.own_nonce, msg2.n_ad2);
  const auto expected_qualifying = concat(state.own_nonce.view(), msg2.n_ad2.view());
  if (auto failure = check_auth(state, msg2.sealed_auth, self, expected, expected_qualifying)) {
    return state.abort(*failure);
  }

  const auto transcript = initiator_transcript(state.self_id, state.peer_id, msg2.dh_ad2, state.own_exponential,
                                               msg2.n_ad2, state.own_nonce);
  const auto qualifying = concat(msg2.n_ad2.view(), state.own_nonce.view());
  auto sealed = build_auth(state, self, transcript, msg2.validation_request, qualifying, rng);

  finish_established(state);
  return Msg3{std::move(sealed), state.cookie};
}

std::optional<ProtocolMessage> process_msg3(HandshakeState& state, const Msg3& msg3, const Device& self) {
  if (state.role != Role::Responder || state.phase != Phase::AwaitMsg3) return std::nullopt;
  if (msg3.cookie != state.cookie) return std::nullopt;

  const auto expected = initiator_transcript(state.peer_id, state.self_id, state.own_exponential,
                                             state.peer_exponential, state.own_nonce, *state.peer_nonce);
  const auto expected_qualifying = concat(state.own_nonce.view(), state.peer_nonce->view());
  if (auto failure = check_auth(state, msg3.sealed_auth, self, expected, expected_qualifying)) {
    return state.abort(*failure);
  }
  finish_established(state);
  return std::nullopt;
}

}  // namespace stcp::proto
