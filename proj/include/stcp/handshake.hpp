#pragma once

// Initiator (AD1) and responder (AD2) sides of the three-message trusted
// channel handshake:
//
//   1. AD1 -> AD2 : AD1 | AD2 | N1 | g^r1 | VR | cookie
//   2. AD2 -> AD1 : AD2 | AD1 | N2 | g^r2 | [Sign_AD2(AD2-Data) | Quote_AD2]^{Ke}_{Ka} | VR | cookie
//   3. AD1 -> AD2 : [Sign_AD1(AD1-Data) | Quote_AD1]^{Ke}_{Ka} | cookie
//
// Each step is a free function over a HandshakeState so the same code runs
// under the in-memory harness, the TCP driver, and the Python bindings.

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stcp/crypto.hpp"
#include "stcp/messages.hpp"
#include "stcp/tpm.hpp"

namespace stcp::proto {

/// Everything a device is provisioned with about one partner before any
/// handshake runs.
struct PeerRecord {
  DeviceIdentity identity;
  crypto::VerificationKey device_key;
  crypto::VerificationKey aik;
  std::vector<tpm::PcrValue> golden;
  /// Registers the partner must quote. Every index needs a golden entry.
  std::vector<int> attestation_indices;

  /// Golden entries restricted to attestation_indices.
  std::vector<tpm::PcrValue> required_golden() const;
};

class PeerRegistry {
 public:
  /// Throws ConfigError on a duplicate identity or an attestation index
  /// without a golden value.
  void add(PeerRecord record);
  const PeerRecord* find(const DeviceIdentity& id) const;
  std::size_t size() const { return peers_.size(); }
  auto begin() const { return peers_.begin(); }
  auto end() const { return peers_.end(); }

 private:
  std::map<DeviceIdentity, PeerRecord> peers_;
};

struct Policy {
  /// Ask the peer for a TPM quote and refuse to establish without one.
  bool require_attestation = true;
};

using QuoteSource = std::function<tpm::Quote(std::span<const int> indices, BytesView qualifying_data)>;

struct Device {
  DeviceIdentity identity;
  /// Operator-facing name. Never transmitted.
  std::string label;
  crypto::SignatureKeyPair signing_key;
  tpm::PcrBank tpm;
  std::vector<int> attestation_indices{0, 1, 2, 3, 4, 5, 8};
  PeerRegistry registry;
  crypto::DhGroup group;
  Policy policy;
  /// Overrides tpm.quote(). Only the adversary harness sets this.
  QuoteSource quote_source;

  tpm::Quote make_quote(BytesView qualifying_data) const;
};

enum class Role { Initiator, Responder };
enum class Phase { Start, AwaitMsg2, AwaitMsg3, Established, Aborted };

std::string_view role_name(Role r);
std::string_view phase_name(Phase p);

/// Time spent in each cryptographic step on this side of the handshake.
struct PhaseTimings {
  std::chrono::nanoseconds dh{0};
  std::chrono::nanoseconds sign{0};
  std::chrono::nanoseconds verify{0};
  std::chrono::nanoseconds seal{0};

  PhaseTimings& operator+=(const PhaseTimings& o);
};

struct HandshakeState {
  Role role = Role::Initiator;
  Phase phase = Phase::Start;
  DeviceIdentity self_id;
  DeviceIdentity peer_id;

  /// Ephemeral secret. Erased as soon as the session is established.
  std::optional<crypto::DhKeyPair> own_dh;
  Bytes own_exponential;
  crypto::Nonce own_nonce;
  Bytes peer_exponential;
  std::optional<crypto::Nonce> peer_nonce;
  SessionCookie cookie;
  bool peer_requested_validation = false;

  /// Present only once both exponentials are known.
  std::optional<crypto::SessionKeys> keys;
  std::optional<tpm::TrustVerdict> peer_verdict;
  std::optional<AbortReason> abort_reason;
  /// Reason carried by the peer's Abort frame, when that is what ended us.
  std::optional<AbortReason> peer_abort_reason;
  PhaseTimings timings;

  bool terminal() const { return phase == Phase::Established || phase == Phase::Aborted; }
  /// Moves to Aborted, drops every secret, and returns the frame to send.
  Abort abort(AbortReason reason);
  /// Phase transitions only move forward; Aborted is terminal.
  void advance(Phase next);
};

/// H(g^r1 || N1 || AD1 || AD2).
SessionCookie compute_cookie(BytesView dh_ad1, const crypto::Nonce& n_ad1, const DeviceIdentity& ad1,
                             const DeviceIdentity& ad2);
/// AD2-Data = H(AD2 || AD1 || g^r1 || g^r2 || N1 || N2).
Digest responder_transcript(const DeviceIdentity& ad2, const DeviceIdentity& ad1, BytesView dh_ad1, BytesView dh_ad2,
                            const crypto::Nonce& n_ad1, const crypto::Nonce& n_ad2);
/// AD1-Data = H(AD1 || AD2 || g^r2 || g^r1 || N2 || N1).
Digest initiator_transcript(const DeviceIdentity& ad1, const DeviceIdentity& ad2, BytesView dh_ad2, BytesView dh_ad1,
                            const crypto::Nonce& n_ad2, const crypto::Nonce& n_ad1);

/// Starts a session toward `peer`. Throws ProvisioningError when the peer is
/// not in the registry and StateError when `state` is not fresh.
Msg1 initiate(HandshakeState& state, const Device& self, const DeviceIdentity& peer, crypto::RandomSource& rng);

struct Response {
  HandshakeState state;
  /// Msg2 on success, Abort on a detected violation, empty for a silent drop
  /// (unknown or misaddressed initiator).
  std::optional<ProtocolMessage> reply;
};

Response respond(const Msg1& msg1, const Device& self, crypto::RandomSource& rng);

/// Returns Msg3 on success (state becomes Established), an Abort on failure,
/// or nothing when the message does not belong to this session.
std::optional<ProtocolMessage> process_msg2(HandshakeState& state, const Msg2& msg2, const Device& self,
                                            crypto::RandomSource& rng);

/// Returns an Abort on failure and nothing otherwise; the state is left
/// untouched when the message carries another session's cookie.
std::optional<ProtocolMessage> process_msg3(HandshakeState& state, const Msg3& msg3, const Device& self);

}  // namespace stcp::proto
