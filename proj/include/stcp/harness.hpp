#pragma once

// Deterministic in-memory network with a scriptable adversary. The adversary
// sees, drops, rewrites, replays, and injects frames, and can stand up rogue
// endpoints; it never touches a node's internal state. Runs on a virtual
// clock, so a (scenario, seed) pair always yields the same frame trace.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stcp/config.hpp"
#include "stcp/handshake.hpp"
#include "stcp/node.hpp"

namespace stcp::harness {

using proto::TimeMs;

struct NodeSpec {
  std::string name;
  /// What the device actually boots.
  tpm::BootManifest manifest;
  /// What its peers were provisioned to expect. Defaults to `manifest`.
  std::optional<tpm::BootManifest> provisioned;
  std::vector<int> attestation_indices{0, 1, 2, 3, 4, 5, 8};
  bool require_attestation = true;
  proto::NodeOptions options;
};

/// A plausible avionics boot chain whose application image is tied to `name`.
tpm::BootManifest default_manifest(std::string_view name);

/// Provisioned devices with mutually consistent registries. In the test
/// profile every key derives from `seed`; in the full profile RSA keys are
/// fresh each call.
std::vector<proto::Device> provision(const std::vector<NodeSpec>& specs, crypto::ParamProfile profile,
                                     std::uint64_t seed);

struct SessionStart {
  TimeMs at = 0;
  std::string initiator;
  std::string responder;
};

struct Match {
  std::optional<proto::MessageType> type;
  std::optional<std::string> from;
  std::optional<std::string> to;
  /// Fire only on the nth frame (1-based) that matches the other fields.
  std::optional<int> nth;
};

struct Edit {
  enum class Field { Cookie, Dh, Nonce, Vr, Byte };
  Field field = Field::Byte;
  /// Cookie: "random" | "trigger" | hex. Dh: "one" | "zero" | "p_minus_1" |
  /// "random". Nonce: "random". Vr: "true" | "false".
  std::string value;
  std::size_t offset = 0;
  std::uint8_t xor_mask = 0;
  std::optional<std::uint8_t> set;
};

struct Observe {
  Match match;
  std::string store;
  int limit = 0;
};
struct Drop {
  Match match;
  int limit = 1;
};
struct Tamper {
  Match match;
  std::vector<Edit> edits;
  /// Msg1 only: make the cookie agree with the edited fields.
  bool recompute_cookie = false;
  int limit = 1;
};
struct Delay {
  Match match;
  TimeMs ms = 0;
  int limit = 1;
};
/// Re-sends a stored frame to `to`, either at a fixed time or when a frame
/// matching `on` passes by.
struct Replay {
  std::string stored;
  std::string to;
  std::optional<TimeMs> at;
  std::optional<Match> on;
  std::vector<Edit> edits;
  bool drop_trigger = false;
};
/// A rogue endpoint named "adv:<as>" that claims `as`'s identity.
struct Masquerade {
  std::string as;
  /// "own" | "leaked" (the impersonated node's key) | "leaked:<node>".
  std::string device_key = "own";
  /// "own" | "leaked" | "stale" (leaked device key aside, answers every
  /// challenge with a genuine quote captured before the run).
  std::string aik = "own";
  /// Route frames addressed to `as` to the rogue instead.
  bool divert = true;
};
/// Well-formed Msg1s claiming to come from `as`, each with a fresh exponential.
struct Flood {
  std::string as;
  std::string to;
  TimeMs at = 0;
  int count = 1;
  TimeMs spacing_ms = 0;
};
/// Active man-in-the-middle on the first handshake from `initiator` to
/// `responder`: swaps both exponentials for its own, keeps cookies
/// consistent on each leg, and re-seals envelopes across the legs.
struct MitmDh {
  std::string initiator;
  std::string responder;
};

using Action = std::variant<Observe, Drop, Tamper, Delay, Replay, Masquerade, Flood, MitmDh>;

struct SessionExpect {
  std::string node;
  proto::SessionId session = 1;
  proto::Phase phase = proto::Phase::Established;
  /// Allowed local abort reasons; empty means any.
  std::vector<proto::AbortReason> reasons;
  /// Allowed reasons carried by the peer's Abort; empty means any.
  std::vector<proto::AbortReason> peer_reasons;
};

struct RejectionExpect {
  std::string node;
  std::vector<proto::AbortReason> reasons;
  std::optional<std::size_t> count;
};

struct ReasonCount {
  std::string node;
  proto::AbortReason reason = proto::AbortReason::Timeout;
  std::size_t count = 0;
};

struct HalfOpenExpect {
  std::string node;
  std::optional<std::size_t> at_most;
  std::optional<std::size_t> at_least;
};

struct Expectations {
  std::vector<SessionExpect> sessions;
  std::vector<RejectionExpect> rejections;
  std::vector<ReasonCount> abort_counts;
  std::vector<HalfOpenExpect> half_open;
  std::optional<std::size_t> mutual_established;
  std::optional<std::size_t> protocol_frames;
  /// Node whose established keys a rogue endpoint must share, or "none".
  std::optional<std::string> adversary_shares_key_with;
};

struct Scenario {
  std::string name;
  std::string description;
  crypto::ParamProfile profile = crypto::ParamProfile::Test;
  std::uint64_t seed = 1;
  std::vector<NodeSpec> nodes;
  std::vector<SessionStart> sessions;
  std::vector<Action> adversary;
  Expectations expect;
  TimeMs link_latency_ms = 1;
  TimeMs horizon_ms = 60000;
};

/// Two default nodes "AD1" and "AD2" and one AD1 -> AD2 handshake at t=0.
Scenario honest_scenario(std::uint64_t seed);

/// Accepts one scenario object or {"scenarios": [...]}. Unknown keys or
/// actions throw ConfigError.
std::vector<Scenario> parse_scenarios(const config::Json& j, const std::filesystem::path& base_dir);
std::vector<Scenario> load_scenarios(const std::filesystem::path& path);

struct FrameRecord {
  TimeMs at = 0;
  std::string from;
  std::string to;
  std::string type;
  std::size_t size = 0;
  /// What the adversary did with it and what the receiver made of it.
  std::string verdict;
  std::string cookie;
};

struct SessionOutcome {
  proto::SessionId id = 0;
  proto::Role role = proto::Role::Initiator;
  proto::Phase phase = proto::Phase::Start;
  std::optional<proto::AbortReason> reason;
  std::optional<proto::AbortReason> peer_reason;
  std::optional<tpm::TrustVerdict> peer_verdict;
  std::string peer;
  std::string cookie;
  /// Established sessions only.
  std::string key_fingerprint;
};

struct NodeReport {
  std::string name;
  bool rogue = false;
  std::string identity;
  std::vector<SessionOutcome> sessions;
  std::vector<proto::AbortReason> rejections;
  std::size_t half_open_peak = 0;
  proto::NodeStats stats;
};

struct ScenarioReport {
  std::string name;
  std::uint64_t seed = 0;
  crypto::ParamProfile profile = crypto::ParamProfile::Test;
  std::vector<FrameRecord> frames;
  std::vector<NodeReport> nodes;
  std::size_t protocol_frames = 0;
  std::size_t mutual_established = 0;
  /// "adv:X<->Y" for each rogue session that holds the same keys as a
  /// genuine node's session.
  std::vector<std::string> adversary_key_shares;
  /// Broken global invariants (e.g. both ends established on different keys).
  std::vector<std::string> violations;
  /// Expectations from the scenario that did not hold.
  std::vector<std::string> failures;
  TimeMs virtual_end_ms = 0;
  bool horizon_reached = false;
  double wall_ms = 0;

  bool passed() const { return failures.empty() && violations.empty(); }
  const NodeReport& node(std::string_view name) const;
  /// One line per frame, then one line per session.
  std::string to_text() const;
  config::Json to_json() const;
};

/// Throws ConfigError for a topology that cannot be set up (unknown names,
/// duplicate nodes, replay of a frame nothing stores).
ScenarioReport run_scenario(const Scenario& scenario);

}  // namespace stcp::harness
