#pragma once

#include <cstdint>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "stcp/handshake.hpp"

namespace stcp::proto {

/// Milliseconds on whatever clock drives the node: virtual in the scenario
/// harness, steady_clock in the live drivers.
using TimeMs = std::int64_t;

struct NodeOptions {
  std::size_t half_open_cap = 64;
  TimeMs message_timeout_ms = 5000;
};

struct Outgoing {
  DeviceIdentity to;
  Bytes frame;
};

using SessionId = std::uint64_t;

struct Reaction {
  std::vector<Outgoing> out;
  /// Session created or advanced by this input, if any.
  std::optional<SessionId> session;
};

/// Counters for inputs that never produced session state.
struct NodeStats {
  std::uint64_t undecodable_frames = 0;
  std::uint64_t silent_drops = 0;
  std::uint64_t unmatched_frames = 0;
  std::uint64_t role_conflicts = 0;
};

/// Hosts any number of concurrent handshakes for one device. Single-owner:
/// callers serialize access.
///
/// Responder sessions are only allocated after the signature-free Msg1 checks
/// pass, and at most `half_open_cap` of them await Msg3 at once; the oldest is
/// evicted when a new one arrives. When both sides initiate toward each other,
/// the lower identity keeps the initiator role.
class Node {
 public:
  explicit Node(Device device, std::shared_ptr<crypto::RandomSource> rng = nullptr, NodeOptions options = {});

  /// Throws ProvisioningError for an unknown peer and StateError when a
  /// handshake toward the same peer is already pending.
  Reaction start_session(const DeviceIdentity& peer, TimeMs now);
  /// Undecodable or unmatched frames are counted and ignored.
  Reaction on_frame(BytesView frame, TimeMs now);
  /// Aborts every session whose deadline has passed and tells its peer.
  std::vector<Outgoing> on_tick(TimeMs now);
  std::optional<TimeMs> next_deadline() const;
  /// Ends a live session from outside (transport loss). Returns the Abort
  /// for the peer; throws StateError if the session already finished.
  Outgoing abort(SessionId id, AbortReason reason);

  const HandshakeState& session(SessionId id) const;
  std::vector<SessionId> session_ids() const;
  std::optional<SessionId> find_by_cookie(const SessionCookie& cookie) const;
  /// Msg1s refused with an Abort (bad cookie, degenerate exponential). Kept
  /// outside session storage and capped at kRejectionLogSize entries.
  const std::deque<HandshakeState>& rejections() const { return rejections_; }
  static constexpr std::size_t kRejectionLogSize = 256;
  /// Forgets finished sessions; their ids become invalid.
  void prune_finished();

  std::size_t half_open() const { return half_open_.size(); }
  std::size_t half_open_peak() const { return half_open_peak_; }
  const NodeStats& stats() const { return stats_; }
  const Device& device() const { return device_; }
  const NodeOptions& options() const { return options_; }

 private:
  struct Slot {
    HandshakeState state;
    TimeMs deadline = 0;
  };

  SessionId add_session(HandshakeState state, TimeMs deadline);
  void retire(SessionId id);
  Outgoing abort_session(SessionId id, AbortReason reason);

  Reaction handle(const Msg1& m, TimeMs now);
  Reaction handle(const Msg2& m, TimeMs now);
  Reaction handle(const Msg3& m, TimeMs now);
  Reaction handle(const Abort& m, TimeMs now);

  Device device_;
  std::shared_ptr<crypto::RandomSource> rng_;
  NodeOptions options_;
  NodeStats stats_;

  SessionId next_id_ = 1;
  std::map<SessionId, Slot> sessions_;
  std::map<DeviceIdentity, SessionId> pending_initiator_;
  std::list<SessionId> lru_;
  std::map<SessionCookie, std::list<SessionId>::iterator> half_open_;
  std::size_t half_open_peak_ = 0;
  std::deque<HandshakeState> rejections_;
};

}  // namespace stcp::proto
