#include "stcp/node.hpp"

#include <algorithm>

#include "stcp/error.hpp"

namespace stcp::proto {

namespace {
std::shared_ptr<crypto::RandomSource> system_rng() {
  return std::shared_ptr<crypto::RandomSource>(&crypto::SystemRandom::instance(), [](crypto::RandomSource*) {});
}
}  // namespace

Node::Node(Device device, std::shared_ptr<crypto::RandomSource> rng, NodeOptions options)
    : device_(std::move(device)), rng_(rng ? std::move(rng) : system_rng()), options_(options) {
  if (options_.half_open_cap == 0) throw ConfigError("half-open cap must be at least 1");
}

SessionId Node::add_session(HandshakeState state, TimeMs deadline) {
  const auto id = next_id_++;
  sessions_.emplace(id, Slot{std::move(state), deadline});
  return id;
}

void Node::retire(SessionId id) {
  const auto& state = sessions_.at(id).state;
  if (state.role == Role::Initiator) {
    auto it = pending_initiator_.find(state.peer_id);
    if (it != pending_initiator_.end() && it->second == id) pending_initiator_.erase(it);
  } else {
    auto it = half_open_.find(state.cookie);
    if (it != half_open_.end() && *it->second == id) {
      lru_.erase(it->second);
      half_open_.erase(it);
    }
  }
}

Outgoing Node::abort_session(SessionId id, AbortReason reason) {
  retire(id);
  auto& state = sessions_.at(id).state;
  return Outgoing{state.peer_id, encode(state.abort(reason))};
}

Reaction Node::start_session(const DeviceIdentity& peer, TimeMs now) {
  if (pending_initiator_.count(peer)) throw StateError("a handshake toward " + peer.hex() + " is already pending");
  HandshakeState state;
  auto msg1 = initiate(state, device_, peer, *rng_);
  const auto id = add_session(std::move(state), now + options_.message_timeout_ms);
  pending_initiator_[peer] = id;
  return Reaction{{Outgoing{peer, encode(msg1)}}, id};
}

Reaction Node::on_frame(BytesView frame, TimeMs now) {
  ProtocolMessage msg;
  try {
    msg = decode(frame);
  } catch (const CodecError&) {
    ++stats_.undecodable_frames;
    return {};
  }
  return std::visit([&](const auto& m) { return handle(m, now); }, msg);
}

Reaction Node::handle(const Msg1& m, TimeMs now) {
  Reaction r;
  auto pending = pending_initiator_.find(m.ad1_id);
  if (pending != pending_initiator_.end() && device_.identity < m.ad1_id) {
    ++stats_.role_conflicts;
    return r;  // we keep the initiator role
  }

  auto resp = respond(m, device_, *rng_);
  if (resp.state.phase == Phase::Aborted && !resp.reply) {
    ++stats_.silent_drops;
    return r;
  }
  if (resp.state.phase == Phase::Aborted) {
    r.out.push_back(Outgoing{m.ad1_id, encode(*resp.reply)});
    if (rejections_.size() == kRejectionLogSize) rejections_.pop_front();
    rejections_.push_back(std::move(resp.state));
    return r;
  }
  if (half_open_.count(m.cookie)) {
    // Duplicate of a Msg1 we are already answering; the first state wins.
    ++stats_.unmatched_frames;
    return r;
  }

  if (pending != pending_initiator_.end()) {
    ++stats_.role_conflicts;
    r.out.push_back(abort_session(pending->second, AbortReason::RoleConflict));
  }
  while (half_open_.size() >= options_.half_open_cap) {
    r.out.push_back(abort_session(lru_.front(), AbortReason::Evicted));
  }
  const auto id = add_session(std::move(resp.state), now + options_.message_timeout_ms);
  lru_.push_back(id);
  half_open_[m.cookie] = std::prev(lru_.end());
  half_open_peak_ = std::max(half_open_peak_, half_open_.size());
  r.session = id;
  r.out.push_back(Outgoing{m.ad1_id, encode(*resp.reply)});
  return r;
}

Reaction Node::handle(const Msg2& m, TimeMs) {
  Reaction r;
  auto it = pending_initiator_.find(m.ad2_id);
  if (it == pending_initiator_.end() || m.ad1_id != device_.identity) {
    ++stats_.unmatched_frames;
    return r;
  }
  const auto id = it->second;
  auto& state = sessions_.at(id).state;
  auto reply = process_msg2(state, m, device_, *rng_);
  if (!reply) {
    ++stats_.unmatched_frames;
    return r;
  }
  retire(id);
  r.session = id;
  r.out.push_back(Outgoing{state.peer_id, encode(*reply)});
  return r;
}

Reaction Node::handle(const Msg3& m, TimeMs) {
  Reaction r;
  auto it = half_open_.find(m.cookie);
  if (it == half_open_.end()) {
    ++stats_.unmatched_frames;
    return r;
  }
  const auto id = *it->second;
  auto& state = sessions_.at(id).state;
  auto reply = process_msg3(state, m, device_);
  retire(id);
  r.session = id;
  if (reply) r.out.push_back(Outgoing{state.peer_id, encode(*reply)});
  return r;
}

Reaction Node::handle(const Abort& m, TimeMs) {
  Reaction r;
  for (auto& [id, slot] : sessions_) {
    auto& state = slot.state;
    if (state.cookie != m.cookie || state.phase == Phase::Aborted) continue;
    retire(id);
    state.abort(AbortReason::PeerAborted);
    state.peer_abort_reason = m.reason;
    r.session = id;
    return r;
  }
  ++stats_.unmatched_frames;
  return r;
}

std::vector<Outgoing> Node::on_tick(TimeMs now) {
  std::vector<Outgoing> out;
  for (auto& [id, slot] : sessions_) {
    if (slot.state.terminal() || slot.deadline > now) continue;
    out.push_back(abort_session(id, AbortReason::Timeout));
  }
  return out;
}

Outgoing Node::abort(SessionId id, AbortReason reason) {
  auto it = sessions_.find(id);
  if (it == sessions_.end() || it->second.state.phase == Phase::Aborted) {
    throw StateError("session " + std::to_string(id) + " is not live");
  }
  return abort_session(id, reason);
}

std::optional<TimeMs> Node::next_deadline() const {
  std::optional<TimeMs> best;
  for (const auto& [id, slot] : sessions_) {
    if (slot.state.terminal()) continue;
    if (!best || slot.deadline < *best) best = slot.deadline;
  }
  return best;
}

const HandshakeState& Node::session(SessionId id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw StateError("unknown session id " + std::to_string(id));
  return it->second.state;
}

std::vector<SessionId> Node::session_ids() const {
  std::vector<SessionId> out;
  for (const auto& [id, slot] : sessions_) out.push_back(id);
  return out;
}

std::optional<SessionId> Node::find_by_cookie(const SessionCookie& cookie) const {
  for (const auto& [id, slot] : sessions_) {
    if (slot.state.cookie == cookie) return id;
  }
  return std::nullopt;
}

void Node::prune_finished() {
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    it = it->second.state.terminal() ? sessions_.erase(it) : std::next(it);
  }
}

}  // namespace stcp::proto
