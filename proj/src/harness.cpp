#include "stcp/harness.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "stcp/error.hpp"

namespace stcp::harness {

using proto::AbortReason;
using proto::DeviceIdentity;
using proto::MessageType;
using proto::Phase;

// ---- provisioning -----------------------------------------------------------

tpm::BootManifest default_manifest(std::string_view name) {
  using K = tpm::ComponentKind;
  auto comp = [](std::string n, K kind, std::string image) {
    return tpm::BootComponent{std::move(n), kind, Bytes(image.begin(), image.end()), tpm::default_pcr_index(kind)};
  };
  tpm::BootManifest m;
  m.components = {
      comp("crtm", K::CrtmSelf, "crtm 1.0"),
      comp("bios", K::BiosRest, "bios 2.3.1"),
      comp("board-config", K::BoardConfig, "board rev C, 2x arinc664 ports"),
      comp("rom-firmware", K::RomFirmware, "option rom 5.2"),
      comp("rom-firmware-config", K::RomFirmwareConfig, "option rom defaults"),
      comp("os-loader", K::OsLoader, "loader 1.4"),
      comp("os-code", K::OsCode, "partitioned rtos 4.1"),
      comp("application", K::Application, "application image for " + std::string(name)),
  };
  return m;
}

namespace {

crypto::SignatureKeyPair make_key(crypto::ParamProfile profile, std::uint64_t seed, const std::string& stream) {
  const auto params = crypto::profile_params(profile);
  if (params.signature.scheme == crypto::SignatureScheme::Ed25519) {
    crypto::DeterministicRandom rng(seed, stream);
    return crypto::SignatureKeyPair::ed25519_from_seed(rng.bytes(32));
  }
  return crypto::SignatureKeyPair::generate(params.signature);
}

}  // namespace

std::vector<proto::Device> provision(const std::vector<NodeSpec>& specs, crypto::ParamProfile profile,
                                     std::uint64_t seed) {
  const auto params = crypto::profile_params(profile);
  std::set<std::string> names;
  std::set<DeviceIdentity> ids;
  std::vector<proto::Device> devices;
  for (const auto& spec : specs) {
    if (spec.name.empty() || spec.name.rfind("adv:", 0) == 0) throw ConfigError("invalid node name '" + spec.name + "'");
    if (!names.insert(spec.name).second) throw ConfigError("duplicate node name '" + spec.name + "'");
    crypto::DeterministicRandom id_rng(seed, "identity:" + spec.name);
    auto identity = DeviceIdentity::random(id_rng);
    if (!ids.insert(identity).second) throw ConfigError("identity collision for '" + spec.name + "'");
    tpm::PcrBank bank(make_key(profile, seed, "aik:" + spec.name));
    bank.boot(spec.manifest);
    devices.push_back(proto::Device{identity, spec.name, make_key(profile, seed, "device:" + spec.name),
                                    std::move(bank), spec.attestation_indices, {}, params.group,
                                    proto::Policy{spec.require_attestation}, {}});
  }
  for (std::size_t i = 0; i < devices.size(); ++i) {
    for (std::size_t j = 0; j < devices.size(); ++j) {
      if (i == j) continue;
      const auto& spec = specs[j];
      const auto& expected = spec.provisioned ? *spec.provisioned : spec.manifest;
      devices[i].registry.add(proto::PeerRecord{devices[j].identity, devices[j].signing_key.verification_key(),
                                                devices[j].tpm.aik_public(),
                                                tpm::golden_values(expected, spec.attestation_indices),
                                                spec.attestation_indices});
    }
  }
  return devices;
}

Scenario honest_scenario(std::uint64_t seed) {
  Scenario s;
  s.name = "honest";
  s.seed = seed;
  for (const char* n : {"AD1", "AD2"}) {
    NodeSpec spec;
    spec.name = n;
    spec.manifest = default_manifest(n);
    s.nodes.push_back(std::move(spec));
  }
  s.sessions.push_back({0, "AD1", "AD2"});
  s.expect.sessions = {{"AD1", 1, Phase::Established, {}, {}}, {"AD2", 1, Phase::Established, {}, {}}};
  s.expect.mutual_established = 1;
  s.expect.protocol_frames = 3;
  return s;
}

// ---- simulation -------------------------------------------------------------

namespace {

std::optional<MessageType> peek_type(BytesView frame, std::optional<proto::ProtocolMessage>& decoded) {
  try {
    decoded = proto::decode(frame);
    return proto::type_of(*decoded);
  } catch (const CodecError&) {
    return std::nullopt;
  }
}

std::string type_label(const std::optional<MessageType>& t) {
  return t ? std::string(proto::message_type_name(*t)) : "?";
}

struct Endpoint {
  std::string name;
  bool rogue = false;
  std::unique_ptr<proto::Node> node;
};

struct Flight {
  std::string from;
  DeviceIdentity to;
  Bytes frame;
  std::string verdict;
};

struct Event {
  TimeMs at = 0;
  std::uint64_t seq = 0;
  enum class Kind { Deliver, Start, TimedAction } kind = Kind::Deliver;
  Flight flight;
  std::size_t index = 0;  // session or action index

  bool operator>(const Event& o) const { return at != o.at ? at > o.at : seq > o.seq; }
};

struct RuleState {
  int seen = 0;
  int fired = 0;
};

struct MitmState {
  bool engaged = false;
  proto::SessionCookie to_initiator;  // cookie the initiator knows
  proto::SessionCookie to_responder;  // cookie the responder knows
  std::optional<crypto::DhKeyPair> toward_responder;
  std::optional<crypto::DhKeyPair> toward_initiator;
  Bytes initiator_exponential;
  crypto::Nonce n1;
  std::optional<crypto::SessionKeys> k_initiator;
  std::optional<crypto::SessionKeys> k_responder;
};

class Simulation {
 public:
  explicit Simulation(const Scenario& sc)
      : sc_(sc), params_(crypto::profile_params(sc.profile)), adv_rng_(sc.seed, "adversary") {
    setup();
  }

  ScenarioReport run();

 private:
  void setup();
  void add_rogue(const Masquerade& m);
  std::size_t endpoint(const std::string& name) const;
  DeviceIdentity identity_of(const std::string& name) const { return eps_.at(endpoint(name)).node->device().identity; }
  std::string name_of(const DeviceIdentity& id) const;

  void schedule(TimeMs at, Event e) {
    e.at = at;
    e.seq = seq_++;
    queue_.push(std::move(e));
  }
  void deliver_later(Flight f, TimeMs extra = 0) {
    Event e;
    e.kind = Event::Kind::Deliver;
    e.flight = std::move(f);
    schedule(now_ + sc_.link_latency_ms + extra, std::move(e));
  }

  void emit(std::size_t from_ep, const proto::Outgoing& out);
  void intercept(Flight f);
  bool matches(const Match& m, RuleState& st, const std::optional<MessageType>& type, const Flight& f);
  Bytes apply_edits(BytesView frame, const std::vector<Edit>& edits, bool recompute_cookie,
                    const std::optional<proto::SessionCookie>& trigger);
  void mitm(MitmState& st, const MitmDh& rule, Flight& f, const std::optional<proto::ProtocolMessage>& msg);
  void deliver(Flight f);
  void start(const SessionStart& s);
  void timed_action(std::size_t index);
  void record(const Flight& f, const std::string& verdict);
  void evaluate(ScenarioReport& r) const;

  const Scenario& sc_;
  crypto::ProfileParams params_;
  crypto::DeterministicRandom adv_rng_;
  std::vector<Endpoint> eps_;
  std::vector<proto::Device> genuine_;
  std::map<DeviceIdentity, std::size_t> route_;
  std::map<std::string, Bytes> store_;
  std::vector<RuleState> rule_state_;
  std::map<std::size_t, MitmState> mitm_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  std::uint64_t seq_ = 0;
  TimeMs now_ = 0;
  std::vector<FrameRecord> frames_;
  std::size_t protocol_frames_ = 0;
  std::vector<std::string> setup_failures_;
};

std::size_t Simulation::endpoint(const std::string& name) const {
  for (std::size_t i = 0; i < eps_.size(); ++i) {
    if (eps_[i].name == name) return i;
  }
  throw ConfigError("scenario '" + sc_.name + "': unknown endpoint '" + name + "'");
}

std::string Simulation::name_of(const DeviceIdentity& id) const {
  for (const auto& ep : eps_) {
    if (!ep.rogue && ep.node->device().identity == id) return ep.name;
  }
  return "?" + id.hex().substr(0, 8);
}

void Simulation::setup() {
  if (sc_.nodes.size() < 2) throw ConfigError("scenario '" + sc_.name + "' needs at least two nodes");
  genuine_ = provision(sc_.nodes, sc_.profile, sc_.seed);
  for (std::size_t i = 0; i < genuine_.size(); ++i) {
    auto rng = std::make_shared<crypto::DeterministicRandom>(sc_.seed, "node:" + sc_.nodes[i].name);
    eps_.push_back({sc_.nodes[i].name, false, std::make_unique<proto::Node>(genuine_[i], rng, sc_.nodes[i].options)});
    route_[genuine_[i].identity] = i;
  }
  rule_state_.resize(sc_.adversary.size());
  for (const auto& a : sc_.adversary) {
    if (auto* m = std::get_if<Masquerade>(&a)) add_rogue(*m);
  }
  // Everything the script refers to must exist before the first frame.
  auto check = [&](const std::optional<std::string>& n) {
    if (n) endpoint(*n);
  };
  for (std::size_t i = 0; i < sc_.adversary.size(); ++i) {
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, Observe> || std::is_same_v<T, Drop> || std::is_same_v<T, Tamper> ||
                        std::is_same_v<T, Delay>) {
            check(a.match.from);
            check(a.match.to);
          } else if constexpr (std::is_same_v<T, Replay>) {
            check(a.to);
            if (a.on) {
              check(a.on->from);
              check(a.on->to);
            }
            if (a.at) {
              Event e;
              e.kind = Event::Kind::TimedAction;
              e.index = i;
              schedule(*a.at, std::move(e));
            }
          } else if constexpr (std::is_same_v<T, Flood>) {
            check(a.as);
            check(a.to);
            Event e;
            e.kind = Event::Kind::TimedAction;
            e.index = i;
            schedule(a.at, std::move(e));
          } else if constexpr (std::is_same_v<T, MitmDh>) {
            check(a.initiator);
            check(a.responder);
          }
        },
        sc_.adversary[i]);
  }
  for (std::size_t i = 0; i < sc_.sessions.size(); ++i) {
    endpoint(sc_.sessions[i].initiator);
    endpoint(sc_.sessions[i].responder);
    Event e;
    e.kind = Event::Kind::Start;
    e.index = i;
    schedule(sc_.sessions[i].at, std::move(e));
  }
}

void Simulation::add_rogue(const Masquerade& m) {
  const auto victim_idx = endpoint(m.as);
  if (eps_[victim_idx].rogue) throw ConfigError("cannot masquerade as a rogue endpoint");
  const auto& victim = genuine_[victim_idx];
  const auto& spec = sc_.nodes[victim_idx];

  crypto::SignatureKeyPair device_key;
  if (m.device_key == "own") {
    device_key = make_key(sc_.profile, sc_.seed, "adv-device:" + m.as);
  } else if (m.device_key == "leaked") {
    device_key = victim.signing_key;
  } else if (m.device_key.rfind("leaked:", 0) == 0) {
    device_key = genuine_.at(endpoint(m.device_key.substr(7))).signing_key;
  } else {
    throw ConfigError("masquerade device_key must be own, leaked, or leaked:<node>");
  }

  proto::QuoteSource quote_source;
  crypto::SignatureKeyPair aik;
  if (m.aik == "own") {
    aik = make_key(sc_.profile, sc_.seed, "adv-aik:" + m.as);
  } else if (m.aik == "leaked") {
    aik = victim.tpm.aik();
  } else if (m.aik == "stale") {
    aik = victim.tpm.aik();
    // Captured from the genuine TPM before the run, over a challenge that
    // will never be issued again.
    auto captured = victim.tpm.quote(victim.attestation_indices, as_view("challenge from an earlier session"));
    quote_source = [captured](std::span<const int>, BytesView) { return captured; };
  } else {
    throw ConfigError("masquerade aik must be own, leaked, or stale");
  }

  tpm::PcrBank bank(aik);
  bank.boot(spec.provisioned ? *spec.provisioned : spec.manifest);
  proto::Device rogue{victim.identity, "adv:" + m.as, device_key, std::move(bank), victim.attestation_indices,
                      victim.registry, victim.group, victim.policy, quote_source};
  auto rng = std::make_shared<crypto::DeterministicRandom>(sc_.seed, "adv-node:" + m.as);
  const auto idx = eps_.size();
  eps_.push_back({"adv:" + m.as, true, std::make_unique<proto::Node>(std::move(rogue), rng, spec.options)});
  if (m.divert) route_[victim.identity] = idx;
}

void Simulation::record(const Flight& f, const std::string& verdict) {
  std::optional<proto::ProtocolMessage> msg;
  const auto type = peek_type(f.frame, msg);
  FrameRecord rec{now_, f.from, name_of(f.to), type_label(type), f.frame.size(), verdict, ""};
  if (msg) rec.cookie = proto::cookie_of(*msg).hex().substr(0, 12);
  frames_.push_back(std::move(rec));
}

void Simulation::emit(std::size_t from_ep, const proto::Outgoing& out) {
  Flight f{eps_[from_ep].name, out.to, out.frame, eps_[from_ep].rogue ? "forged" : "delivered"};
  if (eps_[from_ep].rogue) {
    deliver_later(std::move(f));
  } else {
    intercept(std::move(f));
  }
}

bool Simulation::matches(const Match& m, RuleState& st, const std::optional<MessageType>& type, const Flight& f) {
  if (m.type && (!type || *m.type != *type)) return false;
  if (m.from && *m.from != f.from) return false;
  if (m.to && *m.to != name_of(f.to)) return false;
  ++st.seen;
  return !m.nth || *m.nth == st.seen;
}

Bytes Simulation::apply_edits(BytesView frame, const std::vector<Edit>& edits, bool recompute_cookie,
                              const std::optional<proto::SessionCookie>& trigger) {
  Bytes out(frame.begin(), frame.end());
  const bool structural = recompute_cookie || std::any_of(edits.begin(), edits.end(), [](const Edit& e) {
                            return e.field != Edit::Field::Byte;
                          });
  if (structural) {
    proto::ProtocolMessage msg;
    try {
      msg = proto::decode(out);
    } catch (const CodecError&) {
      return out;  // nothing structured to edit
    }
    const auto width = params_.group.modulus_bytes();
    auto exponential = [&](const std::string& v) -> Bytes {
      if (v == "zero") return Bytes(width, 0);
      if (v == "one") return crypto::BigInt(1).to_bytes(width);
      if (v == "p_minus_1") {
        auto p = params_.group.prime_modulus.to_bytes(width);
        p.back() -= 1;  // p is odd
        return p;
      }
      return crypto::generate_dh_keypair(params_.group, adv_rng_).public_exponential.to_bytes(width);
    };
    for (const auto& e : edits) {
      std::visit(
          [&](auto& m) {
            using T = std::decay_t<decltype(m)>;
            switch (e.field) {
              case Edit::Field::Cookie:
                if (e.value == "random") {
                  m.cookie.digest = to_array<kDigestSize>(adv_rng_.bytes(kDigestSize));
                } else if (e.value == "trigger") {
                  if (trigger) m.cookie = *trigger;
                } else {
                  m.cookie.digest = to_array<kDigestSize>(from_hex(e.value));
                }
                break;
              case Edit::Field::Dh:
                if constexpr (std::is_same_v<T, proto::Msg1>) m.dh_ad1 = exponential(e.value);
                if constexpr (std::is_same_v<T, proto::Msg2>) m.dh_ad2 = exponential(e.value);
                break;
              case Edit::Field::Nonce:
                if constexpr (std::is_same_v<T, proto::Msg1>) m.n_ad1 = crypto::Nonce::random(adv_rng_);
                if constexpr (std::is_same_v<T, proto::Msg2>) m.n_ad2 = crypto::Nonce::random(adv_rng_);
                break;
              case Edit::Field::Vr:
                if constexpr (std::is_same_v<T, proto::Msg1> || std::is_same_v<T, proto::Msg2>) {
                  m.validation_request = e.value == "true";
                }
                break;
              case Edit::Field::Byte: break;
            }
          },
          msg);
    }
    if (recompute_cookie) {
      if (auto* m1 = std::get_if<proto::Msg1>(&msg)) {
        m1->cookie = proto::compute_cookie(m1->dh_ad1, m1->n_ad1, m1->ad1_id, m1->ad2_id);
      }
    }
    out = proto::encode(msg);
  }
  for (const auto& e : edits) {
    if (e.field != Edit::Field::Byte || e.offset >= out.size()) continue;
    out[e.offset] = e.set ? *e.set : static_cast<std::uint8_t>(out[e.offset] ^ e.xor_mask);
  }
  return out;
}

void Simulation::mitm(MitmState& st, const MitmDh& rule, Flight& f, const std::optional<proto::ProtocolMessage>& msg) {
  if (!msg) return;
  const auto width = params_.group.modulus_bytes();
  try {
    if (auto* m1 = std::get_if<proto::Msg1>(&*msg); m1 && !st.engaged && f.from == rule.initiator &&
                                                    name_of(f.to) == rule.responder) {
      st.engaged = true;
      st.to_initiator = m1->cookie;
      st.initiator_exponential = m1->dh_ad1;
      st.n1 = m1->n_ad1;
      st.toward_responder = crypto::generate_dh_keypair(params_.group, adv_rng_);
      auto forged = *m1;
      forged.dh_ad1 = st.toward_responder->public_exponential.to_bytes(width);
      forged.cookie = proto::compute_cookie(forged.dh_ad1, forged.n_ad1, forged.ad1_id, forged.ad2_id);
      st.to_responder = forged.cookie;
      f.frame = proto::encode(forged);
      f.verdict = "rewritten";
    } else if (auto* m2 = std::get_if<proto::Msg2>(&*msg); m2 && st.engaged && m2->cookie == st.to_responder) {
      st.k_responder = crypto::derive_session_keys(
          crypto::compute_shared_secret(*st.toward_responder, crypto::BigInt::from_bytes(m2->dh_ad2), params_.group),
          st.n1, m2->n_ad2);
      st.toward_initiator = crypto::generate_dh_keypair(params_.group, adv_rng_);
      st.k_initiator = crypto::derive_session_keys(
          crypto::compute_shared_secret(*st.toward_initiator, crypto::BigInt::from_bytes(st.initiator_exponential),
                                        params_.group),
          st.n1, m2->n_ad2);
      auto forged = *m2;
      forged.dh_ad2 = st.toward_initiator->public_exponential.to_bytes(width);
      forged.sealed_auth = crypto::seal(crypto::open(m2->sealed_auth, *st.k_responder), *st.k_initiator, adv_rng_);
      forged.cookie = st.to_initiator;
      f.frame = proto::encode(forged);
      f.verdict = "rewritten";
    } else if (auto* m3 = std::get_if<proto::Msg3>(&*msg); m3 && st.k_initiator && m3->cookie == st.to_initiator) {
      auto forged = *m3;
      forged.sealed_auth = crypto::seal(crypto::open(m3->sealed_auth, *st.k_initiator), *st.k_responder, adv_rng_);
      forged.cookie = st.to_responder;
      f.frame = proto::encode(forged);
      f.verdict = "rewritten";
    } else if (auto* ab = std::get_if<proto::Abort>(&*msg); ab && st.engaged) {
      auto forged = *ab;
      if (ab->cookie == st.to_initiator) forged.cookie = st.to_responder;
      else if (ab->cookie == st.to_responder) forged.cookie = st.to_initiator;
      else return;
      f.frame = proto::encode(forged);
      f.verdict = "rewritten";
    }
  } catch (const Error& e) {
    spdlog::debug("mitm could not rewrite frame: {}", e.what());
  }
}

void Simulation::intercept(Flight f) {
  TimeMs extra = 0;
  for (std::size_t i = 0; i < sc_.adversary.size(); ++i) {
    std::optional<proto::ProtocolMessage> msg;
    const auto type = peek_type(f.frame, msg);
    auto& st = rule_state_[i];
    bool dropped = false;
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, Observe>) {
            if (!matches(a.match, st, type, f) || (a.limit && st.fired >= a.limit)) return;
            ++st.fired;
            if (!a.store.empty()) store_[a.store] = f.frame;
          } else if constexpr (std::is_same_v<T, Drop>) {
            if (!matches(a.match, st, type, f) || (a.limit && st.fired >= a.limit)) return;
            ++st.fired;
            dropped = true;
          } else if constexpr (std::is_same_v<T, Tamper>) {
            if (!matches(a.match, st, type, f) || (a.limit && st.fired >= a.limit)) return;
            ++st.fired;
            auto edited = apply_edits(f.frame, a.edits, a.recompute_cookie, std::nullopt);
            if (edited != f.frame) f.verdict = "tampered";
            f.frame = std::move(edited);
          } else if constexpr (std::is_same_v<T, Delay>) {
            if (!matches(a.match, st, type, f) || (a.limit && st.fired >= a.limit)) return;
            ++st.fired;
            extra += a.ms;
            f.verdict = "delayed";
          } else if constexpr (std::is_same_v<T, Replay>) {
            if (!a.on || !matches(*a.on, st, type, f) || st.fired >= 1) return;
            ++st.fired;
            auto it = store_.find(a.stored);
            if (it == store_.end()) return;
            std::optional<proto::SessionCookie> trigger;
            if (msg) trigger = proto::cookie_of(*msg);
            deliver_later(Flight{"adv", identity_of(a.to), apply_edits(it->second, a.edits, false, trigger), "replayed"});
            dropped = a.drop_trigger;
          } else if constexpr (std::is_same_v<T, MitmDh>) {
            mitm(mitm_[i], a, f, msg);
          }
        },
        sc_.adversary[i]);
    if (dropped) {
      record(f, "dropped");
      return;
    }
  }
  deliver_later(std::move(f), extra);
}

void Simulation::deliver(Flight f) {
  auto it = route_.find(f.to);
  if (it == route_.end()) {
    record(f, f.verdict + ",undeliverable");
    return;
  }
  auto& node = *eps_[it->second].node;
  std::optional<proto::ProtocolMessage> msg;
  if (auto t = peek_type(f.frame, msg); t && *t != MessageType::Abort) ++protocol_frames_;

  const auto before = node.stats();
  const auto rejected = node.rejections().size();
  auto reaction = node.on_frame(f.frame, now_);
  const auto& after = node.stats();
  std::string effect = "accepted";
  if (after.undecodable_frames > before.undecodable_frames) effect = "undecodable";
  else if (after.silent_drops > before.silent_drops) effect = "refused";
  else if (after.role_conflicts > before.role_conflicts && reaction.out.empty()) effect = "role-conflict";
  else if (after.unmatched_frames > before.unmatched_frames) effect = "ignored";
  else if (node.rejections().size() != rejected || (!reaction.session && !reaction.out.empty())) effect = "rejected";
  if (eps_[it->second].rogue && route_.count(f.to)) effect += "@" + eps_[it->second].name;
  record(f, f.verdict + "," + effect);
  for (const auto& out : reaction.out) emit(it->second, out);
}

void Simulation::start(const SessionStart& s) {
  const auto idx = endpoint(s.initiator);
  try {
    auto r = eps_[idx].node->start_session(identity_of(s.responder), now_);
    for (const auto& out : r.out) emit(idx, out);
  } catch (const Error& e) {
    setup_failures_.push_back("session start " + s.initiator + "->" + s.responder + " failed: " + e.what());
  }
}

void Simulation::timed_action(std::size_t index) {
  const auto& action = sc_.adversary[index];
  if (const auto* r = std::get_if<Replay>(&action)) {
    auto it = store_.find(r->stored);
    if (it == store_.end()) return;
    deliver_later(Flight{"adv", identity_of(r->to), apply_edits(it->second, r->edits, false, std::nullopt), "replayed"});
  } else if (const auto* fl = std::get_if<Flood>(&action)) {
    const auto from = identity_of(fl->as);
    const auto to = identity_of(fl->to);
    const auto width = params_.group.modulus_bytes();
    for (int k = 0; k < fl->count; ++k) {
      proto::Msg1 m;
      m.ad1_id = from;
      m.ad2_id = to;
      m.n_ad1 = crypto::Nonce::random(adv_rng_);
      m.dh_ad1 = crypto::generate_dh_keypair(params_.group, adv_rng_).public_exponential.to_bytes(width);
      m.cookie = proto::compute_cookie(m.dh_ad1, m.n_ad1, m.ad1_id, m.ad2_id);
      deliver_later(Flight{"adv(as " + fl->as + ")", to, proto::encode(m), "injected"}, k * fl->spacing_ms);
    }
  }
}

ScenarioReport Simulation::run() {
  const auto wall_start = std::chrono::steady_clock::now();
  ScenarioReport report;
  report.name = sc_.name;
  report.seed = sc_.seed;
  report.profile = sc_.profile;

  for (;;) {
    std::optional<TimeMs> next_deadline;
    for (const auto& ep : eps_) {
      if (auto d = ep.node->next_deadline(); d && (!next_deadline || *d < *next_deadline)) next_deadline = d;
    }
    const std::optional<TimeMs> next_event = queue_.empty() ? std::nullopt : std::optional<TimeMs>(queue_.top().at);
    if (!next_event && !next_deadline) break;
    const bool tick = next_deadline && (!next_event || *next_deadline <= *next_event);
    const TimeMs t = tick ? *next_deadline : *next_event;
    if (t > sc_.horizon_ms) {
      report.horizon_reached = true;
      break;
    }
    now_ = std::max(now_, t);
    if (tick) {
      for (std::size_t i = 0; i < eps_.size(); ++i) {
        for (const auto& out : eps_[i].node->on_tick(now_)) emit(i, out);
      }
      continue;
    }
    Event e = queue_.top();
    queue_.pop();
    switch (e.kind) {
      case Event::Kind::Deliver: deliver(std::move(e.flight)); break;
      case Event::Kind::Start: start(sc_.sessions[e.index]); break;
      case Event::Kind::TimedAction: timed_action(e.index); break;
    }
  }

  report.frames = std::move(frames_);
  report.protocol_frames = protocol_frames_;
  report.virtual_end_ms = now_;
  for (const auto& ep : eps_) {
    NodeReport nr;
    nr.name = ep.name;
    nr.rogue = ep.rogue;
    nr.identity = ep.node->device().identity.hex();
    nr.half_open_peak = ep.node->half_open_peak();
    nr.stats = ep.node->stats();
    for (auto id : ep.node->session_ids()) {
      const auto& s = ep.node->session(id);
      SessionOutcome o{id, s.role, s.phase, s.abort_reason, s.peer_abort_reason, s.peer_verdict, name_of(s.peer_id),
                       s.cookie.hex(), ""};
      if (s.phase == Phase::Established && s.keys) o.key_fingerprint = crypto::key_fingerprint(s.keys->k_e, s.keys->k_a);
      nr.sessions.push_back(std::move(o));
    }
    for (const auto& rej : ep.node->rejections()) {
      if (rej.abort_reason) nr.rejections.push_back(*rej.abort_reason);
    }
    report.nodes.push_back(std::move(nr));
  }

  // Global invariants over every established pair, rogue or not.
  struct Est {
    std::size_t ep;
    const proto::HandshakeState* s;
  };
  std::vector<Est> established;
  for (std::size_t i = 0; i < eps_.size(); ++i) {
    for (auto id : eps_[i].node->session_ids()) {
      const auto& s = eps_[i].node->session(id);
      if (s.phase == Phase::Established) established.push_back({i, &s});
    }
  }
  for (std::size_t a = 0; a < established.size(); ++a) {
    for (std::size_t b = a + 1; b < established.size(); ++b) {
      const auto& x = established[a];
      const auto& y = established[b];
      if (x.ep == y.ep) continue;
      const bool same_keys = x.s->keys->k_e == y.s->keys->k_e && x.s->keys->k_a == y.s->keys->k_a;
      const bool paired = x.s->cookie == y.s->cookie && x.s->role != y.s->role;
      if (paired && !same_keys) {
        report.violations.push_back(eps_[x.ep].name + " and " + eps_[y.ep].name + " established session " +
                                    x.s->cookie.hex().substr(0, 12) + " on different keys");
      }
      if (!eps_[x.ep].rogue && !eps_[y.ep].rogue && paired && same_keys) ++report.mutual_established;
      if (same_keys && eps_[x.ep].rogue != eps_[y.ep].rogue) {
        const auto& rogue = eps_[x.ep].rogue ? eps_[x.ep] : eps_[y.ep];
        const auto& honest = eps_[x.ep].rogue ? eps_[y.ep] : eps_[x.ep];
        report.adversary_key_shares.push_back(rogue.name + "<->" + honest.name);
      }
    }
  }
  report.failures = setup_failures_;
  evaluate(report);
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall_start).count();
  return report;
}

std::string reasons_text(const std::vector<AbortReason>& rs) {
  std::string s;
  for (auto r : rs) s += (s.empty() ? "" : "|") + std::string(proto::abort_reason_name(r));
  return s;
}

bool allowed(const std::vector<AbortReason>& rs, const std::optional<AbortReason>& r) {
  return rs.empty() || (r && std::find(rs.begin(), rs.end(), *r) != rs.end());
}

void Simulation::evaluate(ScenarioReport& r) const {
  const auto& ex = sc_.expect;
  auto find_node = [&](const std::string& n) -> const NodeReport* {
    for (const auto& nr : r.nodes) {
      if (nr.name == n) return &nr;
    }
    r.failures.push_back("no endpoint named " + n);
    return nullptr;
  };
  for (const auto& se : ex.sessions) {
    const auto* nr = find_node(se.node);
    if (!nr) continue;
    auto it = std::find_if(nr->sessions.begin(), nr->sessions.end(),
                           [&](const SessionOutcome& o) { return o.id == se.session; });
    const std::string tag = se.node + " session " + std::to_string(se.session);
    if (it == nr->sessions.end()) {
      r.failures.push_back(tag + ": never created");
      continue;
    }
    if (it->phase != se.phase) {
      r.failures.push_back(tag + ": expected " + std::string(proto::phase_name(se.phase)) + ", got " +
                           std::string(proto::phase_name(it->phase)) +
                           (it->reason ? "(" + std::string(proto::abort_reason_name(*it->reason)) + ")" : ""));
      continue;
    }
    if (se.phase == Phase::Aborted && !allowed(se.reasons, it->reason)) {
      r.failures.push_back(tag + ": reason " +
                           std::string(it->reason ? proto::abort_reason_name(*it->reason) : "none") + " not in " +
                           reasons_text(se.reasons));
    }
    if (se.phase == Phase::Aborted && !allowed(se.peer_reasons, it->peer_reason)) {
      r.failures.push_back(tag + ": peer reason " +
                           std::string(it->peer_reason ? proto::abort_reason_name(*it->peer_reason) : "none") +
                           " not in " + reasons_text(se.peer_reasons));
    }
  }
  for (const auto& re : ex.rejections) {
    const auto* nr = find_node(re.node);
    if (!nr) continue;
    if (re.count ? nr->rejections.size() != *re.count : nr->rejections.empty()) {
      r.failures.push_back(re.node + ": " + std::to_string(nr->rejections.size()) + " rejected handshakes");
    }
    for (auto reason : nr->rejections) {
      if (!allowed(re.reasons, reason)) {
        r.failures.push_back(re.node + ": rejection " + std::string(proto::abort_reason_name(reason)) + " not in " +
                             reasons_text(re.reasons));
      }
    }
  }
  for (const auto& rc : ex.abort_counts) {
    const auto* nr = find_node(rc.node);
    if (!nr) continue;
    const auto n = std::count_if(nr->sessions.begin(), nr->sessions.end(), [&](const SessionOutcome& o) {
      return o.phase == Phase::Aborted && o.reason == rc.reason;
    });
    if (static_cast<std::size_t>(n) != rc.count) {
      r.failures.push_back(rc.node + ": " + std::to_string(n) + " sessions aborted with " +
                           std::string(proto::abort_reason_name(rc.reason)) + ", expected " + std::to_string(rc.count));
    }
  }
  for (const auto& h : ex.half_open) {
    const auto* nr = find_node(h.node);
    if (!nr) continue;
    if ((h.at_most && nr->half_open_peak > *h.at_most) || (h.at_least && nr->half_open_peak < *h.at_least)) {
      r.failures.push_back(h.node + ": half-open peak " + std::to_string(nr->half_open_peak) + " out of bounds");
    }
  }
  if (ex.mutual_established && r.mutual_established != *ex.mutual_established) {
    r.failures.push_back("mutually established sessions: " + std::to_string(r.mutual_established) + ", expected " +
                         std::to_string(*ex.mutual_established));
  }
  if (ex.protocol_frames && r.protocol_frames != *ex.protocol_frames) {
    r.failures.push_back("protocol frames: " + std::to_string(r.protocol_frames) + ", expected " +
                         std::to_string(*ex.protocol_frames));
  }
  if (ex.adversary_shares_key_with) {
    const auto& who = *ex.adversary_shares_key_with;
    if (who == "none") {
      if (!r.adversary_key_shares.empty()) r.failures.push_back("adversary holds keys: " + r.adversary_key_shares.front());
    } else {
      const bool found = std::any_of(r.adversary_key_shares.begin(), r.adversary_key_shares.end(), [&](const auto& s) {
        return s.size() > who.size() && s.compare(s.size() - who.size(), who.size(), who) == 0;
      });
      if (!found) r.failures.push_back("adversary shares no key with " + who);
    }
  }
}

}  // namespace

ScenarioReport run_scenario(const Scenario& scenario) {
  Simulation sim(scenario);
  return sim.run();
}

// ---- report -----------------------------------------------------------------

const NodeReport& ScenarioReport::node(std::string_view n) const {
  for (const auto& nr : nodes) {
    if (nr.name == n) return nr;
  }
  throw UsageError("report has no node '" + std::string(n) + "'");
}

std::string ScenarioReport::to_text() const {
  std::ostringstream os;
  os << "scenario " << name << " seed=" << seed << " profile=" << crypto::profile_name(profile) << "\n";
  for (const auto& f : frames) {
    os << "  t=" << f.at << " " << f.from << " -> " << f.to << " " << f.type << " " << f.size << "B " << f.verdict;
    if (!f.cookie.empty()) os << " cookie=" << f.cookie;
    os << "\n";
  }
  for (const auto& n : nodes) {
    for (const auto& s : n.sessions) {
      os << "  " << n.name << " session " << s.id << " " << proto::role_name(s.role) << " with " << s.peer << ": "
         << proto::phase_name(s.phase);
      if (s.reason) os << " reason=" << proto::abort_reason_name(*s.reason);
      if (s.peer_reason) os << " peer_reason=" << proto::abort_reason_name(*s.peer_reason);
      if (!s.key_fingerprint.empty()) os << " keys=" << s.key_fingerprint;
      os << "\n";
    }
    if (!n.rejections.empty()) os << "  " << n.name << " rejected " << n.rejections.size() << " handshake(s)\n";
  }
  os << "  frames=" << protocol_frames << " mutual=" << mutual_established << " virtual_end=" << virtual_end_ms
     << "ms\n";
  for (const auto& v : violations) os << "  VIOLATION " << v << "\n";
  for (const auto& f : failures) os << "  EXPECTATION " << f << "\n";
  os << (passed() ? "PASS " : "FAIL ") << name << "\n";
  return os.str();
}

config::Json ScenarioReport::to_json() const {
  using config::Json;
  Json j;
  j["name"] = name;
  j["seed"] = seed;
  j["profile"] = std::string(crypto::profile_name(profile));
  j["passed"] = passed();
  j["protocol_frames"] = protocol_frames;
  j["mutual_established"] = mutual_established;
  j["adversary_key_shares"] = adversary_key_shares;
  j["violations"] = violations;
  j["failures"] = failures;
  j["virtual_end_ms"] = virtual_end_ms;
  j["horizon_reached"] = horizon_reached;
  j["wall_ms"] = wall_ms;
  j["frames"] = Json::array();
  for (const auto& f : frames) {
    j["frames"].push_back({{"at", f.at}, {"from", f.from}, {"to", f.to}, {"type", f.type}, {"size", f.size},
                           {"verdict", f.verdict}, {"cookie", f.cookie}});
  }
  j["nodes"] = Json::array();
  for (const auto& n : nodes) {
    Json nj{{"name", n.name}, {"rogue", n.rogue}, {"identity", n.identity}, {"half_open_peak", n.half_open_peak}};
    nj["sessions"] = Json::array();
    for (const auto& s : n.sessions) {
      Json sj{{"id", s.id},
              {"role", std::string(proto::role_name(s.role))},
              {"phase", std::string(proto::phase_name(s.phase))},
              {"peer", s.peer},
              {"cookie", s.cookie}};
      if (s.reason) sj["reason"] = std::string(proto::abort_reason_name(*s.reason));
      if (s.peer_reason) sj["peer_reason"] = std::string(proto::abort_reason_name(*s.peer_reason));
      if (s.peer_verdict) sj["peer_verdict"] = std::string(tpm::trust_verdict_name(*s.peer_verdict));
      if (!s.key_fingerprint.empty()) sj["key_fingerprint"] = s.key_fingerprint;
      nj["sessions"].push_back(std::move(sj));
    }
    nj["rejections"] = Json::array();
    for (auto r : n.rejections) nj["rejections"].push_back(std::string(proto::abort_reason_name(r)));
    nj["stats"] = {{"undecodable", n.stats.undecodable_frames},
                   {"silent_drops", n.stats.silent_drops},
                   {"unmatched", n.stats.unmatched_frames},
                   {"role_conflicts", n.stats.role_conflicts}};
    j["nodes"].push_back(std::move(nj));
  }
  return j;
}

// ---- scenario files -----------------------------------------------------------

namespace {

using config::Json;
using config::require_keys;

template <typename T>
T field(const Json& j, const char* key, std::string_view ctx) {
  if (!j.contains(key)) throw ConfigError(std::string(ctx) + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(ctx) + ": '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback, std::string_view ctx) {
  return j.contains(key) ? field<T>(j, key, ctx) : fallback;
}

MessageType parse_type(const std::string& s) {
  if (s == "msg1") return MessageType::Msg1;
  if (s == "msg2") return MessageType::Msg2;
  if (s == "msg3") return MessageType::Msg3;
  if (s == "abort") return MessageType::Abort;
  throw ConfigError("unknown message type '" + s + "' (msg1|msg2|msg3|abort)");
}

Phase parse_phase(const std::string& s) {
  if (s == "established") return Phase::Established;
  if (s == "aborted") return Phase::Aborted;
  if (s == "await_msg2") return Phase::AwaitMsg2;
  if (s == "await_msg3") return Phase::AwaitMsg3;
  throw ConfigError("unknown phase '" + s + "'");
}

AbortReason parse_reason(const std::string& s) {
  if (auto r = proto::parse_abort_reason(s)) return *r;
  throw ConfigError("unknown abort reason '" + s + "'");
}

std::vector<AbortReason> parse_reasons(const Json& j, const char* key) {
  std::vector<AbortReason> out;
  if (!j.contains(key)) return out;
  const auto& v = j[key];
  if (v.is_string()) {
    out.push_back(parse_reason(v.get<std::string>()));
  } else {
    for (const auto& r : v) out.push_back(parse_reason(r.get<std::string>()));
  }
  return out;
}

Match parse_match(const Json& j) {
  require_keys(j, {"type", "from", "to", "nth"}, "match");
  Match m;
  if (j.contains("type")) m.type = parse_type(field<std::string>(j, "type", "match"));
  if (j.contains("from")) m.from = field<std::string>(j, "from", "match");
  if (j.contains("to")) m.to = field<std::string>(j, "to", "match");
  if (j.contains("nth")) m.nth = field<int>(j, "nth", "match");
  if (m.nth && *m.nth < 1) throw ConfigError("match: nth is 1-based");
  return m;
}

std::vector<Edit> parse_edits(const Json& j) {
  std::vector<Edit> out;
  if (!j.is_array()) throw ConfigError("edits must be a list");
  for (const auto& e : j) {
    require_keys(e, {"field", "value", "offset", "xor", "set"}, "edit");
    Edit ed;
    if (e.contains("offset")) {
      ed.field = Edit::Field::Byte;
      ed.offset = field<std::size_t>(e, "offset", "edit");
      if (e.contains("set")) ed.set = static_cast<std::uint8_t>(field<int>(e, "set", "edit"));
      else ed.xor_mask = static_cast<std::uint8_t>(field<int>(e, "xor", "edit"));
      out.push_back(ed);
      continue;
    }
    const auto f = field<std::string>(e, "field", "edit");
    const auto& v = e.contains("value") ? e["value"] : Json("random");
    ed.value = v.is_boolean() ? (v.get<bool>() ? "true" : "false") : v.get<std::string>();
    if (f == "cookie") {
      ed.field = Edit::Field::Cookie;
      if (ed.value != "random" && ed.value != "trigger" && ed.value.size() != 2 * kDigestSize) {
        throw ConfigError("cookie edit value must be random, trigger, or 64 hex characters");
      }
    } else if (f == "dh") {
      ed.field = Edit::Field::Dh;
      if (ed.value != "one" && ed.value != "zero" && ed.value != "p_minus_1" && ed.value != "random") {
        throw ConfigError("dh edit value must be one, zero, p_minus_1, or random");
      }
    } else if (f == "nonce") {
      ed.field = Edit::Field::Nonce;
    } else if (f == "vr") {
      ed.field = Edit::Field::Vr;
    } else {
      throw ConfigError("unknown edit field '" + f + "'");
    }
    out.push_back(ed);
  }
  return out;
}

Action parse_action(const Json& j) {
  const auto kind = field<std::string>(j, "action", "adversary action");
  if (kind == "observe") {
    require_keys(j, {"action", "match", "store", "limit"}, "observe");
    return Observe{parse_match(j.value("match", Json::object())), field_or<std::string>(j, "store", "", "observe"),
                   field_or<int>(j, "limit", 0, "observe")};
  }
  if (kind == "drop") {
    require_keys(j, {"action", "match", "limit"}, "drop");
    return Drop{parse_match(j.value("match", Json::object())), field_or<int>(j, "limit", 1, "drop")};
  }
  if (kind == "tamper") {
    require_keys(j, {"action", "match", "edits", "recompute_cookie", "limit"}, "tamper");
    return Tamper{parse_match(j.value("match", Json::object())), parse_edits(j.value("edits", Json::array())),
                  field_or<bool>(j, "recompute_cookie", false, "tamper"), field_or<int>(j, "limit", 1, "tamper")};
  }
  if (kind == "delay") {
    require_keys(j, {"action", "match", "ms", "limit"}, "delay");
    return Delay{parse_match(j.value("match", Json::object())), field<TimeMs>(j, "ms", "delay"),
                 field_or<int>(j, "limit", 1, "delay")};
  }
  if (kind == "replay") {
    require_keys(j, {"action", "stored", "to", "at", "on", "edits", "drop_trigger"}, "replay");
    Replay r;
    r.stored = field<std::string>(j, "stored", "replay");
    r.to = field<std::string>(j, "to", "replay");
    if (j.contains("at")) r.at = field<TimeMs>(j, "at", "replay");
    if (j.contains("on")) r.on = parse_match(j["on"]);
    if (r.at.has_value() == r.on.has_value()) throw ConfigError("replay needs exactly one of 'at' or 'on'");
    if (j.contains("edits")) r.edits = parse_edits(j["edits"]);
    r.drop_trigger = field_or<bool>(j, "drop_trigger", false, "replay");
    return r;
  }
  if (kind == "masquerade") {
    require_keys(j, {"action", "as", "device_key", "aik", "divert"}, "masquerade");
    return Masquerade{field<std::string>(j, "as", "masquerade"), field_or<std::string>(j, "device_key", "own", "masquerade"),
                      field_or<std::string>(j, "aik", "own", "masquerade"), field_or<bool>(j, "divert", true, "masquerade")};
  }
  if (kind == "flood") {
    require_keys(j, {"action", "as", "to", "at", "count", "spacing_ms"}, "flood");
    Flood f{field<std::string>(j, "as", "flood"), field<std::string>(j, "to", "flood"), field_or<TimeMs>(j, "at", 0, "flood"),
            field<int>(j, "count", "flood"), field_or<TimeMs>(j, "spacing_ms", 0, "flood")};
    if (f.count < 1) throw ConfigError("flood count must be positive");
    return f;
  }
  if (kind == "mitm_dh") {
    require_keys(j, {"action", "initiator", "responder"}, "mitm_dh");
    return MitmDh{field<std::string>(j, "initiator", "mitm_dh"), field<std::string>(j, "responder", "mitm_dh")};
  }
  throw ConfigError("unknown adversary action '" + kind + "'");
}

Expectations parse_expect(const Json& j) {
  require_keys(j, {"sessions", "rejections", "abort_counts", "half_open", "mutual_established", "protocol_frames",
                   "adversary_shares_key_with"},
               "expect");
  Expectations ex;
  for (const auto& s : j.value("sessions", Json::array())) {
    require_keys(s, {"node", "session", "phase", "reason", "peer_reason"}, "expected session");
    ex.sessions.push_back({field<std::string>(s, "node", "expected session"),
                           field_or<proto::SessionId>(s, "session", 1, "expected session"),
                           parse_phase(field<std::string>(s, "phase", "expected session")), parse_reasons(s, "reason"),
                           parse_reasons(s, "peer_reason")});
  }
  for (const auto& r : j.value("rejections", Json::array())) {
    require_keys(r, {"node", "reason", "count"}, "expected rejection");
    RejectionExpect re{field<std::string>(r, "node", "expected rejection"), parse_reasons(r, "reason"), std::nullopt};
    if (r.contains("count")) re.count = field<std::size_t>(r, "count", "expected rejection");
    ex.rejections.push_back(std::move(re));
  }
  for (const auto& c : j.value("abort_counts", Json::array())) {
    require_keys(c, {"node", "reason", "count"}, "abort count");
    ex.abort_counts.push_back({field<std::string>(c, "node", "abort count"),
                               parse_reason(field<std::string>(c, "reason", "abort count")),
                               field<std::size_t>(c, "count", "abort count")});
  }
  for (const auto& h : j.value("half_open", Json::array())) {
    require_keys(h, {"node", "at_most", "at_least"}, "half_open");
    HalfOpenExpect he{field<std::string>(h, "node", "half_open"), std::nullopt, std::nullopt};
    if (h.contains("at_most")) he.at_most = field<std::size_t>(h, "at_most", "half_open");
    if (h.contains("at_least")) he.at_least = field<std::size_t>(h, "at_least", "half_open");
    ex.half_open.push_back(std::move(he));
  }
  if (j.contains("mutual_established")) ex.mutual_established = field<std::size_t>(j, "mutual_established", "expect");
  if (j.contains("protocol_frames")) ex.protocol_frames = field<std::size_t>(j, "protocol_frames", "expect");
  if (j.contains("adversary_shares_key_with")) {
    ex.adversary_shares_key_with = field<std::string>(j, "adversary_shares_key_with", "expect");
  }
  return ex;
}

Scenario parse_scenario(const Json& j, const std::filesystem::path& base_dir) {
  require_keys(j, {"name", "description", "profile", "seed", "nodes", "sessions", "adversary", "expect",
                   "link_latency_ms", "horizon_ms"},
               "scenario");
  Scenario s;
  s.name = field<std::string>(j, "name", "scenario");
  const std::string ctx = "scenario '" + s.name + "'";
  s.description = field_or<std::string>(j, "description", "", ctx);
  try {
    s.profile = crypto::parse_profile(field_or<std::string>(j, "profile", "test", ctx));
  } catch (const UsageError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  s.seed = field_or<std::uint64_t>(j, "seed", 1, ctx);
  s.link_latency_ms = field_or<TimeMs>(j, "link_latency_ms", 1, ctx);
  s.horizon_ms = field_or<TimeMs>(j, "horizon_ms", 60000, ctx);

  const auto nodes = j.value("nodes", Json::array({{{"name", "AD1"}}, {{"name", "AD2"}}}));
  for (const auto& nj : nodes) {
    require_keys(nj, {"name", "manifest", "boot_tamper", "attestation_indices", "require_attestation", "half_open_cap",
                      "timeout_ms"},
                 ctx + " node");
    NodeSpec spec;
    spec.name = field<std::string>(nj, "name", ctx);
    spec.manifest = nj.contains("manifest") ? config::manifest_from_json(nj["manifest"], base_dir)
                                            : default_manifest(spec.name);
    if (nj.contains("boot_tamper")) {
      // The device boots a modified image; its peers still hold the original golden values.
      const auto& bt = nj["boot_tamper"];
      require_keys(bt, {"component", "image_text"}, ctx + " boot_tamper");
      spec.provisioned = spec.manifest;
      const auto target = field<std::string>(bt, "component", ctx);
      auto it = std::find_if(spec.manifest.components.begin(), spec.manifest.components.end(),
                             [&](const tpm::BootComponent& c) { return c.name == target; });
      if (it == spec.manifest.components.end()) throw ConfigError(ctx + ": no boot component '" + target + "'");
      const auto text = field<std::string>(bt, "image_text", ctx);
      it->image.assign(text.begin(), text.end());
    }
    if (nj.contains("attestation_indices")) spec.attestation_indices = field<std::vector<int>>(nj, "attestation_indices", ctx);
    spec.require_attestation = field_or<bool>(nj, "require_attestation", true, ctx);
    spec.options.half_open_cap = field_or<std::size_t>(nj, "half_open_cap", 64, ctx);
    spec.options.message_timeout_ms = field_or<TimeMs>(nj, "timeout_ms", 5000, ctx);
    s.nodes.push_back(std::move(spec));
  }
  for (const auto& sj : j.value("sessions", Json::array())) {
    require_keys(sj, {"at", "initiator", "responder"}, ctx + " session");
    s.sessions.push_back({field_or<TimeMs>(sj, "at", 0, ctx), field<std::string>(sj, "initiator", ctx),
                          field<std::string>(sj, "responder", ctx)});
  }
  std::set<std::string> stores;
  for (const auto& aj : j.value("adversary", Json::array())) {
    try {
      s.adversary.push_back(parse_action(aj));
    } catch (const ConfigError& e) {
      throw ConfigError(ctx + ": " + e.what());
    }
    if (auto* o = std::get_if<Observe>(&s.adversary.back()); o && !o->store.empty()) stores.insert(o->store);
  }
  for (const auto& a : s.adversary) {
    if (auto* r = std::get_if<Replay>(&a); r && !stores.count(r->stored)) {
      throw ConfigError(ctx + ": replay of '" + r->stored + "', which no observe action stores");
    }
  }
  if (j.contains("expect")) s.expect = parse_expect(j["expect"]);
  return s;
}

}  // namespace

std::vector<Scenario> parse_scenarios(const Json& j, const std::filesystem::path& base_dir) {
  std::vector<Scenario> out;
  if (j.is_object() && j.contains("scenarios")) {
    require_keys(j, {"scenarios"}, "scenario file");
    for (const auto& s : j["scenarios"]) out.push_back(parse_scenario(s, base_dir));
  } else {
    out.push_back(parse_scenario(j, base_dir));
  }
  if (out.empty()) throw ConfigError("scenario file contains no scenarios");
  return out;
}

std::vector<Scenario> load_scenarios(const std::filesystem::path& path) {
  return parse_scenarios(config::load_json(path), path.parent_path());
}

}  // namespace stcp::harness
