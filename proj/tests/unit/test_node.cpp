#include "doctest.h"

#include "stcp/error.hpp"
#include "stcp/node.hpp"
#include "support.hpp"

using namespace stcp;
using namespace stcp::proto;

namespace {

std::shared_ptr<crypto::RandomSource> det(std::uint64_t seed, const char* stream) {
  return std::make_shared<crypto::DeterministicRandom>(seed, stream);
}

}  // namespace

TEST_SUITE("node") {

TEST_CASE("three frames establish both sides") {
  auto d = testing::device_pair();
  Node a(d[0], det(1, "a")), b(d[1], det(1, "b"));
  auto start = a.start_session(d[1].identity, 0);
  REQUIRE(start.session);
  CHECK(testing::pump({&a, &b}, start.out) == 3);
  const auto& sa = a.session(*start.session);
  REQUIRE(b.session_ids().size() == 1);
  const auto& sb = b.session(b.session_ids().front());
  CHECK(sa.phase == Phase::Established);
  CHECK(sb.phase == Phase::Established);
  CHECK(sa.keys->k_e == sb.keys->k_e);
  CHECK(b.half_open() == 0);
  CHECK(a.next_deadline() == std::nullopt);
  CHECK(a.find_by_cookie(sa.cookie) == start.session);
}

TEST_CASE("start_session preconditions") {
  auto d = testing::device_pair();
  Node a(d[0], det(2, "a"));
  CHECK_THROWS_AS(a.start_session(DeviceIdentity{}, 0), ProvisioningError);
  a.start_session(d[1].identity, 0);
  CHECK_THROWS_AS(a.start_session(d[1].identity, 0), StateError);
  CHECK_THROWS_AS(Node(d[0], nullptr, NodeOptions{0, 10}), ConfigError);
}

TEST_CASE("timeouts abort and notify the peer") {
  auto d = testing::device_pair();
  Node a(d[0], det(3, "a"), NodeOptions{64, 100});
  auto start = a.start_session(d[1].identity, 0);
  CHECK(a.next_deadline() == 100);
  CHECK(a.on_tick(99).empty());
  auto out = a.on_tick(100);
  REQUIRE(out.size() == 1);
  CHECK(out[0].to == d[1].identity);
  CHECK(std::get<Abort>(decode(out[0].frame)).reason == AbortReason::Timeout);
  CHECK(a.session(*start.session).abort_reason == AbortReason::Timeout);
  // The peer slot is free again.
  CHECK_NOTHROW(a.start_session(d[1].identity, 200));
}

TEST_CASE("responder abort reaches an established initiator") {
  auto d = testing::device_pair();
  Node a(d[0], det(4, "a")), b(d[1], det(4, "b"));
  auto start = a.start_session(d[1].identity, 0);
  auto r2 = b.on_frame(start.out[0].frame, 0);
  auto r3 = a.on_frame(r2.out[0].frame, 0);
  CHECK(a.session(*start.session).phase == Phase::Established);
  // Responder gives up before Msg3 arrives.
  auto ab = b.abort(*r2.session, AbortReason::Timeout);
  a.on_frame(ab.frame, 0);
  CHECK(a.session(*start.session).phase == Phase::Aborted);
  CHECK(a.session(*start.session).abort_reason == AbortReason::PeerAborted);
  CHECK(a.session(*start.session).peer_abort_reason == AbortReason::Timeout);
  // The late Msg3 no longer matches anything.
  b.on_frame(r3.out[0].frame, 0);
  CHECK(b.stats().unmatched_frames == 1);
  CHECK_THROWS_AS(b.abort(*r2.session, AbortReason::Timeout), StateError);
}

TEST_CASE("half-open cap evicts the oldest") {
  auto d = testing::device_pair();
  Node b(d[1], det(5, "b"), NodeOptions{4, 1000});
  std::vector<Bytes> firsts;
  for (int i = 0; i < 6; ++i) {
    Node a(d[0], det(5 + i, "a"));
    auto s = a.start_session(d[1].identity, 0);
    auto r = b.on_frame(s.out[0].frame, i);
    CHECK(b.half_open() <= 4);
    if (i >= 4) {
      REQUIRE(r.out.size() == 2);
      CHECK(std::get<Abort>(decode(r.out[0].frame)).reason == AbortReason::Evicted);
    }
  }
  CHECK(b.half_open_peak() == 4);
  std::size_t evicted = 0;
  for (auto id : b.session_ids()) evicted += b.session(id).abort_reason == AbortReason::Evicted;
  CHECK(evicted == 2);
  CHECK(b.session(1).abort_reason == AbortReason::Evicted);
  CHECK(b.session(2).abort_reason == AbortReason::Evicted);
}

TEST_CASE("duplicate Msg1 is answered once") {
  auto d = testing::device_pair();
  Node a(d[0], det(6, "a")), b(d[1], det(6, "b"));
  auto s = a.start_session(d[1].identity, 0);
  CHECK(b.on_frame(s.out[0].frame, 0).out.size() == 1);
  CHECK(b.on_frame(s.out[0].frame, 0).out.empty());
  CHECK(b.half_open() == 1);
}

TEST_CASE("simultaneous initiation keeps one handshake") {
  auto d = testing::device_pair();
  Node a(d[0], det(7, "a")), b(d[1], det(7, "b"));
  auto sa = a.start_session(d[1].identity, 0);
  auto sb = b.start_session(d[0].identity, 0);
  std::vector<Outgoing> initial = sa.out;
  initial.insert(initial.end(), sb.out.begin(), sb.out.end());
  testing::pump({&a, &b}, initial);
  const bool a_low = d[0].identity < d[1].identity;
  auto& low = a_low ? a : b;
  auto& high = a_low ? b : a;
  const auto low_session = a_low ? *sa.session : *sb.session;
  const auto high_session = a_low ? *sb.session : *sa.session;
  CHECK(low.session(low_session).phase == Phase::Established);
  CHECK(high.session(high_session).abort_reason == AbortReason::RoleConflict);
  CHECK(low.stats().role_conflicts == 1);
  CHECK(high.stats().role_conflicts == 1);
  std::size_t established = 0;
  for (auto id : high.session_ids()) established += high.session(id).phase == Phase::Established;
  CHECK(established == 1);
}

TEST_CASE("garbage and stray frames are counted, not fatal") {
  auto d = testing::device_pair();
  Node b(d[1], det(8, "b"));
  CHECK(b.on_frame(Bytes{1, 2, 3}, 0).out.empty());
  CHECK(b.stats().undecodable_frames == 1);
  Abort stray{AbortReason::Timeout, {}};
  b.on_frame(encode(stray), 0);
  CHECK(b.stats().unmatched_frames == 1);
  Msg3 m3;
  m3.sealed_auth.ciphertext = Bytes(16, 0);
  b.on_frame(encode(m3), 0);
  CHECK(b.stats().unmatched_frames == 2);
}

TEST_CASE("rejected Msg1s are logged outside session storage") {
  auto d = testing::device_pair();
  Node a(d[0], det(9, "a")), b(d[1], det(9, "b"));
  auto s = a.start_session(d[1].identity, 0);
  auto m1 = std::get<Msg1>(decode(s.out[0].frame));
  m1.n_ad1.bytes[0] ^= 1;
  auto r = b.on_frame(encode(m1), 0);
  REQUIRE(r.out.size() == 1);
  CHECK(b.session_ids().empty());
  REQUIRE(b.rejections().size() == 1);
  CHECK(b.rejections().front().abort_reason == AbortReason::CookieMismatch);
  a.on_frame(r.out[0].frame, 0);
  CHECK(a.session(*s.session).peer_abort_reason == AbortReason::CookieMismatch);
}

TEST_CASE("prune_finished") {
  auto d = testing::device_pair();
  Node a(d[0], det(10, "a")), b(d[1], det(10, "b"));
  auto s = a.start_session(d[1].identity, 0);
  testing::pump({&a, &b}, s.out);
  a.prune_finished();
  CHECK(a.session_ids().empty());
  CHECK_THROWS_AS(a.session(*s.session), StateError);
}

}  // TEST_SUITE
