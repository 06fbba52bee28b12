#include "doctest.h"

#include <thread>

#include "stcp/error.hpp"
#include "stcp/transport.hpp"
#include "support.hpp"

using namespace stcp;
using namespace stcp::net;
using namespace std::chrono_literals;

TEST_SUITE("transport") {

TEST_CASE("memory transport preserves frames and order") {
  auto [a, b] = MemoryTransport::pair();
  const auto before = frames_sent_total();
  a->send(Bytes{1});
  a->send(Bytes{2, 3});
  CHECK(frames_sent_total() - before == 2);
  CHECK(*b->receive(10ms) == Bytes{1});
  CHECK(*b->receive(10ms) == Bytes{2, 3});
  CHECK_FALSE(b->receive(5ms).has_value());
  a->close();
  CHECK_THROWS_AS(b->receive(5ms), TransportError);
  CHECK_THROWS_AS(a->send(Bytes{1}), TransportError);
}

TEST_CASE("endpoint parsing") {
  const auto e = Endpoint::parse("10.0.0.2:7400");
  CHECK(e.host == "10.0.0.2");
  CHECK(e.port == 7400);
  CHECK(e.str() == "10.0.0.2:7400");
  CHECK_THROWS_AS(Endpoint::parse("nohost"), ConfigError);
  CHECK_THROWS_AS(Endpoint::parse("h:99999"), ConfigError);
  CHECK_THROWS_AS(Endpoint::parse("h:x"), ConfigError);
}

TEST_CASE("tcp framing over loopback") {
  TcpListener listener(Endpoint{"127.0.0.1", 0});
  REQUIRE(listener.endpoint().port != 0);
  std::unique_ptr<TcpTransport> server;
  std::thread t([&] { server = listener.accept(2000ms); });
  auto client = TcpTransport::connect(listener.endpoint(), 2000ms);
  t.join();
  REQUIRE(server);

  const Bytes big(200000, 0x5a);
  client->send(Bytes{9, 8, 7});
  client->send(big);
  client->send(Bytes{});
  CHECK(*server->receive(1000ms) == Bytes{9, 8, 7});
  CHECK(*server->receive(1000ms) == big);
  CHECK(server->receive(1000ms)->empty());
  CHECK_FALSE(server->receive(20ms).has_value());
  server->send(Bytes{1});
  CHECK(*client->receive(1000ms) == Bytes{1});
  client->close();
  CHECK_THROWS_AS(server->receive(1000ms), TransportError);
}

TEST_CASE("tcp timeouts") {
  TcpListener listener(Endpoint{"127.0.0.1", 0});
  CHECK_THROWS_AS(listener.accept(30ms), TimeoutError);
  Endpoint dead;
  {
    TcpListener probe(Endpoint{"127.0.0.1", 0});
    dead = probe.endpoint();
  }
  CHECK_THROWS_AS(TcpTransport::connect(dead, 250ms), TimeoutError);
}

TEST_CASE("drivers run a handshake over memory and tcp") {
  const auto d = testing::device_pair();
  for (auto link : {BenchLink::Memory, BenchLink::Tcp}) {
    const auto rep = bench_handshake(d[0], d[1], 3, link);
    CHECK(rep.repetitions == 3);
    CHECK(rep.latency.samples_ms.size() == 3);
    CHECK(rep.latency.min_ms <= rep.latency.median_ms);
    CHECK(rep.latency.median_ms <= rep.latency.max_ms);
    CHECK(rep.initiator.dh_ms > 0);
    CHECK(rep.responder.sign_ms > 0);
  }
  CHECK_THROWS_AS(bench_handshake(d[0], d[1], 0), UsageError);
}

TEST_CASE("drivers report a rejected handshake") {
  auto d = testing::device_pair();
  d[1].tpm.reset();
  auto m = stcp::harness::default_manifest("AD2");
  m.components.back().image = Bytes{0xde, 0xad};
  d[1].tpm.boot(m);
  proto::Node a(d[0]), b(d[1]);
  auto [ta, tb] = MemoryTransport::pair();
  DriverResult rb;
  std::thread t([&, &tb = tb] { rb = run_responder(b, *tb); });
  const auto ra = run_initiator(a, d[1].identity, *ta);
  t.join();
  CHECK(ra.state.phase == proto::Phase::Aborted);
  CHECK(ra.state.abort_reason == proto::AbortReason::AttestationStateMismatch);
  CHECK(rb.state.abort_reason == proto::AbortReason::PeerAborted);
  CHECK(rb.state.peer_abort_reason == proto::AbortReason::AttestationStateMismatch);
  CHECK_FALSE(ra.confirmed);
  CHECK_THROWS_AS(bench_handshake(d[0], d[1], 1, BenchLink::Memory), ProtocolViolation);
}

TEST_CASE("latency statistics") {
  const auto s = LatencyStats::from_samples({4, 1, 3, 2});
  CHECK(s.min_ms == 1);
  CHECK(s.max_ms == 4);
  CHECK(s.median_ms == doctest::Approx(2.5));
  CHECK(s.mean_ms == doctest::Approx(2.5));
  CHECK(LatencyStats::from_samples({5, 1, 9}).median_ms == 5);
}

}  // TEST_SUITE
