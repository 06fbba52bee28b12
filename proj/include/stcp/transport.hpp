#pragma once

// Message-oriented transports and the blocking drivers that run one handshake
// over them. The in-memory adversarial network lives in harness.hpp; this is
// the plain path used by the CLI and the benchmark.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stcp/bytes.hpp"
#include "stcp/node.hpp"

namespace stcp::net {

using Millis = std::chrono::milliseconds;

/// One endpoint of a bidirectional, frame-preserving channel.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Throws TransportError when the channel is closed or broken.
  virtual void send(BytesView frame) = 0;
  /// Next frame, or nullopt on timeout. Throws TransportError once the peer
  /// has closed and no frames remain.
  virtual std::optional<Bytes> receive(Millis timeout) = 0;
  virtual void close() = 0;
};

/// Process-wide count of frames handed to any Transport::send. Lets callers
/// assert that an operation put nothing on the wire.
std::uint64_t frames_sent_total();

/// Two connected in-process endpoints. Thread-safe.
class MemoryTransport final : public Transport {
 public:
  static std::pair<std::unique_ptr<MemoryTransport>, std::unique_ptr<MemoryTransport>> pair();

  void send(BytesView frame) override;
  std::optional<Bytes> receive(Millis timeout) override;
  void close() override;
  ~MemoryTransport() override;

 private:
  struct Channel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Bytes> queue;
    bool closed = false;
  };
  MemoryTransport(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port". Throws ConfigError.
  static Endpoint parse(const std::string& text);
  std::string str() const;
};

/// TCP stream with a 4-byte big-endian length prefix per frame.
class TcpTransport final : public Transport {
 public:
  /// Throws TimeoutError if the connection is not up within `timeout`,
  /// TransportError on refusal or resolution failure.
  static std::unique_ptr<TcpTransport> connect(const Endpoint& to, Millis timeout);
  explicit TcpTransport(int fd) : fd_(fd) {}
  ~TcpTransport() override;

  void send(BytesView frame) override;
  std::optional<Bytes> receive(Millis timeout) override;
  void close() override;

  static constexpr std::uint32_t kMaxFrame = 1u << 20;

 private:
  int fd_ = -1;
  /// Bytes read but not yet returned as a whole frame.
  Bytes buffer_;
};

class TcpListener {
 public:
  /// Port 0 picks a free port; see endpoint().
  explicit TcpListener(const Endpoint& bind);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  /// Throws TimeoutError when nobody connects in time.
  std::unique_ptr<TcpTransport> accept(Millis timeout);
  Endpoint endpoint() const { return bound_; }

 private:
  int fd_ = -1;
  Endpoint bound_;
};

struct DriverResult {
  proto::HandshakeState state;
  /// From the first frame sent or received to the local terminal state.
  std::chrono::nanoseconds elapsed{0};
  std::size_t frames_sent = 0;
  std::size_t frames_received = 0;
  /// Initiator only: the responder closed cleanly after Msg3.
  bool confirmed = false;
};

/// Runs one handshake as initiator. After Established it waits for the
/// responder to close (confirmation) or to send an Abort, which demotes the
/// result to Aborted.
DriverResult run_initiator(proto::Node& node, const proto::DeviceIdentity& peer, Transport& transport);
/// Serves exactly one handshake, then closes the transport.
DriverResult run_responder(proto::Node& node, Transport& transport);

struct LatencyStats {
  std::vector<double> samples_ms;
  double min_ms = 0;
  double median_ms = 0;
  double mean_ms = 0;
  double max_ms = 0;

  static LatencyStats from_samples(std::vector<double> samples_ms);
};

/// Mean per-phase time per handshake, in milliseconds.
struct PhaseBreakdown {
  double dh_ms = 0;
  double sign_ms = 0;
  double verify_ms = 0;
  double seal_ms = 0;
};

struct BenchReport {
  LatencyStats latency;
  PhaseBreakdown initiator;
  PhaseBreakdown responder;
  std::size_t repetitions = 0;
};

enum class BenchLink { Memory, Tcp };

/// Runs `repetitions` handshakes between the two devices, responder on a
/// background thread. Latency is taken at the initiator, from sending Msg1
/// to the responder's confirmation. Throws UsageError for repetitions < 1
/// and ProtocolViolation (with the failing run's state) on any abort.
BenchReport bench_handshake(const proto::Device& initiator, const proto::Device& responder, int repetitions,
                            BenchLink link = BenchLink::Tcp);

}  // namespace stcp::net
