#include "stcp/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "stcp/error.hpp"

namespace stcp::net {

using Clock = std::chrono::steady_clock;

namespace {

std::atomic<std::uint64_t> g_frames_sent{0};

std::string errno_text() { return std::strerror(errno); }

int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<Millis>(deadline - Clock::now()).count();
  return static_cast<int>(std::clamp<long long>(left, 0, 1 << 30));
}

proto::TimeMs now_ms() {
  return std::chrono::duration_cast<Millis>(Clock::now().time_since_epoch()).count();
}

void send_all(Transport& t, const std::vector<proto::Outgoing>& out, DriverResult& result) {
  for (const auto& o : out) {
    try {
      t.send(o.frame);
      ++result.frames_sent;
    } catch (const TransportError& e) {
      // Peers close right after their last frame; a lost Abort is harmless.
      spdlog::debug("send failed: {}", e.what());
    }
  }
}

}  // namespace

std::uint64_t frames_sent_total() { return g_frames_sent.load(); }

// ---- memory ---------------------------------------------------------------

std::pair<std::unique_ptr<MemoryTransport>, std::unique_ptr<MemoryTransport>> MemoryTransport::pair() {
  auto ab = std::make_shared<Channel>();
  auto ba = std::make_shared<Channel>();
  return {std::unique_ptr<MemoryTransport>(new MemoryTransport(ba, ab)),
          std::unique_ptr<MemoryTransport>(new MemoryTransport(ab, ba))};
}

void MemoryTransport::send(BytesView frame) {
  std::lock_guard lock(out_->mu);
  if (out_->closed) throw TransportError("memory transport closed");
  out_->queue.emplace_back(frame.begin(), frame.end());
  ++g_frames_sent;
  out_->cv.notify_all();
}

std::optional<Bytes> MemoryTransport::receive(Millis timeout) {
  std::unique_lock lock(in_->mu);
  in_->cv.wait_for(lock, timeout, [&] { return !in_->queue.empty() || in_->closed; });
  if (!in_->queue.empty()) {
    Bytes f = std::move(in_->queue.front());
    in_->queue.pop_front();
    return f;
  }
  if (in_->closed) throw TransportError("peer closed");
  return std::nullopt;
}

void MemoryTransport::close() {
  for (auto* ch : {in_.get(), out_.get()}) {
    std::lock_guard lock(ch->mu);
    ch->closed = true;
    ch->cv.notify_all();
  }
}

MemoryTransport::~MemoryTransport() { close(); }

// ---- tcp ------------------------------------------------------------------

Endpoint Endpoint::parse(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("address '" + text + "' is not host:port");
  }
  Endpoint e;
  e.host = text.substr(0, colon);
  try {
    const auto port = std::stoul(text.substr(colon + 1));
    if (port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw ConfigError("address '" + text + "' has an invalid port");
  }
  return e;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

namespace {

sockaddr_in resolve(const Endpoint& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(e.host.c_str(), nullptr, &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + e.host + ": " + ::gai_strerror(rc));
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  ::freeaddrinfo(res);
  addr.sin_port = htons(e.port);
  return addr;
}

}  // namespace

std::unique_ptr<TcpTransport> TcpTransport::connect(const Endpoint& to, Millis timeout) {
  const auto addr = resolve(to);
  const auto deadline = Clock::now() + timeout;
  // Refusals are retried until the deadline: the listener may still be starting.
  for (;;) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC | SOCK_NONBLOCK, 0);
    if (fd < 0) throw TransportError("socket: " + errno_text());
    auto transport = std::make_unique<TcpTransport>(fd);
    int err = 0;
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
      err = errno;
      if (err == EINPROGRESS) {
        pollfd p{fd, POLLOUT, 0};
        int rc = ::poll(&p, 1, remaining_ms(deadline));
        if (rc == 0) throw TimeoutError("connect to " + to.str() + " timed out");
        socklen_t len = sizeof err;
        err = 0;
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        if (rc < 0) err = errno;
      }
    }
    if (err == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return transport;
    }
    if (err != ECONNREFUSED) throw TransportError("connect to " + to.str() + ": " + std::strerror(err));
    if (Clock::now() + Millis(100) >= deadline) {
      throw TimeoutError("connect to " + to.str() + " timed out (connection refused)");
    }
    std::this_thread::sleep_for(Millis(100));
  }
}

TcpTransport::~TcpTransport() { close(); }

void TcpTransport::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TcpTransport::send(BytesView frame) {
  if (fd_ < 0) throw TransportError("tcp transport closed");
  if (frame.size() > kMaxFrame) throw TransportError("frame exceeds maximum size");
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(frame.size()));
  w.raw(frame);
  const auto& data = w.bytes();
  std::size_t sent = 0;
  while (sent < data.size()) {
    auto n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        pollfd p{fd_, POLLOUT, 0};
        ::poll(&p, 1, 1000);
        continue;
      }
      throw TransportError("send: " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
  ++g_frames_sent;
}

std::optional<Bytes> TcpTransport::receive(Millis timeout) {
  if (fd_ < 0) throw TransportError("tcp transport closed");
  const auto deadline = Clock::now() + timeout;
  for (;;) {
    if (buffer_.size() >= 4) {
      ByteReader r(buffer_);
      const auto len = r.u32();
      if (len > kMaxFrame) throw TransportError("peer announced oversized frame");
      if (buffer_.size() >= 4 + len) {
        Bytes frame(buffer_.begin() + 4, buffer_.begin() + 4 + len);
        buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + len);
        return frame;
      }
    }
    pollfd p{fd_, POLLIN, 0};
    int rc = ::poll(&p, 1, remaining_ms(deadline));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw TransportError("poll: " + errno_text());
    }
    if (rc == 0) return std::nullopt;
    std::uint8_t chunk[4096];
    auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError("recv: " + errno_text());
    }
    if (n == 0) throw TransportError("peer closed");
    buffer_.insert(buffer_.end(), chunk, chunk + n);
  }
}

TcpListener::TcpListener(const Endpoint& bind) {
  auto addr = resolve(bind);
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw TransportError("socket: " + errno_text());
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
    const auto err = errno_text();
    ::close(fd_);
    throw TransportError("listen on " + bind.str() + ": " + err);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_ = Endpoint{bind.host, ntohs(addr.sin_port)};
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpTransport> TcpListener::accept(Millis timeout) {
  pollfd p{fd_, POLLIN, 0};
  int rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (rc == 0) throw TimeoutError("no connection on " + bound_.str() + " within " + std::to_string(timeout.count()) + " ms");
  if (rc < 0) throw TransportError("poll: " + errno_text());
  int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC | SOCK_NONBLOCK);
  if (fd < 0) throw TransportError("accept: " + errno_text());
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return std::make_unique<TcpTransport>(fd);
}

// ---- drivers --------------------------------------------------------------

DriverResult run_initiator(proto::Node& node, const proto::DeviceIdentity& peer, Transport& transport) {
  DriverResult result;
  const auto start = Clock::now();
  auto r = node.start_session(peer, now_ms());
  const auto id = *r.session;
  send_all(transport, r.out, result);
  std::optional<Clock::time_point> confirm_by;

  for (;;) {
    const auto& st = node.session(id);
    if (st.phase == proto::Phase::Aborted) break;
    if (st.phase == proto::Phase::Established && !confirm_by) {
      confirm_by = Clock::now() + Millis(node.options().message_timeout_ms);
    }
    Millis wait = confirm_by ? Millis(remaining_ms(*confirm_by))
                             : Millis(std::max<proto::TimeMs>(0, node.next_deadline().value_or(now_ms()) - now_ms()));
    std::optional<Bytes> frame;
    try {
      frame = transport.receive(wait);
    } catch (const TransportError&) {
      if (confirm_by) {
        result.confirmed = true;
      } else {
        node.abort(id, proto::AbortReason::PeerAborted);
      }
      break;
    }
    if (!frame) {
      if (confirm_by) break;  // established, but the responder never confirmed
      send_all(transport, node.on_tick(now_ms()), result);
      continue;
    }
    ++result.frames_received;
    send_all(transport, node.on_frame(*frame, now_ms()).out, result);
  }
  result.elapsed = Clock::now() - start;
  result.state = node.session(id);
  spdlog::debug("initiator finished: {}", proto::phase_name(result.state.phase));
  return result;
}

DriverResult run_responder(proto::Node& node, Transport& transport) {
  DriverResult result;
  std::optional<proto::SessionId> id;
  std::optional<Clock::time_point> start;
  const auto rejected_before = node.rejections().size();
  const auto first_deadline = Clock::now() + Millis(node.options().message_timeout_ms);

  for (;;) {
    if (id && node.session(*id).terminal()) break;
    Millis wait = id ? Millis(std::max<proto::TimeMs>(0, node.next_deadline().value_or(now_ms()) - now_ms()))
                     : Millis(remaining_ms(first_deadline));
    std::optional<Bytes> frame;
    try {
      frame = transport.receive(wait);
    } catch (const TransportError&) {
      if (!id) throw;
      node.abort(*id, proto::AbortReason::PeerAborted);
      break;
    }
    if (!frame) {
      if (!id) {
        transport.close();
        throw TimeoutError("no handshake request within " + std::to_string(node.options().message_timeout_ms) + " ms");
      }
      send_all(transport, node.on_tick(now_ms()), result);
      continue;
    }
    if (!start) start = Clock::now();
    ++result.frames_received;
    auto reaction = node.on_frame(*frame, now_ms());
    send_all(transport, reaction.out, result);
    if (!id && reaction.session) id = reaction.session;
    if (!id && node.rejections().size() > rejected_before) {
      result.state = node.rejections().back();
      break;
    }
  }
  if (id) result.state = node.session(*id);
  result.elapsed = start ? Clock::now() - *start : std::chrono::nanoseconds{0};
  transport.close();
  spdlog::debug("responder finished: {}", proto::phase_name(result.state.phase));
  return result;
}

// ---- bench ----------------------------------------------------------------

LatencyStats LatencyStats::from_samples(std::vector<double> samples) {
  if (samples.empty()) throw UsageError("no latency samples");
  LatencyStats s;
  s.samples_ms = samples;
  std::sort(samples.begin(), samples.end());
  const auto n = samples.size();
  s.min_ms = samples.front();
  s.max_ms = samples.back();
  s.median_ms = n % 2 ? samples[n / 2] : (samples[n / 2 - 1] + samples[n / 2]) / 2.0;
  s.mean_ms = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  return s;
}

namespace {

PhaseBreakdown mean_phases(const proto::PhaseTimings& total, int reps) {
  auto ms = [&](std::chrono::nanoseconds d) { return std::chrono::duration<double, std::milli>(d).count() / reps; };
  return PhaseBreakdown{ms(total.dh), ms(total.sign), ms(total.verify), ms(total.seal)};
}

std::string describe(const proto::HandshakeState& st) {
  std::string s(proto::phase_name(st.phase));
  if (st.abort_reason) s += "(" + std::string(proto::abort_reason_name(*st.abort_reason)) + ")";
  if (st.peer_abort_reason) s += " peer=" + std::string(proto::abort_reason_name(*st.peer_abort_reason));
  return s;
}

}  // namespace

BenchReport bench_handshake(const proto::Device& initiator, const proto::Device& responder, int repetitions,
                            BenchLink link) {
  if (repetitions < 1) throw UsageError("repetitions must be at least 1");
  proto::Node init_node(initiator);
  proto::Node resp_node(responder);
  std::optional<TcpListener> listener;
  if (link == BenchLink::Tcp) listener.emplace(Endpoint{"127.0.0.1", 0});

  std::vector<double> samples;
  proto::PhaseTimings init_total, resp_total;
  for (int rep = 0; rep < repetitions; ++rep) {
    std::unique_ptr<Transport> client;
    std::unique_ptr<Transport> server;
    std::exception_ptr server_error;
    DriverResult served;
    std::thread server_thread;
    if (link == BenchLink::Memory) {
      auto [a, b] = MemoryTransport::pair();
      client = std::move(a);
      server = std::move(b);
      server_thread = std::thread([&] {
        try {
          served = run_responder(resp_node, *server);
        } catch (...) {
          server_error = std::current_exception();
        }
      });
    } else {
      server_thread = std::thread([&] {
        try {
          auto conn = listener->accept(Millis(10000));
          served = run_responder(resp_node, *conn);
        } catch (...) {
          server_error = std::current_exception();
        }
      });
      client = TcpTransport::connect(listener->endpoint(), Millis(10000));
    }
    auto ran = run_initiator(init_node, responder.identity, *client);
    client->close();
    server_thread.join();
    if (server_error) std::rethrow_exception(server_error);
    if (ran.state.phase != proto::Phase::Established || served.state.phase != proto::Phase::Established) {
      throw ProtocolViolation("benchmark run " + std::to_string(rep + 1) + " failed: initiator " + describe(ran.state) +
                              ", responder " + describe(served.state));
    }
    samples.push_back(std::chrono::duration<double, std::milli>(ran.elapsed).count());
    init_total += ran.state.timings;
    resp_total += served.state.timings;
    init_node.prune_finished();
    resp_node.prune_finished();
  }

  BenchReport report;
  report.repetitions = static_cast<std::size_t>(repetitions);
  report.latency = LatencyStats::from_samples(std::move(samples));
  report.initiator = mean_phases(init_total, repetitions);
  report.responder = mean_phases(resp_total, repetitions);
  return report;
}

}  // namespace stcp::net
