#pragma once

#include <unistd.h>

#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stcp/harness.hpp"
#include "stcp/node.hpp"

namespace testing {

inline stcp::Bytes to_bytes(const oracle::Bytes& b) { return stcp::Bytes(b.begin(), b.end()); }
inline oracle::Bytes to_oracle(stcp::BytesView b) { return oracle::Bytes(b.begin(), b.end()); }

/// Two mutually provisioned test-profile devices, AD1 and AD2.
inline std::vector<stcp::proto::Device> device_pair(std::uint64_t seed = 7) {
  std::vector<stcp::harness::NodeSpec> specs(2);
  specs[0].name = "AD1";
  specs[0].manifest = stcp::harness::default_manifest("AD1");
  specs[1].name = "AD2";
  specs[1].manifest = stcp::harness::default_manifest("AD2");
  return stcp::harness::provision(specs, stcp::crypto::ParamProfile::Test, seed);
}

/// Delivers frames between nodes until nothing is left in flight. Returns
/// the number of frames carried.
inline std::size_t pump(std::vector<stcp::proto::Node*> nodes, std::vector<stcp::proto::Outgoing> initial,
                        stcp::proto::TimeMs now = 0) {
  std::deque<stcp::proto::Outgoing> q(initial.begin(), initial.end());
  std::size_t carried = 0;
  while (!q.empty()) {
    auto o = std::move(q.front());
    q.pop_front();
    ++carried;
    for (auto* n : nodes) {
      if (n->device().identity == o.to) {
        auto r = n->on_frame(o.frame, now);
        for (auto& x : r.out) q.push_back(std::move(x));
        break;
      }
    }
  }
  return carried;
}

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("stcp-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::filesystem::path path_;
};

}  // namespace testing
