#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "stcp/crypto.hpp"
#include "stcp/transport.hpp"

namespace stcp::cli {

struct KeygenOptions {
  std::filesystem::path out_dir;
  crypto::ParamProfile profile = crypto::ParamProfile::Full;
  std::string label;
};

struct MeasureOptions {
  std::filesystem::path manifest;
  std::vector<int> indices{0, 1, 2, 3, 4, 5, 8};
  std::filesystem::path out;
};

struct NodeOptions {
  std::filesystem::path config;
  std::string role;  // initiate | listen
  std::string peer;
  int wait_ms = 30000;
};

struct AttackOptions {
  std::vector<std::filesystem::path> scenarios;
  std::optional<std::filesystem::path> json_out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

struct BenchOptions {
  std::optional<std::filesystem::path> config;
  int repetitions = 0;
  crypto::ParamProfile profile = crypto::ParamProfile::Full;
  net::BenchLink link = net::BenchLink::Tcp;
  std::optional<std::filesystem::path> json_out;
};

struct ResumeOptions {
  std::filesystem::path config;
  int vl = -1;
  std::string direction;
  std::string needs = "both";
  std::optional<std::string> flight;
};

/// Reference figures from the original Raspberry Pi test bed, printed next
/// to local measurements for context only.
inline constexpr double kReferenceFullKeysMs = 4582.44;
inline constexpr double kReferenceReducedKeysMs = 1201.50;

/// Each command writes its report to `out` and returns the process exit code.
/// Failures surface as stcp::Error exceptions; see exit_code_for().
int cmd_keygen(const KeygenOptions& o, std::ostream& out);
int cmd_measure(const MeasureOptions& o, std::ostream& out);
int cmd_node(const NodeOptions& o, std::ostream& out, std::ostream& err);
int cmd_attack(const AttackOptions& o, std::ostream& out, std::ostream& err);
net::BenchReport cmd_bench(const BenchOptions& o, std::ostream& out);
int cmd_resume(const ResumeOptions& o, std::ostream& out);

/// Full CLI entry point; never throws.
int run(int argc, char** argv);

}  // namespace stcp::cli
