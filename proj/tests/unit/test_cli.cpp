#include "doctest.h"

#include <fstream>
#include <sstream>
#include <thread>

#include "cli.hpp"
#include "stcp/config.hpp"
#include "stcp/error.hpp"
#include "support.hpp"

using namespace stcp;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using config::Json;

namespace {

std::uint16_t free_port() {
  net::TcpListener probe(net::Endpoint{"127.0.0.1", 0});
  return probe.endpoint().port;
}

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "stcp");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

/// keygen + measure for two devices, plus a node.json for each that names
/// the other as its only peer.
std::array<fs::path, 2> provision_pair(const testing::TempDir& dir) {
  const std::string names[] = {"a", "b"};
  const std::uint16_t ports[] = {free_port(), free_port()};
  for (const auto& n : names) {
    std::ostringstream out;
    REQUIRE(cli::cmd_keygen({dir / n, crypto::ParamProfile::Test, n}, out) == 0);
    CHECK(out.str().rfind("identity ", 0) == 0);
    config::write_json(dir / n / "manifest.json", config::manifest_to_json(harness::default_manifest(n)));
    cli::MeasureOptions m;
    m.manifest = dir / n / "manifest.json";
    m.out = dir / n / "golden.json";
    REQUIRE(cli::cmd_measure(m, out) == 0);
  }
  std::array<fs::path, 2> paths;
  for (int i = 0; i < 2; ++i) {
    const auto& me = names[i];
    const auto& other = names[1 - i];
    const auto bundle = config::load_json(dir / me / "bundle.json");
    Json cfg{{"label", me},
             {"identity", bundle["identity"]},
             {"profile", "test"},
             {"signing_key", "device.pem"},
             {"aik", "aik.pem"},
             {"manifest", "manifest.json"},
             {"store_a", "store/a.bin"},
             {"store_b", "store/b.bin"},
             {"storage_key_file", "storage.key"},
             {"flight_id", "FL7"},
             {"listen", "127.0.0.1:" + std::to_string(ports[i])},
             {"peers", Json::array({Json{{"label", other},
                                         {"bundle", "../" + other + "/bundle.json"},
                                         {"golden", "../" + other + "/golden.json"},
                                         {"address", "127.0.0.1:" + std::to_string(ports[1 - i])}}})}};
    paths[i] = dir / me / "node.json";
    config::write_json(paths[i], cfg);
  }
  return paths;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("keygen, measure, node over tcp, then resume without the network") {
  testing::TempDir dir("cli");
  const auto cfg = provision_pair(dir);
  CHECK((fs::status(dir / "a/device.pem").permissions() & fs::perms::others_read) == fs::perms::none);

  std::ostringstream lout, lerr, iout, ierr;
  int listen_rc = -1;
  std::thread listener([&] { listen_rc = cli::cmd_node({cfg[1], "listen", "", 5000}, lout, lerr); });
  std::this_thread::sleep_for(150ms);
  const int init_rc = cli::cmd_node({cfg[0], "initiate", "", 5000}, iout, ierr);
  listener.join();
  CHECK(init_rc == 0);
  CHECK(listen_rc == 0);
  CHECK(iout.str().find("established role=initiator") != std::string::npos);

  auto keys_of = [](const std::string& s) {
    const auto p = s.find("keys=");
    return s.substr(p, s.find(' ', p) - p);
  };
  CHECK(keys_of(iout.str()) == keys_of(lout.str()));

  std::ostringstream ra, rb;
  cli::ResumeOptions r;
  r.config = cfg[0];
  r.vl = 12;
  r.direction = "a2b";
  CHECK(cli::cmd_resume(r, ra) == 0);
  r.config = cfg[1];
  CHECK(cli::cmd_resume(r, rb) == 0);
  CHECK(ra.str().find("wire_frames=0") != std::string::npos);
  CHECK(ra.str().find("degraded=none") != std::string::npos);
  // Both ends derive the same VL keys from their own stores.
  CHECK(ra.str().substr(ra.str().find("vl=")) == rb.str().substr(rb.str().find("vl=")));
  CHECK(keys_of(ra.str()) == keys_of(iout.str()));

  // A corrupt primary falls back to the secondary.
  {
    std::fstream f(dir / "a/store/a.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(20);
    f.put('\x5a');
  }
  r.config = cfg[0];
  std::ostringstream rc;
  CHECK(cli::cmd_resume(r, rc) == 0);
  CHECK(rc.str().find("loaded_from=b degraded=a") != std::string::npos);

  CHECK(run_args({"resume", "--config", cfg[0].string(), "--vl", "12", "--dir", "a2b", "--flight", "FL8"}) == 7);
  fs::remove(dir / "a/store/b.bin");
  CHECK(run_args({"resume", "--config", cfg[0].string(), "--vl", "12", "--dir", "a2b"}) == 6);
}

TEST_CASE("node reports a rejected handshake and a missing listener") {
  testing::TempDir dir("cli2");
  const auto cfg = provision_pair(dir);
  // AD2 expects a different boot state for AD1.
  config::write_json(dir / "a/golden.json",
                     config::golden_to_json(tpm::golden_values(harness::default_manifest("x"), std::vector<int>{0, 1, 2, 3, 4, 5, 8})));
  std::ostringstream lout, lerr, iout, ierr;
  int listen_rc = -1;
  std::thread listener([&] { listen_rc = cli::cmd_node({cfg[1], "listen", "", 5000}, lout, lerr); });
  std::this_thread::sleep_for(150ms);
  const int init_rc = cli::cmd_node({cfg[0], "initiate", "b", 5000}, iout, ierr);
  listener.join();
  CHECK(listen_rc == 4);
  CHECK(init_rc == 4);
  CHECK(lerr.str().find("ATTESTATION_STATE_MISMATCH") != std::string::npos);
  CHECK(ierr.str().find("peer reported") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "a/store/a.bin"));

  // Nobody listening: connect keeps retrying until the wait runs out.
  CHECK(run_args({"node", "--config", cfg[0].string(), "--role", "initiate", "--wait-ms", "300"}) == 5);
}

TEST_CASE("attack runs the shipped scenarios") {
  cli::AttackOptions o;
  for (const auto& e : fs::directory_iterator(fs::path(STCP_SOURCE_DIR) / "scenarios"))
    if (e.path().extension() == ".json") o.scenarios.push_back(e.path());
  std::sort(o.scenarios.begin(), o.scenarios.end());
  o.quiet = true;
  std::ostringstream out, err;
  CHECK(cli::cmd_attack(o, out, err) == 0);
  CHECK(err.str().empty());
  CHECK(out.str().find(" scenarios passed") != std::string::npos);
}

TEST_CASE("attack fails on an unmet expectation") {
  testing::TempDir dir("cli3");
  config::write_json(dir / "s.json", Json{{"name", "wrong"},
                                          {"nodes", Json::array({Json{{"name", "AD1"}}, Json{{"name", "AD2"}}})},
                                          {"sessions", Json::array({Json{{"initiator", "AD1"}, {"responder", "AD2"}}})},
                                          {"expect", Json{{"mutual_established", 0}}}});
  cli::AttackOptions o;
  o.scenarios = {dir / "s.json"};
  std::ostringstream out, err;
  CHECK(cli::cmd_attack(o, out, err) == 1);
  CHECK(err.str().find("SCENARIO_FAILED: wrong") != std::string::npos);
}

TEST_CASE("bench over the memory link") {
  cli::BenchOptions o;
  o.repetitions = 3;
  o.profile = crypto::ParamProfile::Test;
  o.link = net::BenchLink::Memory;
  std::ostringstream out;
  const auto report = cli::cmd_bench(o, out);
  CHECK(report.repetitions == 3);
  CHECK(report.latency.samples_ms.size() == 3);
  CHECK(out.str().find("4582.44") != std::string::npos);
  CHECK(out.str().find("1201.50") != std::string::npos);
}

TEST_CASE("usage and config errors map to exit codes") {
  CHECK(run_args({}) == 2);
  CHECK(run_args({"frobnicate"}) == 2);
  CHECK(run_args({"bench", "--reps", "1"}) == 2);
  CHECK(run_args({"bench", "--reps", "1", "--profile", "fast"}) == 2);
  CHECK(run_args({"bench", "--reps", "1", "--profile", "test", "--link", "udp"}) == 2);
  CHECK(run_args({"node", "--config", "/nonexistent/node.json", "--role", "listen"}) == 3);
  CHECK(run_args({"attack", "--scenario", "/nonexistent.json"}) == 3);
}

}  // TEST_SUITE
