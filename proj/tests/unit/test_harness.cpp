#include "doctest.h"

#include "stcp/error.hpp"
#include "stcp/harness.hpp"
#include "support.hpp"

using namespace stcp;
using namespace stcp::harness;

namespace {

std::vector<Scenario> load_shipped(const char* file) {
  return load_scenarios(std::filesystem::path(STCP_SOURCE_DIR) / "scenarios" / file);
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("honest scenario") {
  const auto r = run_scenario(honest_scenario(1));
  CHECK(r.passed());
  CHECK(r.protocol_frames == 3);
  CHECK(r.mutual_established == 1);
  CHECK(r.frames.size() == 3);
  CHECK(r.node("AD1").sessions.at(0).key_fingerprint == r.node("AD2").sessions.at(0).key_fingerprint);
  CHECK(r.to_text().find("PASS honest") != std::string::npos);
  const auto j = r.to_json();
  CHECK(j["passed"] == true);
  CHECK(j["frames"].size() == 3);
}

TEST_CASE("identical seeds give identical traces") {
  for (const char* file : {"msg2_replay.json", "mitm_dh.json", "half_open_flood.json"}) {
    for (const auto& sc : load_shipped(file)) {
      CAPTURE(sc.name);
      auto a = run_scenario(sc).to_json();
      auto b = run_scenario(sc).to_json();
      a.erase("wall_ms");
      b.erase("wall_ms");
      CHECK(a == b);
    }
  }
}

TEST_CASE("different seeds change the trace but not the outcome") {
  auto sc = load_shipped("msg2_replay.json").front();
  const auto a = run_scenario(sc);
  sc.seed += 1000;
  const auto b = run_scenario(sc);
  CHECK(a.passed());
  CHECK(b.passed());
  CHECK(a.frames.front().cookie != b.frames.front().cookie);
}

TEST_CASE("every shipped scenario passes") {
  for (const auto& entry : std::filesystem::directory_iterator(std::filesystem::path(STCP_SOURCE_DIR) / "scenarios")) {
    for (const auto& sc : load_scenarios(entry.path())) {
      CAPTURE(sc.name);
      const auto r = run_scenario(sc);
      CHECK(r.passed());
      CHECK(r.violations.empty());
    }
  }
}

TEST_CASE("scenario parsing errors") {
  using config::Json;
  const auto base = std::filesystem::temp_directory_path();
  CHECK_THROWS_AS(parse_scenarios(Json::parse(R"({"name":"x","adversary":[{"action":"teleport"}]})"), base),
                  ConfigError);
  CHECK_THROWS_AS(parse_scenarios(Json::parse(R"({"name":"x","surprise":1})"), base), ConfigError);
  CHECK_THROWS_AS(parse_scenarios(Json::parse(R"({"name":"x","adversary":[{"action":"drop","match":{"type":"msg9"}}]})"), base),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_scenarios(Json::parse(R"({"name":"x","adversary":[{"action":"replay","stored":"nothing","to":"AD2","at":5}]})"),
                      base),
      ConfigError);
  CHECK_THROWS_AS(parse_scenarios(Json::parse(R"({"name":"x","expect":{"sessions":[{"node":"AD1","phase":"done"}]}})"), base),
                  ConfigError);
  CHECK_THROWS_AS(load_scenarios(base / "no-such-scenario.json"), ConfigError);
}

TEST_CASE("unknown endpoints are setup errors") {
  auto sc = honest_scenario(1);
  sc.sessions[0].responder = "AD9";
  CHECK_THROWS_AS(run_scenario(sc), ConfigError);
}

TEST_CASE("failed expectations are reported, not thrown") {
  auto sc = honest_scenario(1);
  sc.expect.protocol_frames = 4;
  const auto r = run_scenario(sc);
  CHECK_FALSE(r.passed());
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].find("protocol frames") != std::string::npos);
  CHECK(r.to_text().find("FAIL honest") != std::string::npos);
}

TEST_CASE("a dropped Msg3 leaves the responder to time out") {
  auto sc = honest_scenario(2);
  sc.adversary.push_back(Drop{Match{proto::MessageType::Msg3, {}, {}, {}}, 1});
  sc.expect = {};
  const auto r = run_scenario(sc);
  CHECK(r.node("AD1").sessions[0].phase == proto::Phase::Aborted);  // torn down by the Timeout abort
  CHECK(r.node("AD2").sessions[0].reason == proto::AbortReason::Timeout);
  CHECK(r.mutual_established == 0);
  CHECK(r.violations.empty());
}

TEST_CASE("a delayed frame still completes within the timeout") {
  auto sc = honest_scenario(3);
  sc.adversary.push_back(Delay{Match{proto::MessageType::Msg2, {}, {}, {}}, 2000, 1});
  const auto r = run_scenario(sc);
  CHECK(r.passed());
  CHECK(r.virtual_end_ms >= 2000);
}

TEST_CASE("provisioning") {
  std::vector<NodeSpec> specs(3);
  for (int i = 0; i < 3; ++i) {
    specs[i].name = "N" + std::to_string(i);
    specs[i].manifest = default_manifest(specs[i].name);
  }
  const auto a = provision(specs, crypto::ParamProfile::Test, 9);
  const auto b = provision(specs, crypto::ParamProfile::Test, 9);
  CHECK(a[0].identity == b[0].identity);
  CHECK(a[0].signing_key.verification_key() == b[0].signing_key.verification_key());
  CHECK(a[0].registry.size() == 2);
  CHECK(a[1].identity != a[2].identity);
  specs[0].name = "adv:x";
  CHECK_THROWS_AS(provision(specs, crypto::ParamProfile::Test, 9), ConfigError);
}

}  // TEST_SUITE
