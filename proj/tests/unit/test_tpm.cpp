#include "doctest.h"

#include <map>

#include "stcp/error.hpp"
#include "stcp/tpm.hpp"
#include "support.hpp"

using namespace stcp;
using namespace stcp::tpm;

namespace {

crypto::SignatureKeyPair test_aik(std::uint8_t fill = 1) { return crypto::SignatureKeyPair::ed25519_from_seed(Bytes(32, fill)); }

BootManifest sample_manifest() {
  BootManifest m;
  auto add = [&](const char* name, ComponentKind kind, const char* text) {
    const auto v = as_view(text);
    m.components.push_back({name, kind, Bytes(v.begin(), v.end()), default_pcr_index(kind)});
  };
  add("crtm", ComponentKind::CrtmSelf, "crtm");
  add("bios", ComponentKind::BiosRest, "bios");
  add("loader", ComponentKind::OsLoader, "loader");
  add("kernel", ComponentKind::OsCode, "kernel");
  add("app", ComponentKind::Application, "flight control");
  return m;
}

}  // namespace

TEST_SUITE("tpm") {

TEST_CASE("first extend of a zero register") {
  PcrBank bank(test_aik());
  const auto m = crypto::hash(as_view("abc"));
  const auto v = bank.extend(10, m);
  CHECK(to_hex(v) == "589f9ffed4c477966bfb8d41f37895b08c69047df8f911d6f3b57fbe08faee8d");
  CHECK(bank.read(10) == v);
  const Bytes zero_and_m = concat(Digest{}, m);
  CHECK(v == crypto::hash(zero_and_m));
  CHECK(bank.extend_log().size() == 1);
}

TEST_CASE("extend is order dependent") {
  PcrBank a(test_aik()), b(test_aik());
  a.extend(3, as_view("x"));
  a.extend(3, as_view("y"));
  b.extend(3, as_view("y"));
  b.extend(3, as_view("x"));
  CHECK(a.read(3) != b.read(3));
}

TEST_CASE("register index bounds") {
  PcrBank bank(test_aik());
  CHECK_THROWS_AS(bank.extend(-1, as_view("x")), ConfigError);
  CHECK_THROWS_AS(bank.extend(kPcrCount, as_view("x")), ConfigError);
  CHECK_NOTHROW(bank.extend(kPcrCount - 1, as_view("x")));
}

TEST_CASE("boot matches the left-fold oracle") {
  const auto m = sample_manifest();
  PcrBank bank(test_aik());
  bank.boot(m);
  std::map<int, std::vector<oracle::Bytes>> per_register;
  for (const auto& c : m.components) per_register[c.pcr_index].push_back(testing::to_oracle(c.image));
  for (int i = 0; i < kPcrCount; ++i) {
    const auto expected = per_register.count(i) ? oracle::pcr_fold(per_register[i]) : oracle::Digest{};
    CHECK(bank.read(i) == expected);
  }
  CHECK(bank.registers() == expected_registers(m));
  CHECK(bank.extend_log().size() == m.components.size());
}

TEST_CASE("boot needs a reset bank") {
  PcrBank bank(test_aik());
  bank.boot(sample_manifest());
  CHECK_FALSE(bank.is_reset());
  CHECK_THROWS_AS(bank.boot(sample_manifest()), StateError);
  bank.reset();
  CHECK(bank.is_reset());
  CHECK(bank.read(0) == Digest{});
  CHECK_NOTHROW(bank.boot(sample_manifest()));
}

TEST_CASE("pinned components must use their register") {
  auto m = sample_manifest();
  CHECK_NOTHROW(m.validate());
  m.components[0].pcr_index = 7;  // CRTM belongs in 0
  CHECK_THROWS_AS(m.validate(), ConfigError);
  m = sample_manifest();
  m.components[4].pcr_index = 12;  // applications may move
  CHECK_NOTHROW(m.validate());
  m.components[4].pcr_index = 40;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("component kinds and default registers") {
  CHECK(default_pcr_index(ComponentKind::CrtmSelf) == 0);
  CHECK(default_pcr_index(ComponentKind::BiosRest) == 0);
  CHECK(default_pcr_index(ComponentKind::BoardConfig) == 1);
  CHECK(default_pcr_index(ComponentKind::RomFirmware) == 2);
  CHECK(default_pcr_index(ComponentKind::RomFirmwareConfig) == 3);
  CHECK(default_pcr_index(ComponentKind::OsLoader) == 4);
  CHECK(default_pcr_index(ComponentKind::OsCode) == 5);
  CHECK(default_pcr_index(ComponentKind::Application) == 8);
  CHECK(has_fixed_pcr_index(ComponentKind::RomFirmware));
  CHECK_FALSE(has_fixed_pcr_index(ComponentKind::Application));
  for (auto k : {ComponentKind::CrtmSelf, ComponentKind::OsCode, ComponentKind::Application}) {
    CHECK(parse_component_kind(component_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_component_kind("bootloader"), ConfigError);
}

TEST_CASE("golden values") {
  const auto m = sample_manifest();
  const std::vector<int> idx{0, 4, 8};
  const auto g = golden_values(m, idx);
  REQUIRE(g.size() == 3);
  const auto regs = expected_registers(m);
  for (const auto& v : g) CHECK(v.digest == regs[v.index]);
}

TEST_CASE("quote verification verdicts") {
  const auto aik = test_aik();
  PcrBank bank(aik);
  const auto m = sample_manifest();
  bank.boot(m);
  const std::vector<int> idx{0, 4, 5, 8};
  const auto golden = golden_values(m, idx);
  const auto q = bank.quote(idx, as_view("nonce-1"));
  CHECK(q.qualifying_data == Bytes(as_view("nonce-1").begin(), as_view("nonce-1").end()));
  CHECK(Quote::decode(q.encode()) == q);

  CHECK(verify_quote(q, aik.verification_key(), as_view("nonce-1"), golden) == TrustVerdict::Trusted);
  CHECK(verify_quote(q, aik.verification_key(), as_view("nonce-2"), golden) == TrustVerdict::FreshnessFailure);
  CHECK(verify_quote(q, test_aik(2).verification_key(), as_view("nonce-1"), golden) == TrustVerdict::SignatureInvalid);

  auto changed = golden;
  changed[1].digest[0] ^= 1;
  CHECK(verify_quote(q, aik.verification_key(), as_view("nonce-1"), changed) == TrustVerdict::StateMismatch);
  auto fewer = golden;
  fewer.pop_back();
  CHECK(verify_quote(q, aik.verification_key(), as_view("nonce-1"), fewer) == TrustVerdict::StateMismatch);
  auto more = golden;
  more.push_back({1, Digest{}});
  CHECK(verify_quote(q, aik.verification_key(), as_view("nonce-1"), more) == TrustVerdict::StateMismatch);

  auto forged = q;
  forged.pcr_values[0].digest[0] ^= 1;
  CHECK(verify_quote(forged, aik.verification_key(), as_view("nonce-1"), golden) == TrustVerdict::SignatureInvalid);
}

TEST_CASE("a forger's quote with the real AIK passes, with another key it does not") {
  const auto aik = test_aik();
  const auto m = sample_manifest();
  const std::vector<int> idx{0, 8};
  const auto golden = golden_values(m, idx);
  CHECK(verify_quote(make_quote(golden, as_view("n"), aik), aik.verification_key(), as_view("n"), golden) ==
        TrustVerdict::Trusted);
  CHECK(verify_quote(make_quote(golden, as_view("n"), test_aik(9)), aik.verification_key(), as_view("n"), golden) ==
        TrustVerdict::SignatureInvalid);
}

TEST_CASE("quote argument checks") {
  PcrBank bank(test_aik());
  CHECK_THROWS_AS(bank.quote(std::vector<int>{}, as_view("n")), ConfigError);
  CHECK_THROWS_AS(bank.quote(std::vector<int>{1, 1}, as_view("n")), ConfigError);
  CHECK_THROWS_AS(bank.quote(std::vector<int>{24}, as_view("n")), ConfigError);
}

TEST_CASE("quote decoding is strict") {
  PcrBank bank(test_aik());
  const auto wire = bank.quote(std::vector<int>{0, 1}, as_view("n")).encode();
  auto extra = wire;
  extra.push_back(1);
  CHECK_THROWS_AS(Quote::decode(extra), CodecError);
  CHECK_THROWS_AS(Quote::decode(BytesView(wire).first(wire.size() - 1)), CodecError);
  auto bad_count = wire;
  bad_count[0] = 25;
  CHECK_THROWS_AS(Quote::decode(bad_count), CodecError);
  auto bad_index = wire;
  bad_index[1] = 30;
  CHECK_THROWS_AS(Quote::decode(bad_index), CodecError);
}

}  // TEST_SUITE
