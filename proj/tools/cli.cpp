#include "cli.hpp"

#include <sys/stat.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "stcp/config.hpp"
#include "stcp/error.hpp"
#include "stcp/harness.hpp"
#include "stcp/vl_keys.hpp"

namespace stcp::cli {

namespace fs = std::filesystem;

namespace {

std::string upper_snake(std::string_view camel) {
  std::string out;
  for (std::size_t i = 0; i < camel.size(); ++i) {
    const char c = camel[i];
    if (std::isupper(static_cast<unsigned char>(c)) && i > 0) out += '_';
    out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage: return 2;
    case ErrorCode::Config:
    case ErrorCode::Provisioning:
    case ErrorCode::Codec: return 3;
    case ErrorCode::ProtocolViolation: return 4;
    case ErrorCode::Timeout: return 5;
    case ErrorCode::Persistence:
    case ErrorCode::UnrecoverableSession: return 6;
    case ErrorCode::ExpiredSession: return 7;
    case ErrorCode::Transport: return 8;
    case ErrorCode::Integrity: return 9;
    case ErrorCode::Crypto: return 10;
    default: return 1;
  }
}

void write_private(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  out.close();
  ::chmod(path.c_str(), 0600);
}

std::string short_hex(const Digest& d) { return to_hex(BytesView(d).first(8)); }

std::int64_t epoch_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void configure_logging() {
  auto logger = spdlog::get("stcp");
  if (!logger) logger = spdlog::stderr_color_mt("stcp");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("STCP_LOG");
  spdlog::set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
}

}  // namespace

int cmd_keygen(const KeygenOptions& o, std::ostream& out) {
  std::error_code ec;
  fs::create_directories(o.out_dir, ec);
  if (ec) throw ConfigError("cannot create " + o.out_dir.string() + ": " + ec.message());
  const auto params = crypto::profile_params(o.profile);
  auto device = crypto::SignatureKeyPair::generate(params.signature);
  auto aik = crypto::SignatureKeyPair::generate(params.signature);
  auto identity = proto::DeviceIdentity::random(crypto::SystemRandom::instance());

  write_private(o.out_dir / "device.pem", device.to_pem());
  write_private(o.out_dir / "aik.pem", aik.to_pem());
  write_private(o.out_dir / "storage.key", to_hex(crypto::SystemRandom::instance().bytes(32)) + "\n");
  const config::Bundle bundle{o.label, identity, device.verification_key(), aik.verification_key()};
  config::write_json(o.out_dir / "bundle.json", config::bundle_to_json(bundle));

  out << "identity " << identity.hex() << "\n"
      << "profile " << crypto::profile_name(o.profile) << "\n"
      << "wrote " << (o.out_dir / "bundle.json").string() << " (public), device.pem, aik.pem, storage.key (private)\n";
  return 0;
}

int cmd_measure(const MeasureOptions& o, std::ostream& out) {
  const auto manifest = config::manifest_from_json(config::load_json(o.manifest), o.manifest.parent_path());
  const auto golden = tpm::golden_values(manifest, o.indices);
  config::write_json(o.out, config::golden_to_json(golden));
  for (const auto& v : golden) out << "PCR[" << v.index << "] " << to_hex(v.digest) << "\n";
  return 0;
}

int cmd_node(const NodeOptions& o, std::ostream& out, std::ostream& err) {
  const auto cfg = config::load_node_config(o.config);
  proto::Node node(cfg.make_device(), nullptr, cfg.options);
  net::DriverResult result;
  if (o.role == "initiate") {
    const config::PeerConfig* peer = nullptr;
    if (!o.peer.empty()) {
      peer = &cfg.find_peer(o.peer);
    } else if (cfg.peers.size() == 1) {
      peer = &cfg.peers.front();
    } else {
      throw UsageError("--peer is required when the config lists more than one peer");
    }
    if (!peer->address) throw ConfigError("peer '" + peer->label + "' has no address");
    auto transport = net::TcpTransport::connect(*peer->address, std::chrono::milliseconds(o.wait_ms));
    result = net::run_initiator(node, peer->record.identity, *transport);
  } else if (o.role == "listen") {
    net::TcpListener listener(cfg.listen);
    spdlog::info("listening on {}", listener.endpoint().str());
    auto conn = listener.accept(std::chrono::milliseconds(o.wait_ms));
    result = net::run_responder(node, *conn);
  } else {
    throw UsageError("--role must be initiate or listen");
  }

  const auto& st = result.state;
  if (st.phase != proto::Phase::Established) {
    const auto reason = st.abort_reason.value_or(proto::AbortReason::MalformedMessage);
    std::string detail = "handshake aborted";
    if (st.peer_abort_reason) detail += ", peer reported " + std::string(proto::abort_reason_name(*st.peer_abort_reason));
    err << "stcp: " << upper_snake(proto::abort_reason_name(reason)) << ": " << detail << " ("
        << proto::abort_reason_name(reason) << ")\n";
    return reason == proto::AbortReason::Timeout ? 5 : 4;
  }

  const auto record = vl::make_record(st.cookie, st.peer_id, *st.keys, cfg.flight_id, epoch_ms());
  vl::persist(record, cfg.store_a, cfg.store_b, cfg.storage_key);
  out << "established role=" << proto::role_name(st.role) << " peer=" << st.peer_id.hex()
      << " session=" << st.cookie.hex().substr(0, 16) << " keys=" << crypto::key_fingerprint(st.keys->k_e, st.keys->k_a)
      << " flight=" << cfg.flight_id << " elapsed_ms=" << std::fixed << std::setprecision(2)
      << std::chrono::duration<double, std::milli>(result.elapsed).count() << "\n";
  return 0;
}

int cmd_attack(const AttackOptions& o, std::ostream& out, std::ostream& err) {
  if (o.scenarios.empty()) throw UsageError("at least one --scenario is required");
  std::vector<harness::Scenario> all;
  for (const auto& path : o.scenarios) {
    auto loaded = harness::load_scenarios(path);
    all.insert(all.end(), loaded.begin(), loaded.end());
  }
  config::Json reports = config::Json::array();
  std::size_t failed = 0;
  for (auto& sc : all) {
    if (o.seed) sc.seed = *o.seed;
    const auto report = harness::run_scenario(sc);
    if (!o.quiet) out << report.to_text();
    else out << (report.passed() ? "PASS " : "FAIL ") << report.name << "\n";
    reports.push_back(report.to_json());
    if (!report.passed()) {
      ++failed;
      err << "stcp: SCENARIO_FAILED: " << report.name << ": "
          << (report.violations.empty() ? report.failures.front() : report.violations.front()) << "\n";
    }
  }
  if (o.json_out) config::write_json(*o.json_out, config::Json{{"reports", reports}});
  out << all.size() - failed << "/" << all.size() << " scenarios passed\n";
  return failed == 0 ? 0 : 1;
}

net::BenchReport cmd_bench(const BenchOptions& o, std::ostream& out) {
  if (o.repetitions < 1) throw UsageError("--reps must be at least 1");
  harness::NodeSpec a, b;
  a.name = "bench-initiator";
  b.name = "bench-responder";
  if (o.config) {
    const auto cfg = config::load_node_config(*o.config);
    a.manifest = b.manifest = cfg.manifest;
    a.attestation_indices = b.attestation_indices = cfg.attestation_indices;
  } else {
    a.manifest = harness::default_manifest(a.name);
    b.manifest = harness::default_manifest(b.name);
  }
  std::uint64_t seed = 0;
  crypto::SystemRandom::instance().fill({reinterpret_cast<std::uint8_t*>(&seed), sizeof seed});
  const auto devices = harness::provision({a, b}, o.profile, seed);
  const auto report = net::bench_handshake(devices[0], devices[1], o.repetitions, o.link);

  const auto params = crypto::profile_params(o.profile);
  out << std::fixed << std::setprecision(2);
  out << "bench profile=" << crypto::profile_name(o.profile) << " group=" << params.group.name
      << " signature=" << (params.signature.scheme == crypto::SignatureScheme::Rsa ? "rsa-2048" : "ed25519")
      << " reps=" << o.repetitions << " link=" << (o.link == net::BenchLink::Tcp ? "tcp" : "memory") << "\n";
  out << "handshake latency ms (initiator): min=" << report.latency.min_ms << " median=" << report.latency.median_ms
      << " mean=" << report.latency.mean_ms << " max=" << report.latency.max_ms << "\n";
  auto phases = [&](const char* who, const net::PhaseBreakdown& p) {
    out << who << " phases ms/handshake: dh=" << p.dh_ms << " sign=" << p.sign_ms << " verify=" << p.verify_ms
        << " seal=" << p.seal_ms << "\n";
  };
  phases("initiator", report.initiator);
  phases("responder", report.responder);
  out << "reference (Raspberry Pi test bed, not comparable): full-size keys " << kReferenceFullKeysMs
      << " ms, reduced keys " << kReferenceReducedKeysMs << " ms\n";
  out << "summary: " << report.latency.median_ms << " ms\n";

  if (o.json_out) {
    auto ph = [](const net::PhaseBreakdown& p) {
      return config::Json{{"dh_ms", p.dh_ms}, {"sign_ms", p.sign_ms}, {"verify_ms", p.verify_ms}, {"seal_ms", p.seal_ms}};
    };
    config::write_json(*o.json_out, {{"profile", std::string(crypto::profile_name(o.profile))},
                                     {"repetitions", o.repetitions},
                                     {"samples_ms", report.latency.samples_ms},
                                     {"min_ms", report.latency.min_ms},
                                     {"median_ms", report.latency.median_ms},
                                     {"mean_ms", report.latency.mean_ms},
                                     {"max_ms", report.latency.max_ms},
                                     {"initiator", ph(report.initiator)},
                                     {"responder", ph(report.responder)}});
  }
  return report;
}

int cmd_resume(const ResumeOptions& o, std::ostream& out) {
  if (o.vl < 0 || o.vl > 0xffff) throw UsageError("--vl must be in 0..65535");
  const auto direction = vl::parse_direction(o.direction);
  vl::SecurityNeeds needs;
  if (o.needs == "both") needs = vl::SecurityNeeds::Both;
  else if (o.needs == "confidentiality") needs = vl::SecurityNeeds::Confidentiality;
  else if (o.needs == "integrity") needs = vl::SecurityNeeds::Integrity;
  else throw UsageError("--needs must be confidentiality, integrity, or both");

  const auto cfg = config::load_node_config(o.config);
  const auto flight = o.flight.value_or(cfg.flight_id);
  const auto wire_before = net::frames_sent_total();
  const auto resumed = vl::resume(cfg.store_a, cfg.store_b, flight, cfg.storage_key);
  const auto keys = vl::derive_vl_keys(resumed.record, {static_cast<std::uint16_t>(o.vl), direction}, needs, flight);
  const auto wire_frames = net::frames_sent_total() - wire_before;
  if (wire_frames != 0) throw StateError("resumption sent frames on the wire");

  const auto& r = resumed.record;
  out << "resumed peer=" << r.peer_id.hex() << " session=" << r.session_id.hex().substr(0, 16)
      << " keys=" << crypto::key_fingerprint(r.master_ke, r.master_ka) << " flight=" << r.flight_id
      << " loaded_from=" << (resumed.loaded_from == vl::StoreSlot::A ? "a" : "b") << " degraded="
      << (resumed.degraded ? (*resumed.degraded == vl::StoreSlot::A ? "a" : "b") : "none") << "\n";
  out << "vl=" << o.vl << " dir=" << vl::direction_name(direction);
  if (keys.vl_ke) out << " vl_ke=" << short_hex(crypto::hash(*keys.vl_ke));
  if (keys.vl_ka) out << " vl_ka=" << short_hex(crypto::hash(*keys.vl_ka));
  out << " wire_frames=" << wire_frames << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Secure and trusted channel protocol tool"};
  app.require_subcommand(1);

  KeygenOptions kg;
  std::string kg_profile = "full";
  auto* keygen = app.add_subcommand("keygen", "generate a device key, AIK, identity, and public bundle");
  keygen->add_option("--out", kg.out_dir, "output directory")->required();
  keygen->add_option("--profile", kg_profile, "full (RSA-2048) or test (Ed25519)");
  keygen->add_option("--label", kg.label, "operator label stored in the bundle (never sent on the wire)");

  MeasureOptions ms;
  auto* measure = app.add_subcommand("measure", "export golden PCR values for a boot manifest");
  measure->add_option("--manifest", ms.manifest)->required();
  measure->add_option("--indices", ms.indices)->delimiter(',');
  measure->add_option("--out", ms.out)->required();

  NodeOptions nd;
  auto* node = app.add_subcommand("node", "run one handshake over TCP and persist the master keys");
  node->add_option("--config", nd.config)->required();
  node->add_option("--role", nd.role, "initiate or listen")->required();
  node->add_option("--peer", nd.peer, "peer label or identity hex");
  node->add_option("--wait-ms", nd.wait_ms, "connect/accept timeout");

  AttackOptions at;
  auto* attack = app.add_subcommand("attack", "run adversarial scenarios and check their declared outcomes");
  attack->add_option("--scenario", at.scenarios)->required();
  attack->add_option("--json", at.json_out, "write machine-readable reports here");
  attack->add_option("--seed", at.seed, "override every scenario's seed");
  attack->add_flag("--quiet", at.quiet, "one line per scenario");

  BenchOptions bn;
  std::string bn_profile, bn_link = "tcp";
  auto* bench = app.add_subcommand("bench", "measure handshake latency over loopback");
  bench->add_option("--config", bn.config, "node config supplying the boot manifest");
  bench->add_option("--reps", bn.repetitions)->required();
  bench->add_option("--profile", bn_profile, "full or test")->required();
  bench->add_option("--link", bn_link, "tcp or memory");
  bench->add_option("--json", bn.json_out);

  ResumeOptions rs;
  auto* resume = app.add_subcommand("resume", "reload persisted master keys and derive a VL key");
  resume->add_option("--config", rs.config)->required();
  resume->add_option("--vl", rs.vl)->required();
  resume->add_option("--dir", rs.direction, "a2b or b2a")->required();
  resume->add_option("--needs", rs.needs, "confidentiality, integrity, or both");
  resume->add_option("--flight", rs.flight, "current flight id (defaults to the config's)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "stcp: USAGE_ERROR: " << e.what() << "\n";
    return 2;
  }

  configure_logging();
  try {
    if (*keygen) {
      kg.profile = crypto::parse_profile(kg_profile);
      return cmd_keygen(kg, std::cout);
    }
    if (*measure) return cmd_measure(ms, std::cout);
    if (*node) return cmd_node(nd, std::cout, std::cerr);
    if (*attack) return cmd_attack(at, std::cout, std::cerr);
    if (*bench) {
      bn.profile = crypto::parse_profile(bn_profile);
      if (bn_link == "tcp") bn.link = net::BenchLink::Tcp;
      else if (bn_link == "memory") bn.link = net::BenchLink::Memory;
      else throw UsageError("--link must be tcp or memory");
      cmd_bench(bn, std::cout);
      return 0;
    }
    if (*resume) return cmd_resume(rs, std::cout);
  } catch (const Error& e) {
    std::cerr << "stcp: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "stcp: INTERNAL_ERROR: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace stcp::cli
