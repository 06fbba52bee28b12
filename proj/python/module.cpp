#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stcp/config.hpp"
#include "stcp/crypto.hpp"
#include "stcp/error.hpp"
#include "stcp/harness.hpp"
#include "stcp/messages.hpp"
#include "stcp/tpm.hpp"
#include "stcp/transport.hpp"
#include "stcp/vl_keys.hpp"

namespace py = pybind11;
using namespace stcp;

namespace {

Bytes to_bytes(const py::bytes& b) {
  const std::string s = b;
  return Bytes(s.begin(), s.end());
}

template <typename Seq>
py::bytes to_py(const Seq& b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

crypto::Nonce to_nonce(const py::bytes& b) {
  const auto v = to_bytes(b);
  if (v.size() != crypto::kNonceSize) throw UsageError("nonce must be 32 bytes");
  crypto::Nonce n;
  std::copy(v.begin(), v.end(), n.bytes.begin());
  return n;
}

// Reports cross the boundary as JSON text; the Python side parses them.
std::string run_scenario_file(const std::string& path, std::optional<std::uint64_t> seed) {
  config::Json out = config::Json::array();
  for (auto& s : harness::load_scenarios(path)) {
    if (seed) s.seed = *seed;
    out.push_back(harness::run_scenario(s).to_json());
  }
  return out.dump();
}

std::string run_honest(std::uint64_t seed) { return harness::run_scenario(harness::honest_scenario(seed)).to_json().dump(); }

py::dict bench(const std::string& profile, int reps, const std::string& link) {
  const auto p = crypto::parse_profile(profile);
  net::BenchLink l;
  if (link == "tcp") l = net::BenchLink::Tcp;
  else if (link == "memory") l = net::BenchLink::Memory;
  else throw UsageError("link must be tcp or memory");
  std::vector<harness::NodeSpec> specs(2);
  specs[0].name = "AD1";
  specs[0].manifest = harness::default_manifest("AD1");
  specs[1].name = "AD2";
  specs[1].manifest = harness::default_manifest("AD2");
  const auto d = harness::provision(specs, p, crypto::SystemRandom::instance().bytes(1)[0]);
  net::BenchReport r;
  {
    py::gil_scoped_release release;
    r = net::bench_handshake(d[0], d[1], reps, l);
  }
  py::dict out;
  out["profile"] = std::string(crypto::profile_name(p));
  out["repetitions"] = r.repetitions;
  out["samples_ms"] = r.latency.samples_ms;
  out["median_ms"] = r.latency.median_ms;
  out["mean_ms"] = r.latency.mean_ms;
  return out;
}

py::dict resume(const std::string& store_a, const std::string& store_b, const std::string& flight,
                const py::bytes& storage_key, int vl, const std::string& direction) {
  if (vl < 0 || vl > 0xffff) throw UsageError("vl must be in 0..65535");
  const auto res = vl::resume(store_a, store_b, flight, to_bytes(storage_key));
  const auto keys = vl::derive_vl_keys(res.record, {static_cast<std::uint16_t>(vl), vl::parse_direction(direction)},
                                       vl::SecurityNeeds::Both, flight);
  py::dict out;
  out["peer"] = res.record.peer_id.hex();
  out["flight"] = res.record.flight_id;
  out["loaded_from"] = res.loaded_from == vl::StoreSlot::A ? "a" : "b";
  out["degraded"] = res.degraded ? py::cast(*res.degraded == vl::StoreSlot::A ? "a" : "b") : py::none();
  out["vl_ke"] = to_py(*keys.vl_ke);
  out["vl_ka"] = to_py(*keys.vl_ka);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Secure and trusted channel protocol core";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
  error.call_once_and_store_result([&] { return py::exception<Error>(m, "StcpError", PyExc_RuntimeError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const auto msg = std::string(error_code_name(e.code())) + ": " + e.what();
      py::set_error(error.get_stored(), msg.c_str());
    }
  });

  m.def("hash", [](const py::bytes& data) { return to_py(crypto::hash(to_bytes(data))); });
  m.def("keyed_hash", [](const py::bytes& key, const py::bytes& data) {
    return to_py(crypto::keyed_hash(to_bytes(key), to_bytes(data)));
  });
  m.def(
      "derive_session_keys",
      [](const py::bytes& k_dh, const py::bytes& n1, const py::bytes& n2) {
        const auto k = crypto::derive_session_keys(to_bytes(k_dh), to_nonce(n1), to_nonce(n2));
        return py::make_tuple(to_py(k.k_e), to_py(k.k_a));
      },
      py::arg("k_dh"), py::arg("n_initiator"), py::arg("n_responder"));
  m.def("extend_digest", [](const py::bytes& old_value, const py::bytes& measurement) {
    const auto v = to_bytes(old_value);
    if (v.size() != 32) throw UsageError("register value must be 32 bytes");
    Digest d;
    std::copy(v.begin(), v.end(), d.begin());
    return to_py(tpm::extend_digest(d, to_bytes(measurement)));
  });
  m.def("decode_type", [](const py::bytes& frame) {
    return std::string(proto::message_type_name(proto::type_of(proto::decode(to_bytes(frame)))));
  });
  m.def("_run_scenario_file", &run_scenario_file, py::arg("path"), py::arg("seed") = py::none());
  m.def("_run_honest", &run_honest, py::arg("seed"));
  m.def("bench", &bench, py::arg("profile") = "test", py::arg("reps") = 5, py::arg("link") = "memory");
  m.def("resume", &resume, py::arg("store_a"), py::arg("store_b"), py::arg("flight"), py::arg("storage_key"),
        py::arg("vl"), py::arg("direction"));
}
