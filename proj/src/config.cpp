#include "stcp/config.hpp"

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "stcp/error.hpp"

namespace stcp::config {

namespace {

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base_dir / path;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

template <typename T>
T get(const Json& j, const char* key, std::string_view context) {
  if (!j.contains(key)) throw ConfigError(std::string(context) + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ConfigError(std::string(context) + ": '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback, std::string_view context) {
  return j.contains(key) ? get<T>(j, key, context) : fallback;
}

proto::DeviceIdentity parse_identity(const std::string& hex, std::string_view context) {
  try {
    return proto::DeviceIdentity::from_hex(hex);
  } catch (const CodecError&) {
    throw ConfigError(std::string(context) + ": identity must be 32 hex characters");
  }
}

std::vector<int> parse_indices(const Json& j, std::string_view context) {
  std::vector<int> out;
  std::set<int> seen;
  for (const auto& v : j) {
    if (!v.is_number_integer()) throw ConfigError(std::string(context) + ": PCR indices must be integers");
    const int i = v.get<int>();
    if (i < 0 || i >= tpm::kPcrCount) throw ConfigError(std::string(context) + ": PCR index out of range");
    if (!seen.insert(i).second) throw ConfigError(std::string(context) + ": duplicate PCR index");
    out.push_back(i);
  }
  return out;
}

}  // namespace

Json load_json(const fs::path& path) {
  const auto text = read_text(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& value) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << value.dump(2) << "\n";
}

void require_keys(const Json& obj, std::initializer_list<std::string_view> allowed, std::string_view context) {
  if (!obj.is_object()) throw ConfigError(std::string(context) + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(std::string(context) + ": unknown key '" + key + "'");
  }
}

tpm::BootManifest manifest_from_json(const Json& j, const fs::path& base_dir) {
  require_keys(j, {"components"}, "manifest");
  if (!j.contains("components") || !j["components"].is_array()) throw ConfigError("manifest: 'components' must be a list");
  tpm::BootManifest m;
  for (const auto& c : j["components"]) {
    require_keys(c, {"name", "kind", "image_text", "image_hex", "image_file", "pcr"}, "manifest component");
    tpm::BootComponent comp;
    comp.name = get<std::string>(c, "name", "manifest component");
    try {
      comp.kind = tpm::parse_component_kind(get<std::string>(c, "kind", "manifest component"));
    } catch (const Error& e) {
      throw ConfigError("manifest component '" + comp.name + "': " + e.what());
    }
    const int sources = static_cast<int>(c.contains("image_text")) + c.contains("image_hex") + c.contains("image_file");
    if (sources != 1) {
      throw ConfigError("manifest component '" + comp.name + "': exactly one of image_text, image_hex, image_file");
    }
    if (c.contains("image_text")) {
      const auto s = get<std::string>(c, "image_text", comp.name);
      comp.image.assign(s.begin(), s.end());
    } else if (c.contains("image_hex")) {
      try {
        comp.image = from_hex(get<std::string>(c, "image_hex", comp.name));
      } catch (const CodecError&) {
        throw ConfigError("manifest component '" + comp.name + "': invalid image_hex");
      }
    } else {
      const auto s = read_text(resolve(base_dir, get<std::string>(c, "image_file", comp.name)));
      comp.image.assign(s.begin(), s.end());
    }
    comp.pcr_index = get_or<int>(c, "pcr", tpm::default_pcr_index(comp.kind), comp.name);
    m.components.push_back(std::move(comp));
  }
  m.validate();
  return m;
}

Json manifest_to_json(const tpm::BootManifest& manifest) {
  Json comps = Json::array();
  for (const auto& c : manifest.components) {
    comps.push_back({{"name", c.name},
                     {"kind", std::string(tpm::component_kind_name(c.kind))},
                     {"image_hex", to_hex(c.image)},
                     {"pcr", c.pcr_index}});
  }
  return Json{{"components", comps}};
}

std::vector<tpm::PcrValue> golden_from_json(const Json& j) {
  const Json& list = j.is_object() && j.contains("golden") ? j["golden"] : j;
  if (!list.is_array()) throw ConfigError("golden values must be a list of {index, digest}");
  std::vector<tpm::PcrValue> out;
  std::set<int> seen;
  for (const auto& e : list) {
    require_keys(e, {"index", "digest"}, "golden value");
    tpm::PcrValue v;
    v.index = get<int>(e, "index", "golden value");
    if (v.index < 0 || v.index >= tpm::kPcrCount) throw ConfigError("golden value: PCR index out of range");
    if (!seen.insert(v.index).second) throw ConfigError("golden value: duplicate PCR index");
    try {
      v.digest = to_array<kDigestSize>(from_hex(get<std::string>(e, "digest", "golden value")));
    } catch (const CodecError&) {
      throw ConfigError("golden value: digest must be 64 hex characters");
    }
    out.push_back(v);
  }
  return out;
}

Json golden_to_json(std::span<const tpm::PcrValue> values) {
  Json list = Json::array();
  for (const auto& v : values) list.push_back({{"index", v.index}, {"digest", to_hex(v.digest)}});
  return Json{{"golden", list}};
}

Bundle bundle_from_json(const Json& j) {
  require_keys(j, {"label", "identity", "device_key", "aik"}, "bundle");
  return Bundle{get_or<std::string>(j, "label", "", "bundle"),
                parse_identity(get<std::string>(j, "identity", "bundle"), "bundle"),
                crypto::VerificationKey::from_pem(get<std::string>(j, "device_key", "bundle")),
                crypto::VerificationKey::from_pem(get<std::string>(j, "aik", "bundle"))};
}

Json bundle_to_json(const Bundle& b) {
  return Json{{"label", b.label},
              {"identity", b.identity.hex()},
              {"device_key", b.device_key.to_pem()},
              {"aik", b.aik.to_pem()}};
}

crypto::SignatureKeyPair load_private_key(const fs::path& path) {
  try {
    return crypto::SignatureKeyPair::from_pem(read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

crypto::VerificationKey load_public_key(const fs::path& path) {
  try {
    return crypto::VerificationKey::from_pem(read_text(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

proto::Device NodeConfig::make_device() const {
  tpm::PcrBank bank(aik);
  bank.boot(manifest);
  proto::Device d{identity, label, signing_key, std::move(bank), attestation_indices, {}, crypto::profile_params(profile).group,
                  proto::Policy{require_attestation}, {}};
  for (const auto& p : peers) d.registry.add(p.record);
  return d;
}

const PeerConfig& NodeConfig::find_peer(const std::string& label_or_id) const {
  for (const auto& p : peers) {
    if (p.label == label_or_id || p.record.identity.hex() == label_or_id) return p;
  }
  throw UsageError("no peer '" + label_or_id + "' in " + source.string());
}

NodeConfig load_node_config(const fs::path& path) {
  const Json j = load_json(path);
  const auto base = path.parent_path();
  const std::string ctx = path.string();
  require_keys(j,
               {"label", "identity", "profile", "signing_key", "aik", "manifest", "attestation_indices",
                "require_attestation", "peers", "store_a", "store_b", "storage_key", "storage_key_file", "flight_id",
                "listen", "timeout_ms", "half_open_cap"},
               ctx);

  NodeConfig c;
  c.source = path;
  c.label = get_or<std::string>(j, "label", "", ctx);
  c.identity = parse_identity(get<std::string>(j, "identity", ctx), ctx);
  try {
    c.profile = crypto::parse_profile(get_or<std::string>(j, "profile", "full", ctx));
  } catch (const UsageError& e) {
    throw ConfigError(ctx + ": " + e.what());
  }
  c.signing_key = load_private_key(resolve(base, get<std::string>(j, "signing_key", ctx)));
  c.aik = load_private_key(resolve(base, get<std::string>(j, "aik", ctx)));
  const auto manifest_path = resolve(base, get<std::string>(j, "manifest", ctx));
  c.manifest = manifest_from_json(load_json(manifest_path), manifest_path.parent_path());
  if (j.contains("attestation_indices")) c.attestation_indices = parse_indices(j["attestation_indices"], ctx);
  c.require_attestation = get_or<bool>(j, "require_attestation", true, ctx);
  c.store_a = resolve(base, get<std::string>(j, "store_a", ctx));
  c.store_b = resolve(base, get<std::string>(j, "store_b", ctx));
  if (c.store_a == c.store_b) throw ConfigError(ctx + ": store_a and store_b must differ");
  std::string key_hex;
  if (j.contains("storage_key")) {
    key_hex = get<std::string>(j, "storage_key", ctx);
  } else {
    key_hex = read_text(resolve(base, get<std::string>(j, "storage_key_file", ctx)));
    while (!key_hex.empty() && std::isspace(static_cast<unsigned char>(key_hex.back()))) key_hex.pop_back();
  }
  try {
    c.storage_key = from_hex(key_hex);
  } catch (const CodecError&) {
    throw ConfigError(ctx + ": storage key is not hex");
  }
  if (c.storage_key.size() < 16) throw ConfigError(ctx + ": storage key must be at least 16 bytes");
  c.flight_id = get<std::string>(j, "flight_id", ctx);
  c.listen = net::Endpoint::parse(get_or<std::string>(j, "listen", "127.0.0.1:7400", ctx));
  c.options.message_timeout_ms = get_or<proto::TimeMs>(j, "timeout_ms", 5000, ctx);
  c.options.half_open_cap = get_or<std::size_t>(j, "half_open_cap", 64, ctx);
  if (c.options.message_timeout_ms <= 0) throw ConfigError(ctx + ": timeout_ms must be positive");

  if (!j.contains("peers") || !j["peers"].is_array()) throw ConfigError(ctx + ": 'peers' must be a list");
  std::set<proto::DeviceIdentity> seen;
  for (const auto& pj : j["peers"]) {
    require_keys(pj, {"label", "bundle", "golden", "attestation_indices", "address"}, "peer");
    const auto bundle_path = resolve(base, get<std::string>(pj, "bundle", "peer"));
    Bundle b;
    try {
      b = bundle_from_json(load_json(bundle_path));
    } catch (const ConfigError& e) {
      throw ConfigError(bundle_path.string() + ": " + e.what());
    }
    PeerConfig p{get_or<std::string>(pj, "label", b.label, "peer"), {}, std::nullopt};
    p.record.identity = b.identity;
    p.record.device_key = b.device_key;
    p.record.aik = b.aik;
    p.record.golden = golden_from_json(load_json(resolve(base, get<std::string>(pj, "golden", "peer"))));
    p.record.attestation_indices = pj.contains("attestation_indices") ? parse_indices(pj["attestation_indices"], "peer")
                                                                       : std::vector<int>{0, 1, 2, 3, 4, 5, 8};
    if (pj.contains("address")) p.address = net::Endpoint::parse(get<std::string>(pj, "address", "peer"));
    if (p.record.identity == c.identity) throw ConfigError(ctx + ": a peer cannot share this node's identity");
    if (!seen.insert(p.record.identity).second) {
      throw ConfigError(ctx + ": duplicate peer identity " + p.record.identity.hex());
    }
    c.peers.push_back(std::move(p));
  }
  // Catches attestation indices without golden entries before anything boots.
  proto::PeerRegistry check;
  for (const auto& p : c.peers) check.add(p.record);
  return c;
}

}  // namespace stcp::config
