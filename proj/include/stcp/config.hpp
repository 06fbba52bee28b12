#pragma once

// JSON provisioning files: node configs, boot manifests, golden PCR lists,
// and the public bundle `stcp keygen` writes. Schemas are in
// docs/wire-format.md. Relative paths resolve against the including file.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "stcp/crypto.hpp"
#include "stcp/handshake.hpp"
#include "stcp/node.hpp"
#include "stcp/tpm.hpp"
#include "stcp/transport.hpp"

namespace stcp::config {

using Json = nlohmann::json;
namespace fs = std::filesystem;

/// Throws ConfigError when the file is missing or not valid JSON.
Json load_json(const fs::path& path);
void write_json(const fs::path& path, const Json& value);

/// Throws ConfigError if `obj` has a key outside `allowed`.
void require_keys(const Json& obj, std::initializer_list<std::string_view> allowed, std::string_view context);

tpm::BootManifest manifest_from_json(const Json& j, const fs::path& base_dir);
Json manifest_to_json(const tpm::BootManifest& manifest);

/// [{"index": 0, "digest": "<64 hex>"}, ...]
std::vector<tpm::PcrValue> golden_from_json(const Json& j);
Json golden_to_json(std::span<const tpm::PcrValue> values);

/// Public provisioning material for one device.
struct Bundle {
  std::string label;
  proto::DeviceIdentity identity;
  crypto::VerificationKey device_key;
  crypto::VerificationKey aik;
};

Bundle bundle_from_json(const Json& j);
Json bundle_to_json(const Bundle& b);

/// Loads a PEM private key file. Truncated or garbled files throw ConfigError.
crypto::SignatureKeyPair load_private_key(const fs::path& path);
crypto::VerificationKey load_public_key(const fs::path& path);

struct PeerConfig {
  std::string label;
  proto::PeerRecord record;
  std::optional<net::Endpoint> address;
};

struct NodeConfig {
  fs::path source;
  std::string label;
  proto::DeviceIdentity identity;
  crypto::ParamProfile profile = crypto::ParamProfile::Full;
  crypto::SignatureKeyPair signing_key;
  crypto::SignatureKeyPair aik;
  tpm::BootManifest manifest;
  std::vector<int> attestation_indices{0, 1, 2, 3, 4, 5, 8};
  bool require_attestation = true;
  std::vector<PeerConfig> peers;
  fs::path store_a;
  fs::path store_b;
  Bytes storage_key;
  std::string flight_id;
  net::Endpoint listen;
  proto::NodeOptions options;

  /// Boots a fresh TPM from the manifest and assembles the device.
  proto::Device make_device() const;
  /// Looks a peer up by label or identity hex. Throws UsageError.
  const PeerConfig& find_peer(const std::string& label_or_id) const;
};

/// Every referenced file must exist and parse; duplicate peers are rejected.
NodeConfig load_node_config(const fs::path& path);

}  // namespace stcp::config
