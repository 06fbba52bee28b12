#pragma once

// Software model of the TPM features the handshake relies on: a PCR bank with
// hash-chained extend, a measured boot sequence, and AIK-signed quotes.
//
// The emulator is not tamper resistant. Tests treat it as an oracle that an
// adversary on the network cannot reach into.

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stcp/bytes.hpp"
#include "stcp/crypto.hpp"

namespace stcp::tpm {

inline constexpr int kPcrCount = 24;

struct PcrValue {
  int index = 0;
  Digest digest{};
  friend bool operator==(const PcrValue&, const PcrValue&) = default;
};

/// Stages of the trusted boot chain, in execution order.
enum class ComponentKind {
  CrtmSelf,
  BiosRest,
  BoardConfig,
  RomFirmware,
  RomFirmwareConfig,
  OsLoader,
  OsCode,
  Application,
};

std::string_view component_kind_name(ComponentKind kind);
ComponentKind parse_component_kind(std::string_view name);
/// CRTM/BIOS -> 0, board config -> 1, ROM firmware -> 2, ROM firmware
/// config -> 3 (fixed); OS loader -> 4, OS code -> 5, application -> 8
/// (defaults, overridable per manifest).
int default_pcr_index(ComponentKind kind);
/// True for the kinds whose register is pinned by the platform.
bool has_fixed_pcr_index(ComponentKind kind);

struct BootComponent {
  std::string name;
  ComponentKind kind = ComponentKind::Application;
  Bytes image;
  int pcr_index = 0;
};

struct BootManifest {
  std::vector<BootComponent> components;

  /// Throws ConfigError on out-of-range indices or a pinned kind placed in
  /// the wrong register.
  void validate() const;
};

/// PCR_new = H(PCR_old || measurement).
Digest extend_digest(const Digest& old_value, BytesView measurement);

/// Register contents a freshly reset bank reaches after booting `manifest`.
std::array<Digest, kPcrCount> expected_registers(const BootManifest& manifest);
/// The (index, digest) pairs a verifier should provision as golden values.
std::vector<PcrValue> golden_values(const BootManifest& manifest, std::span<const int> indices);

struct Quote {
  std::vector<PcrValue> pcr_values;
  Bytes qualifying_data;
  Bytes signature;

  /// H(encoded pcr_values || qualifying_data); this is what the AIK signs.
  Digest signed_digest() const;

  Bytes encode() const;
  static Quote decode(BytesView data);
  friend bool operator==(const Quote&, const Quote&) = default;
};

/// u8 count, then (u8 index, 32-byte digest) per entry.
Bytes encode_pcr_values(std::span<const PcrValue> values);

/// Signs arbitrary values with the given key. Real quotes come from
/// PcrBank::quote; this exists so tests and the adversary harness can build
/// quotes the way a forger would.
Quote make_quote(std::vector<PcrValue> values, BytesView qualifying_data, const crypto::SignatureKeyPair& key);

struct ExtendEvent {
  int index = 0;
  Bytes measurement;
  Digest result{};
};

class PcrBank {
 public:
  explicit PcrBank(crypto::SignatureKeyPair aik);

  /// Throws ConfigError when index is outside [0, 24).
  Digest extend(int index, BytesView measurement);
  /// Extends H(image) for each component in order. The bank must be freshly
  /// reset (cold restart); otherwise throws StateError.
  void boot(const BootManifest& manifest);
  /// Throws ConfigError on empty, duplicate, or out-of-range indices.
  Quote quote(std::span<const int> indices, BytesView qualifying_data) const;

  const Digest& read(int index) const;
  const std::array<Digest, kPcrCount>& registers() const { return registers_; }
  const std::vector<ExtendEvent>& extend_log() const { return log_; }
  bool is_reset() const { return log_.empty(); }
  void reset();

  crypto::VerificationKey aik_public() const { return aik_.verification_key(); }
  const crypto::SignatureKeyPair& aik() const { return aik_; }

 private:
  std::array<Digest, kPcrCount> registers_{};
  crypto::SignatureKeyPair aik_;
  std::vector<ExtendEvent> log_;
};

enum class TrustVerdict {
  Trusted,
  SignatureInvalid,
  FreshnessFailure,
  StateMismatch,
};

std::string_view trust_verdict_name(TrustVerdict v);

/// Checks, in order: AIK signature, qualifying data, and that the quoted
/// registers are exactly the golden set with matching digests. A golden index
/// missing from the quote, or a quoted index absent from golden, is a
/// StateMismatch.
TrustVerdict verify_quote(const Quote& quote, const crypto::VerificationKey& aik_public,
                          BytesView expected_qualifying_data, std::span<const PcrValue> golden);

}  // namespace stcp::tpm
