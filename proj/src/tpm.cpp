#include "stcp/tpm.hpp"

#include <algorithm>
#include <set>

#include "stcp/error.hpp"

namespace stcp::tpm {

namespace {

void check_index(int index) {
  if (index < 0 || index >= kPcrCount) {
    throw ConfigError("PCR index " + std::to_string(index) + " out of range [0, " + std::to_string(kPcrCount) + ")");
  }
}

struct KindInfo {
  ComponentKind kind;
  std::string_view name;
  int default_index;
  bool fixed;
};

constexpr KindInfo kKinds[] = {
    {ComponentKind::CrtmSelf, "crtm", 0, true},
    {ComponentKind::BiosRest, "bios", 0, true},
    {ComponentKind::BoardConfig, "board-config", 1, true},
    {ComponentKind::RomFirmware, "rom-firmware", 2, true},
    {ComponentKind::RomFirmwareConfig, "rom-firmware-config", 3, true},
    {ComponentKind::OsLoader, "os-loader", 4, false},
    {ComponentKind::OsCode, "os-code", 5, false},
    {ComponentKind::Application, "application", 8, false},
};

const KindInfo& info(ComponentKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw ConfigError("unknown component kind");
}

}  // namespace

std::string_view component_kind_name(ComponentKind kind) { return info(kind).name; }

ComponentKind parse_component_kind(std::string_view name) {
  for (const auto& k : kKinds) {
    if (k.name == name) return k.kind;
  }
  std::string valid;
  for (const auto& k : kKinds) valid += (valid.empty() ? "" : ", ") + std::string(k.name);
  throw ConfigError("unknown boot component kind '" + std::string(name) + "' (expected one of " + valid + ")");
}

int default_pcr_index(ComponentKind kind) { return info(kind).default_index; }
bool has_fixed_pcr_index(ComponentKind kind) { return info(kind).fixed; }

void BootManifest::validate() const {
  for (const auto& c : components) {
    check_index(c.pcr_index);
    if (has_fixed_pcr_index(c.kind) && c.pcr_index != default_pcr_index(c.kind)) {
      throw ConfigError("component '" + c.name + "' of kind " + std::string(component_kind_name(c.kind)) +
                        " must be measured into PCR " + std::to_string(default_pcr_index(c.kind)));
    }
  }
}

Digest extend_digest(const Digest& old_value, BytesView measurement) {
  return crypto::hash(concat(BytesView(old_value), measurement));
}

std::array<Digest, kPcrCount> expected_registers(const BootManifest& manifest) {
  manifest.validate();
  std::array<Digest, kPcrCount> regs{};
  for (const auto& c : manifest.components) {
    auto measurement = crypto::hash(c.image);
    regs[static_cast<std::size_t>(c.pcr_index)] = extend_digest(regs[static_cast<std::size_t>(c.pcr_index)], measurement);
  }
  return regs;
}

std::vector<PcrValue> golden_values(const BootManifest& manifest, std::span<const int> indices) {
  auto regs = expected_registers(manifest);
  std::vector<PcrValue> out;
  for (int i : indices) {
    check_index(i);
    out.push_back({i, regs[static_cast<std::size_t>(i)]});
  }
  return out;
}

Bytes encode_pcr_values(std::span<const PcrValue> values) {
  if (values.size() > kPcrCount) throw CodecError("too many PCR values", 0);
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(values.size()));
  for (const auto& v : values) {
    check_index(v.index);
    w.u8(static_cast<std::uint8_t>(v.index));
    w.raw(v.digest);
  }
  return std::move(w).take();
}

Digest Quote::signed_digest() const { return crypto::hash(concat(encode_pcr_values(pcr_values), qualifying_data)); }

Bytes Quote::encode() const {
  ByteWriter w;
  w.raw(encode_pcr_values(pcr_values));
  w.var16(qualifying_data);
  w.var16(signature);
  return std::move(w).take();
}

Quote Quote::decode(BytesView data) {
  ByteReader r(data);
  Quote q;
  const auto count = r.u8();
  if (count > kPcrCount) throw CodecError("quote lists more than 24 registers", r.offset() - 1);
  for (int i = 0; i < count; ++i) {
    PcrValue v;
    v.index = r.u8();
    if (v.index >= kPcrCount) throw CodecError("quoted PCR index out of range", r.offset() - 1);
    v.digest = r.fixed<kDigestSize>();
    q.pcr_values.push_back(v);
  }
  auto qd = r.var16();
  q.qualifying_data.assign(qd.begin(), qd.end());
  auto sig = r.var16();
  q.signature.assign(sig.begin(), sig.end());
  r.expect_end();
  return q;
}

Quote make_quote(std::vector<PcrValue> values, BytesView qualifying_data, const crypto::SignatureKeyPair& key) {
  Quote q;
  q.pcr_values = std::move(values);
  q.qualifying_data.assign(qualifying_data.begin(), qualifying_data.end());
  q.signature = crypto::sign(q.signed_digest(), key);
  return q;
}

PcrBank::PcrBank(crypto::SignatureKeyPair aik) : aik_(std::move(aik)) {}

Digest PcrBank::extend(int index, BytesView measurement) {
  check_index(index);
  auto& reg = registers_[static_cast<std::size_t>(index)];
  reg = extend_digest(reg, measurement);
  log_.push_back({index, Bytes(measurement.begin(), measurement.end()), reg});
  return reg;
}

void PcrBank::boot(const BootManifest& manifest) {
  if (!is_reset()) throw StateError("boot requires a freshly reset PCR bank");
  manifest.validate();
  for (const auto& c : manifest.components) extend(c.pcr_index, crypto::hash(c.image));
}

Quote PcrBank::quote(std::span<const int> indices, BytesView qualifying_data) const {
  if (indices.empty()) throw ConfigError("quote requires at least one PCR index");
  std::set<int> seen;
  std::vector<PcrValue> values;
  for (int i : indices) {
    check_index(i);
    if (!seen.insert(i).second) throw ConfigError("duplicate PCR index " + std::to_string(i) + " in quote");
    values.push_back({i, registers_[static_cast<std::size_t>(i)]});
  }
  return make_quote(std::move(values), qualifying_data, aik_);
}

const Digest& PcrBank::read(int index) const {
  check_index(index);
  return registers_[static_cast<std::size_t>(index)];
}

void PcrBank::reset() {
  registers_ = {};
  log_.clear();
}

std::string_view trust_verdict_name(TrustVerdict v) {
  switch (v) {
    case TrustVerdict::Trusted: return "Trusted";
    case TrustVerdict::SignatureInvalid: return "SignatureInvalid";
    case TrustVerdict::FreshnessFailure: return "FreshnessFailure";
    case TrustVerdict::StateMismatch: return "StateMismatch";
  }
  return "Unknown";
}

TrustVerdict verify_quote(const Quote& quote, const crypto::VerificationKey& aik_public,
                          BytesView expected_qualifying_data, std::span<const PcrValue> golden) {
  if (quote.pcr_values.size() > kPcrCount ||
      !crypto::verify(quote.signed_digest(), quote.signature, aik_public)) {
    return TrustVerdict::SignatureInvalid;
  }
  if (!crypto::constant_time_equal(quote.qualifying_data, expected_qualifying_data)) {
    return TrustVerdict::FreshnessFailure;
  }
  if (golden.empty() || quote.pcr_values.size() != golden.size()) return TrustVerdict::StateMismatch;
  for (const auto& g : golden) {
    auto it = std::find_if(quote.pcr_values.begin(), quote.pcr_values.end(),
                           [&](const PcrValue& v) { return v.index == g.index; });
    if (it == quote.pcr_values.end() || it->digest != g.digest) return TrustVerdict::StateMismatch;
  }
  return TrustVerdict::Trusted;
}

}  // namespace stcp::tpm
