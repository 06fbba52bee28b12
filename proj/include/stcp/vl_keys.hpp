#pragma once

// Master session keys after a completed handshake: per-Virtual-Link key
// derivation, dual-store persistence, and resumption after a device reset
// without running the handshake again.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "stcp/crypto.hpp"
#include "stcp/messages.hpp"

namespace stcp::vl {

struct MasterSessionRecord {
  proto::SessionCookie session_id;
  proto::DeviceIdentity peer_id;
  crypto::Key master_ke{};
  crypto::Key master_ka{};
  /// Keys are valid for this flight only.
  std::string flight_id;
  /// Unix epoch milliseconds.
  std::int64_t established_at = 0;

  friend bool operator==(const MasterSessionRecord&, const MasterSessionRecord&) = default;
};

/// Builds the record from an established handshake's keys.
MasterSessionRecord make_record(const proto::SessionCookie& session, const proto::DeviceIdentity& peer,
                                const crypto::SessionKeys& keys, std::string flight_id, std::int64_t established_at);

enum class Direction : std::uint8_t { AtoB = 0, BtoA = 1 };

struct VirtualLinkId {
  std::uint16_t vl_number = 0;
  Direction direction = Direction::AtoB;

  /// u16 vl_number || u8 direction.
  Bytes encode() const;
  friend auto operator<=>(const VirtualLinkId&, const VirtualLinkId&) = default;
};

Direction parse_direction(std::string_view s);
std::string_view direction_name(Direction d);

enum class SecurityNeeds { Confidentiality, Integrity, Both };

struct VlKeys {
  std::optional<crypto::Key> vl_ke;
  std::optional<crypto::Key> vl_ka;
};

/// vl_ke = H_{master_ke}(encode(vl) || "enc"), vl_ka = H_{master_ka}(encode(vl) || "mac");
/// only the keys `needs` asks for are populated. Throws ExpiredSessionError
/// when `current_flight` differs from the record's flight.
VlKeys derive_vl_keys(const MasterSessionRecord& record, const VirtualLinkId& vl, SecurityNeeds needs,
                      std::string_view current_flight);

/// On-disk layout: "STMK" | version u8 | body | HMAC-SHA-256(storage_key, all
/// preceding bytes). See docs/wire-format.md.
Bytes serialize(const MasterSessionRecord& record, BytesView storage_key);
/// Throws IntegrityError on checksum mismatch, CodecError on bad framing.
MasterSessionRecord deserialize(BytesView data, BytesView storage_key);

/// Writes byte-identical copies to both paths, each via temp file + rename.
/// Throws PersistenceError if either write fails.
void persist(const MasterSessionRecord& record, const std::filesystem::path& store_a,
             const std::filesystem::path& store_b, BytesView storage_key);

enum class StoreSlot { A, B };

struct ResumeResult {
  MasterSessionRecord record;
  StoreSlot loaded_from = StoreSlot::A;
  /// Set when the other copy was missing or failed its checksum.
  std::optional<StoreSlot> degraded;
};

/// Loads the first checksum-valid copy (A, then B). Throws
/// UnrecoverableSessionError when neither copy is usable and
/// ExpiredSessionError when the record belongs to another flight. Touches
/// no network.
ResumeResult resume(const std::filesystem::path& store_a, const std::filesystem::path& store_b,
                    std::string_view flight_id, BytesView storage_key);

}  // namespace stcp::vl
