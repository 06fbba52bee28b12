#include "stcp/vl_keys.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iterator>

#include "stcp/error.hpp"

namespace stcp::vl {

namespace fs = std::filesystem;

namespace {

constexpr std::uint8_t kMagic[] = {'S', 'T', 'M', 'K'};
constexpr std::uint8_t kFormatVersion = 1;

/// flock() on a sidecar lock file, held for the object's lifetime.
class StoreLock {
 public:
  explicit StoreLock(const fs::path& store) {
    auto lock_path = store;
    lock_path += ".lock";
    fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0600);
    if (fd_ < 0) throw PersistenceError("cannot open lock file " + lock_path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw PersistenceError("cannot lock " + lock_path.string() + ": " + std::strerror(errno));
    }
  }
  ~StoreLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  StoreLock(const StoreLock&) = delete;
  StoreLock& operator=(const StoreLock&) = delete;

 private:
  int fd_ = -1;
};

void write_atomically(const fs::path& path, BytesView data) {
  auto tmp = path;
  tmp += ".tmp";
  int fd = ::open(tmp.c_str(), O_CREAT | O_TRUNC | O_WRONLY | O_CLOEXEC, 0600);
  if (fd < 0) throw PersistenceError("cannot create " + tmp.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < data.size()) {
    auto n = ::write(fd, data.data() + written, data.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string err = std::strerror(errno);
      ::close(fd);
      throw PersistenceError("write to " + tmp.string() + " failed: " + err);
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0 || ::close(fd) != 0) throw PersistenceError("flushing " + tmp.string() + " failed");
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw PersistenceError("rename to " + path.string() + " failed: " + ec.message());
}

std::optional<Bytes> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

MasterSessionRecord make_record(const proto::SessionCookie& session, const proto::DeviceIdentity& peer,
                                const crypto::SessionKeys& keys, std::string flight_id, std::int64_t established_at) {
  return MasterSessionRecord{session, peer, keys.k_e, keys.k_a, std::move(flight_id), established_at};
}

Bytes VirtualLinkId::encode() const {
  ByteWriter w;
  w.u16(vl_number);
  w.u8(static_cast<std::uint8_t>(direction));
  return std::move(w).take();
}

Direction parse_direction(std::string_view s) {
  if (s == "a2b") return Direction::AtoB;
  if (s == "b2a") return Direction::BtoA;
  throw UsageError("unknown VL direction '" + std::string(s) + "' (expected a2b|b2a)");
}

std::string_view direction_name(Direction d) { return d == Direction::AtoB ? "a2b" : "b2a"; }

VlKeys derive_vl_keys(const MasterSessionRecord& record, const VirtualLinkId& vl, SecurityNeeds needs,
                      std::string_view current_flight) {
  if (record.flight_id != current_flight) {
    throw ExpiredSessionError("master keys belong to flight '" + record.flight_id + "', not '" +
                              std::string(current_flight) + "'");
  }
  const auto id = vl.encode();
  VlKeys out;
  if (needs != SecurityNeeds::Integrity) out.vl_ke = crypto::keyed_hash(record.master_ke, concat(id, as_view("enc")));
  if (needs != SecurityNeeds::Confidentiality) {
    out.vl_ka = crypto::keyed_hash(record.master_ka, concat(id, as_view("mac")));
  }
  return out;
}

Bytes serialize(const MasterSessionRecord& record, BytesView storage_key) {
  ByteWriter w;
  w.raw(kMagic);
  w.u8(kFormatVersion);
  w.raw(record.session_id.digest);
  w.raw(record.peer_id.bytes);
  w.raw(record.master_ke);
  w.raw(record.master_ka);
  w.var16(as_view(record.flight_id));
  w.u64(static_cast<std::uint64_t>(record.established_at));
  const auto checksum = crypto::keyed_hash(storage_key, w.bytes());
  w.raw(checksum);
  return std::move(w).take();
}

MasterSessionRecord deserialize(BytesView data, BytesView storage_key) {
  if (data.size() < kDigestSize) throw CodecError("record shorter than its checksum", data.size());
  const auto body = data.first(data.size() - kDigestSize);
  const auto checksum = data.last(kDigestSize);
  if (!crypto::constant_time_equal(crypto::keyed_hash(storage_key, body), checksum)) {
    throw IntegrityError("master session record checksum mismatch");
  }
  ByteReader r(body);
  auto magic = r.raw(sizeof(kMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw CodecError("bad record magic", 0);
  if (r.u8() != kFormatVersion) throw CodecError("unsupported record version", 4);
  MasterSessionRecord rec;
  rec.session_id.digest = r.fixed<kDigestSize>();
  rec.peer_id.bytes = r.fixed<16>();
  rec.master_ke = r.fixed<crypto::kKeySize>();
  rec.master_ka = r.fixed<crypto::kKeySize>();
  auto flight = r.var16();
  rec.flight_id.assign(flight.begin(), flight.end());
  rec.established_at = static_cast<std::int64_t>(r.u64());
  r.expect_end();
  return rec;
}

void persist(const MasterSessionRecord& record, const fs::path& store_a, const fs::path& store_b,
             BytesView storage_key) {
  const auto bytes = serialize(record, storage_key);
  for (const auto& path : {store_a, store_b}) {
    if (path.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(path.parent_path(), ec);
    }
    StoreLock lock(path);
    write_atomically(path, bytes);
  }
}

ResumeResult resume(const fs::path& store_a, const fs::path& store_b, std::string_view flight_id,
                    BytesView storage_key) {
  std::optional<MasterSessionRecord> loaded[2];
  const fs::path paths[2] = {store_a, store_b};
  for (int i = 0; i < 2; ++i) {
    std::optional<Bytes> raw;
    std::error_code ec;
    if (!fs::exists(paths[i], ec)) continue;
    {
      StoreLock lock(paths[i]);
      raw = read_file(paths[i]);
    }
    if (!raw) continue;
    try {
      loaded[i] = deserialize(*raw, storage_key);
    } catch (const IntegrityError&) {
    } catch (const CodecError&) {
    }
  }
  if (!loaded[0] && !loaded[1]) {
    throw UnrecoverableSessionError("no valid master session record in " + store_a.string() + " or " +
                                    store_b.string());
  }
  ResumeResult result;
  result.loaded_from = loaded[0] ? StoreSlot::A : StoreSlot::B;
  result.record = loaded[0] ? *loaded[0] : *loaded[1];
  if (!loaded[0]) result.degraded = StoreSlot::A;
  if (!loaded[1]) result.degraded = StoreSlot::B;
  if (result.record.flight_id != flight_id) {
    throw ExpiredSessionError("persisted session belongs to flight '" + result.record.flight_id + "', not '" + std::string(flight_id) +
                              "'; run a new handshake");
  }
  return result;
}

}  // namespace stcp::vl
