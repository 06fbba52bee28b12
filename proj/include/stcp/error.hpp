#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace stcp {

/// Machine-readable failure classes. The CLI prints these names verbatim.
enum class ErrorCode {
  Crypto,
  ProtocolViolation,
  Codec,
  Config,
  State,
  Provisioning,
  Persistence,
  UnrecoverableSession,
  ExpiredSession,
  Integrity,
  Timeout,
  Transport,
  Usage,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define STCP_DEFINE_ERROR(Name, Code)                                     \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  }

STCP_DEFINE_ERROR(CryptoError, Crypto);
STCP_DEFINE_ERROR(ProtocolViolation, ProtocolViolation);
STCP_DEFINE_ERROR(ConfigError, Config);
STCP_DEFINE_ERROR(StateError, State);
STCP_DEFINE_ERROR(ProvisioningError, Provisioning);
STCP_DEFINE_ERROR(PersistenceError, Persistence);
STCP_DEFINE_ERROR(UnrecoverableSessionError, UnrecoverableSession);
STCP_DEFINE_ERROR(ExpiredSessionError, ExpiredSession);
STCP_DEFINE_ERROR(IntegrityError, Integrity);
STCP_DEFINE_ERROR(TimeoutError, Timeout);
STCP_DEFINE_ERROR(TransportError, Transport);
STCP_DEFINE_ERROR(UsageError, Usage);

#undef STCP_DEFINE_ERROR

/// Malformed input. `offset` is the byte position where decoding failed.
class CodecError : public Error {
 public:
  CodecError(const std::string& what, std::size_t offset)
      : Error(ErrorCode::Codec, what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace stcp
