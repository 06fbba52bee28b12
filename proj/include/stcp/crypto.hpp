#pragma once

// Cryptographic primitives and derivations used by the handshake. Nothing in
// this header knows about protocol messages.

#include <array>
#include <compare>
#include <memory>
#include <string>
#include <string_view>

#include <openssl/types.h>

#include "stcp/bytes.hpp"
#include "stcp/random.hpp"

namespace stcp::crypto {

/// Owning wrapper around an OpenSSL BIGNUM. Cleared on destruction.
class BigInt {
 public:
  BigInt();
  explicit BigInt(unsigned long value);
  static BigInt from_bytes(BytesView big_endian);
  static BigInt from_hex(std::string_view hex);

  BigInt(const BigInt& other);
  BigInt& operator=(const BigInt& other);
  BigInt(BigInt&& other) noexcept;
  BigInt& operator=(BigInt&& other) noexcept;
  ~BigInt();

  /// Big-endian, left-padded to exactly `width` bytes. Throws CryptoError if
  /// the value does not fit.
  Bytes to_bytes(std::size_t width) const;
  Bytes to_bytes() const;
  std::string to_hex() const;
  int num_bits() const;
  bool is_zero() const;

  const BIGNUM* get() const { return bn_; }
  BIGNUM* get() { return bn_; }

  friend bool operator==(const BigInt& a, const BigInt& b);
  friend std::strong_ordering operator<=>(const BigInt& a, const BigInt& b);

 private:
  explicit BigInt(BIGNUM* owned) : bn_(owned) {}
  BIGNUM* bn_;
};

struct DhGroup {
  std::string name;
  BigInt prime_modulus;
  BigInt generator;
  int exponent_bits = 256;

  std::size_t modulus_bytes() const;

  /// RFC 3526 group 14 (2048-bit MODP), generator 2.
  static DhGroup modp2048();
  /// RFC 2409 group 2 (1024-bit MODP), generator 2. Reduced "test" profile.
  static DhGroup modp1024();
  /// Arbitrary parameters with no validation. Only for hand-checkable toy
  /// groups in tests; production code uses the named groups above.
  static DhGroup unchecked_for_testing(BigInt prime, BigInt generator, int exponent_bits);
};

struct DhKeyPair {
  BigInt secret_exponent;
  BigInt public_exponential;

  /// Recomputes the public half from a chosen exponent (tests, toy groups).
  static DhKeyPair from_secret(const DhGroup& group, BigInt secret);
};

/// True iff 1 < value < p - 1.
bool is_valid_public(const DhGroup& group, const BigInt& value);

DhKeyPair generate_dh_keypair(const DhGroup& group, RandomSource& rng);

/// peer^secret mod p, big-endian at the modulus width. Degenerate peer values
/// throw ProtocolViolation.
Bytes compute_shared_secret(const DhKeyPair& own, const BigInt& peer_exponential, const DhGroup& group);

inline constexpr std::size_t kNonceSize = 32;

struct Nonce {
  std::array<std::uint8_t, kNonceSize> bytes{};

  static Nonce random(RandomSource& rng);
  BytesView view() const { return bytes; }
  friend bool operator==(const Nonce&, const Nonce&) = default;
};

inline constexpr std::size_t kKeySize = 32;
using Key = std::array<std::uint8_t, kKeySize>;

struct SessionKeys {
  Bytes k_dh;
  Key k_e{};
  Key k_a{};

  /// Zeroes the raw shared secret and drops it.
  void forget_shared_secret();
};

Digest hash(BytesView data);
Digest keyed_hash(BytesView key, BytesView data);
bool constant_time_equal(BytesView a, BytesView b);

/// k_e = H_{k_dh}(n_initiator || n_responder || "1"), k_a likewise with "2".
/// Argument order is always (initiator nonce, responder nonce).
SessionKeys derive_session_keys(BytesView k_dh, const Nonce& n_initiator, const Nonce& n_responder);

inline constexpr std::size_t kIvSize = 16;
inline constexpr std::size_t kCipherBlock = 16;

/// AES-256-CBC ciphertext plus HMAC-SHA-256 tag over (iv || ciphertext).
/// Encoded as iv(16) || u32 ciphertext length || ciphertext || tag(32).
struct SealedEnvelope {
  std::array<std::uint8_t, kIvSize> iv{};
  Bytes ciphertext;
  Digest tag{};

  Bytes encode() const;
  static SealedEnvelope decode(BytesView data);
  friend bool operator==(const SealedEnvelope&, const SealedEnvelope&) = default;
};

SealedEnvelope seal(BytesView message, const SessionKeys& keys, RandomSource& rng);
/// Verifies the tag before touching the ciphertext; mismatch throws IntegrityError.
Bytes open(const SealedEnvelope& envelope, const SessionKeys& keys);

enum class SignatureScheme { Rsa, Ed25519 };

struct SignatureSpec {
  SignatureScheme scheme = SignatureScheme::Rsa;
  int rsa_bits = 2048;
};

class VerificationKey {
 public:
  /// Empty key; verifies nothing until assigned.
  VerificationKey() = default;
  static VerificationKey from_pem(std::string_view pem);
  std::string to_pem() const;
  /// SubjectPublicKeyInfo DER.
  Bytes der() const;
  SignatureScheme scheme() const;
  EVP_PKEY* get() const { return key_.get(); }
  bool empty() const { return !key_; }

  friend bool operator==(const VerificationKey& a, const VerificationKey& b);

 private:
  friend class SignatureKeyPair;
  explicit VerificationKey(std::shared_ptr<EVP_PKEY> key) : key_(std::move(key)) {}
  std::shared_ptr<EVP_PKEY> key_;
};

class SignatureKeyPair {
 public:
  /// Empty key; signing throws CryptoError until assigned.
  SignatureKeyPair() = default;
  static SignatureKeyPair generate(const SignatureSpec& spec);
  /// Deterministic Ed25519 key from a 32-byte seed.
  static SignatureKeyPair ed25519_from_seed(BytesView seed);
  static SignatureKeyPair from_pem(std::string_view pem);
  std::string to_pem() const;

  VerificationKey verification_key() const;
  SignatureScheme scheme() const;
  EVP_PKEY* get() const { return key_.get(); }
  bool empty() const { return !key_; }

 private:
  explicit SignatureKeyPair(std::shared_ptr<EVP_PKEY> key) : key_(std::move(key)) {}
  std::shared_ptr<EVP_PKEY> key_;
};

/// RSA: PKCS#1 v1.5 over SHA-256. Ed25519: pure EdDSA. Both deterministic.
Bytes sign(BytesView data, const SignatureKeyPair& key);
/// Returns false on any verification failure, including malformed signatures.
bool verify(BytesView data, BytesView signature, const VerificationKey& key);

/// Short public tag for a key pair (first 8 bytes of a hash, hex). Safe to
/// print; lets two operators compare sessions without revealing keys.
std::string key_fingerprint(const Key& k_e, const Key& k_a);

enum class ParamProfile { Full, Test };

struct ProfileParams {
  DhGroup group;
  SignatureSpec signature;
};

/// Full: 2048-bit MODP + RSA-2048. Test: 1024-bit MODP + Ed25519.
ProfileParams profile_params(ParamProfile profile);
ParamProfile parse_profile(std::string_view name);
std::string_view profile_name(ParamProfile profile);

}  // namespace stcp::crypto
