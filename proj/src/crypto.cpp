#include "stcp/crypto.hpp"

#include <openssl/bio.h>
#include <openssl/bn.h>
#include <openssl/crypto.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/sha.h>
#include <openssl/x509.h>

#include "stcp/error.hpp"

namespace stcp::crypto {

namespace {

[[noreturn]] void throw_openssl(const std::string& what) {
  unsigned long err = ERR_get_error();
  std::string detail;
  if (err != 0) {
    char buf[256];
    ERR_error_string_n(err, buf, sizeof(buf));
    detail = std::string(": ") + buf;
  }
  ERR_clear_error();
  throw CryptoError(what + detail);
}

struct BnCtxDeleter {
  void operator()(BN_CTX* c) const { BN_CTX_free(c); }
};
using BnCtxPtr = std::unique_ptr<BN_CTX, BnCtxDeleter>;

BnCtxPtr new_bn_ctx() {
  BnCtxPtr ctx(BN_CTX_secure_new());
  if (!ctx) throw_openssl("BN_CTX_new failed");
  return ctx;
}

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
struct BioDeleter {
  void operator()(BIO* b) const { BIO_free(b); }
};
using BioPtr = std::unique_ptr<BIO, BioDeleter>;

std::shared_ptr<EVP_PKEY> wrap_pkey(EVP_PKEY* key) {
  return std::shared_ptr<EVP_PKEY>(key, EVP_PKEY_free);
}

SignatureScheme scheme_of(const EVP_PKEY* key) {
  if (!key) throw CryptoError("empty signature key");
  switch (EVP_PKEY_get_base_id(key)) {
    case EVP_PKEY_RSA: return SignatureScheme::Rsa;
    case EVP_PKEY_ED25519: return SignatureScheme::Ed25519;
    default: throw ConfigError("unsupported signature key type");
  }
}

std::string bio_to_string(BIO* bio) {
  char* data = nullptr;
  long len = BIO_get_mem_data(bio, &data);
  return std::string(data, static_cast<std::size_t>(len));
}

const EVP_MD* digest_for(const EVP_PKEY* key) {
  return scheme_of(key) == SignatureScheme::Rsa ? EVP_sha256() : nullptr;
}

}  // namespace

// --- random ---------------------------------------------------------------

void SystemRandom::fill(std::span<std::uint8_t> out) {
  if (out.empty()) return;
  if (RAND_bytes(out.data(), static_cast<int>(out.size())) != 1) throw_openssl("entropy source failure");
}

SystemRandom& SystemRandom::instance() {
  static SystemRandom rng;
  return rng;
}

DeterministicRandom::DeterministicRandom(std::uint64_t seed, std::string_view stream) {
  ByteWriter w;
  w.u64(seed);
  w.raw(as_view(stream));
  seed_ = std::move(w).take();
}

void DeterministicRandom::fill(std::span<std::uint8_t> out) {
  for (auto& b : out) {
    if (used_ == kDigestSize) {
      ByteWriter w;
      w.raw(seed_);
      w.u64(counter_++);
      block_ = hash(w.bytes());
      used_ = 0;
    }
    b = block_[used_++];
  }
}

// --- BigInt ---------------------------------------------------------------

BigInt::BigInt() : bn_(BN_new()) {
  if (!bn_) throw_openssl("BN_new failed");
}

BigInt::BigInt(unsigned long value) : BigInt() {
  if (BN_set_word(bn_, value) != 1) throw_openssl("BN_set_word failed");
}

BigInt BigInt::from_bytes(BytesView big_endian) {
  BIGNUM* bn = BN_bin2bn(big_endian.data(), static_cast<int>(big_endian.size()), nullptr);
  if (!bn) throw_openssl("BN_bin2bn failed");
  return BigInt(bn);
}

BigInt BigInt::from_hex(std::string_view hex) {
  std::string s(hex);
  BIGNUM* bn = nullptr;
  if (BN_hex2bn(&bn, s.c_str()) != static_cast<int>(s.size())) {
    BN_free(bn);
    throw CodecError("invalid big-integer hex", 0);
  }
  return BigInt(bn);
}

BigInt::BigInt(const BigInt& other) : bn_(BN_dup(other.bn_)) {
  if (!bn_) throw_openssl("BN_dup failed");
}

BigInt& BigInt::operator=(const BigInt& other) {
  if (this != &other) {
    BigInt copy(other);
    std::swap(bn_, copy.bn_);
  }
  return *this;
}

BigInt::BigInt(BigInt&& other) noexcept : bn_(other.bn_) { other.bn_ = nullptr; }

BigInt& BigInt::operator=(BigInt&& other) noexcept {
  std::swap(bn_, other.bn_);
  return *this;
}

BigInt::~BigInt() { BN_clear_free(bn_); }

Bytes BigInt::to_bytes(std::size_t width) const {
  Bytes out(width);
  if (BN_bn2binpad(bn_, out.data(), static_cast<int>(width)) < 0) {
    throw CryptoError("integer does not fit in " + std::to_string(width) + " bytes");
  }
  return out;
}

Bytes BigInt::to_bytes() const { return to_bytes(static_cast<std::size_t>(BN_num_bytes(bn_))); }

std::string BigInt::to_hex() const {
  char* s = BN_bn2hex(bn_);
  std::string out(s);
  OPENSSL_free(s);
  return out;
}

int BigInt::num_bits() const { return BN_num_bits(bn_); }
bool BigInt::is_zero() const { return BN_is_zero(bn_) == 1; }

bool operator==(const BigInt& a, const BigInt& b) { return BN_cmp(a.bn_, b.bn_) == 0; }

std::strong_ordering operator<=>(const BigInt& a, const BigInt& b) {
  int c = BN_cmp(a.bn_, b.bn_);
  if (c < 0) return std::strong_ordering::less;
  if (c > 0) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

// --- Diffie-Hellman -------------------------------------------------------

std::size_t DhGroup::modulus_bytes() const { return static_cast<std::size_t>((prime_modulus.num_bits() + 7) / 8); }

DhGroup DhGroup::modp2048() {
  BIGNUM* p = BN_get_rfc3526_prime_2048(nullptr);
  if (!p) throw_openssl("loading MODP-2048 prime failed");
  std::array<std::uint8_t, 256> buf{};
  BN_bn2binpad(p, buf.data(), static_cast<int>(buf.size()));
  BN_free(p);
  return DhGroup{"modp2048", BigInt::from_bytes(buf), BigInt(2), 256};
}

DhGroup DhGroup::modp1024() {
  BIGNUM* p = BN_get_rfc2409_prime_1024(nullptr);
  if (!p) throw_openssl("loading MODP-1024 prime failed");
  std::array<std::uint8_t, 128> buf{};
  BN_bn2binpad(p, buf.data(), static_cast<int>(buf.size()));
  BN_free(p);
  return DhGroup{"modp1024", BigInt::from_bytes(buf), BigInt(2), 256};
}

DhGroup DhGroup::unchecked_for_testing(BigInt prime, BigInt generator, int exponent_bits) {
  return DhGroup{"test", std::move(prime), std::move(generator), exponent_bits};
}

bool is_valid_public(const DhGroup& group, const BigInt& value) {
  BigInt upper = group.prime_modulus;
  if (BN_sub_word(upper.get(), 1) != 1) throw_openssl("BN_sub_word failed");
  return value > BigInt(1) && value < upper;
}

namespace {
BigInt mod_exp(const BigInt& base, const BigInt& exponent, const BigInt& modulus) {
  auto ctx = new_bn_ctx();
  BigInt secret = exponent;
  BN_set_flags(secret.get(), BN_FLG_CONSTTIME);
  BigInt out;
  if (BN_mod_exp(out.get(), base.get(), secret.get(), modulus.get(), ctx.get()) != 1) {
    throw_openssl("modular exponentiation failed");
  }
  return out;
}
}  // namespace

DhKeyPair DhKeyPair::from_secret(const DhGroup& group, BigInt secret) {
  BigInt pub = mod_exp(group.generator, secret, group.prime_modulus);
  return DhKeyPair{std::move(secret), std::move(pub)};
}

DhKeyPair generate_dh_keypair(const DhGroup& group, RandomSource& rng) {
  const int bits = group.exponent_bits;
  const std::size_t nbytes = static_cast<std::size_t>((bits + 7) / 8);
  for (;;) {
    Bytes raw = rng.bytes(nbytes);
    // Trim to exactly `bits` bits and force the top one: [2^(bits-1), 2^bits).
    const int excess = static_cast<int>(nbytes * 8) - bits;
    raw[0] &= static_cast<std::uint8_t>(0xff >> excess);
    raw[0] |= static_cast<std::uint8_t>(0x80 >> excess);
    auto pair = DhKeyPair::from_secret(group, BigInt::from_bytes(raw));
    OPENSSL_cleanse(raw.data(), raw.size());
    if (is_valid_public(group, pair.public_exponential)) return pair;
  }
}

Bytes compute_shared_secret(const DhKeyPair& own, const BigInt& peer_exponential, const DhGroup& group) {
  if (!is_valid_public(group, peer_exponential)) {
    throw ProtocolViolation("degenerate Diffie-Hellman exponential");
  }
  return mod_exp(peer_exponential, own.secret_exponent, group.prime_modulus).to_bytes(group.modulus_bytes());
}

// --- hashing and key derivation --------------------------------------------

Nonce Nonce::random(RandomSource& rng) {
  Nonce n;
  rng.fill(n.bytes);
  return n;
}

void SessionKeys::forget_shared_secret() {
  if (!k_dh.empty()) OPENSSL_cleanse(k_dh.data(), k_dh.size());
  k_dh.clear();
  k_dh.shrink_to_fit();
}

Digest hash(BytesView data) {
  Digest out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest keyed_hash(BytesView key, BytesView data) {
  Digest out{};
  unsigned int len = 0;
  static const std::uint8_t kEmpty = 0;
  const void* key_ptr = key.empty() ? &kEmpty : key.data();
  if (!HMAC(EVP_sha256(), key_ptr, static_cast<int>(key.size()), data.data(), data.size(), out.data(), &len) ||
      len != out.size()) {
    throw_openssl("HMAC failed");
  }
  return out;
}

bool constant_time_equal(BytesView a, BytesView b) {
  if (a.size() != b.size()) return false;
  return CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

SessionKeys derive_session_keys(BytesView k_dh, const Nonce& n_initiator, const Nonce& n_responder) {
  if (k_dh.empty()) throw ProtocolViolation("empty shared secret");
  static constexpr std::uint8_t kEncLabel[] = {'1'};
  static constexpr std::uint8_t kMacLabel[] = {'2'};
  SessionKeys keys;
  keys.k_dh.assign(k_dh.begin(), k_dh.end());
  keys.k_e = keyed_hash(k_dh, concat(n_initiator.view(), n_responder.view(), BytesView(kEncLabel)));
  keys.k_a = keyed_hash(k_dh, concat(n_initiator.view(), n_responder.view(), BytesView(kMacLabel)));
  return keys;
}

// --- encrypt-then-MAC ------------------------------------------------------

Bytes SealedEnvelope::encode() const {
  ByteWriter w;
  w.raw(iv);
  w.var32(ciphertext);
  w.raw(tag);
  return std::move(w).take();
}

SealedEnvelope SealedEnvelope::decode(BytesView data) {
  ByteReader r(data);
  SealedEnvelope env;
  env.iv = r.fixed<kIvSize>();
  auto ct = r.var32();
  if (ct.size() % kCipherBlock != 0 || ct.empty()) {
    throw CodecError("ciphertext length is not a positive multiple of the block size", r.offset());
  }
  env.ciphertext.assign(ct.begin(), ct.end());
  env.tag = r.fixed<kDigestSize>();
  r.expect_end();
  return env;
}

namespace {
Digest envelope_tag(const SessionKeys& keys, const SealedEnvelope& env) {
  return keyed_hash(keys.k_a, concat(BytesView(env.iv), BytesView(env.ciphertext)));
}
}  // namespace

SealedEnvelope seal(BytesView message, const SessionKeys& keys, RandomSource& rng) {
  SealedEnvelope env;
  rng.fill(env.iv);

  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, keys.k_e.data(), env.iv.data()) != 1) {
    throw_openssl("cipher init failed");
  }
  env.ciphertext.resize(message.size() + kCipherBlock);
  int len1 = 0, len2 = 0;
  if (EVP_EncryptUpdate(ctx.get(), env.ciphertext.data(), &len1, message.data(), static_cast<int>(message.size())) !=
          1 ||
      EVP_EncryptFinal_ex(ctx.get(), env.ciphertext.data() + len1, &len2) != 1) {
    throw_openssl("encryption failed");
  }
  env.ciphertext.resize(static_cast<std::size_t>(len1 + len2));
  env.tag = envelope_tag(keys, env);
  return env;
}

Bytes open(const SealedEnvelope& envelope, const SessionKeys& keys) {
  if (!constant_time_equal(envelope_tag(keys, envelope), envelope.tag)) {
    throw IntegrityError("envelope MAC mismatch");
  }
  std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter> ctx(EVP_CIPHER_CTX_new());
  if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_cbc(), nullptr, keys.k_e.data(), envelope.iv.data()) != 1) {
    throw_openssl("cipher init failed");
  }
  Bytes out(envelope.ciphertext.size() + kCipherBlock);
  int len1 = 0, len2 = 0;
  if (EVP_DecryptUpdate(ctx.get(), out.data(), &len1, envelope.ciphertext.data(),
                        static_cast<int>(envelope.ciphertext.size())) != 1 ||
      EVP_DecryptFinal_ex(ctx.get(), out.data() + len1, &len2) != 1) {
    ERR_clear_error();
    // Authenticated but badly padded: the sender used a different k_e.
    throw IntegrityError("envelope padding invalid");
  }
  out.resize(static_cast<std::size_t>(len1 + len2));
  return out;
}

// --- signatures ------------------------------------------------------------

VerificationKey VerificationKey::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* key = bio ? PEM_read_bio_PUBKEY(bio.get(), nullptr, nullptr, nullptr) : nullptr;
  if (!key) {
    ERR_clear_error();
    throw ConfigError("malformed public key PEM");
  }
  auto wrapped = wrap_pkey(key);
  scheme_of(key);
  return VerificationKey(std::move(wrapped));
}

std::string VerificationKey::to_pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_PUBKEY(bio.get(), key_.get()) != 1) throw_openssl("writing public key failed");
  return bio_to_string(bio.get());
}

Bytes VerificationKey::der() const {
  if (empty()) throw CryptoError("empty verification key");
  int len = i2d_PUBKEY(key_.get(), nullptr);
  if (len <= 0) throw_openssl("encoding public key failed");
  Bytes out(static_cast<std::size_t>(len));
  unsigned char* p = out.data();
  i2d_PUBKEY(key_.get(), &p);
  return out;
}

SignatureScheme VerificationKey::scheme() const { return scheme_of(key_.get()); }

bool operator==(const VerificationKey& a, const VerificationKey& b) {
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return a.der() == b.der();
}

SignatureKeyPair SignatureKeyPair::generate(const SignatureSpec& spec) {
  EVP_PKEY* key = nullptr;
  if (spec.scheme == SignatureScheme::Rsa) {
    if (spec.rsa_bits < 1024) throw ConfigError("RSA keys below 1024 bits are not supported");
    key = EVP_PKEY_Q_keygen(nullptr, nullptr, "RSA", static_cast<std::size_t>(spec.rsa_bits));
  } else {
    key = EVP_PKEY_Q_keygen(nullptr, nullptr, "ED25519");
  }
  if (!key) throw_openssl("signature key generation failed");
  return SignatureKeyPair(wrap_pkey(key));
}

SignatureKeyPair SignatureKeyPair::ed25519_from_seed(BytesView seed) {
  if (seed.size() != 32) throw ConfigError("Ed25519 seed must be 32 bytes");
  EVP_PKEY* key = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size());
  if (!key) throw_openssl("Ed25519 key construction failed");
  return SignatureKeyPair(wrap_pkey(key));
}

SignatureKeyPair SignatureKeyPair::from_pem(std::string_view pem) {
  BioPtr bio(BIO_new_mem_buf(pem.data(), static_cast<int>(pem.size())));
  EVP_PKEY* key = bio ? PEM_read_bio_PrivateKey(bio.get(), nullptr, nullptr, nullptr) : nullptr;
  if (!key) {
    ERR_clear_error();
    throw ConfigError("malformed private key PEM");
  }
  auto wrapped = wrap_pkey(key);
  scheme_of(key);
  return SignatureKeyPair(std::move(wrapped));
}

std::string SignatureKeyPair::to_pem() const {
  BioPtr bio(BIO_new(BIO_s_mem()));
  if (!bio || PEM_write_bio_PrivateKey(bio.get(), key_.get(), nullptr, nullptr, 0, nullptr, nullptr) != 1) {
    throw_openssl("writing private key failed");
  }
  return bio_to_string(bio.get());
}

VerificationKey SignatureKeyPair::verification_key() const {
  int len = i2d_PUBKEY(key_.get(), nullptr);
  if (len <= 0) throw_openssl("encoding public key failed");
  Bytes der(static_cast<std::size_t>(len));
  unsigned char* p = der.data();
  i2d_PUBKEY(key_.get(), &p);
  const unsigned char* q = der.data();
  EVP_PKEY* pub = d2i_PUBKEY(nullptr, &q, len);
  if (!pub) throw_openssl("decoding public key failed");
  return VerificationKey(wrap_pkey(pub));
}

SignatureScheme SignatureKeyPair::scheme() const { return scheme_of(key_.get()); }

Bytes sign(BytesView data, const SignatureKeyPair& key) {
  if (key.empty()) throw CryptoError("signing with an empty key");
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, digest_for(key.get()), nullptr, key.get()) != 1) {
    throw_openssl("sign init failed");
  }
  std::size_t len = 0;
  if (EVP_DigestSign(ctx.get(), nullptr, &len, data.data(), data.size()) != 1) throw_openssl("sign failed");
  Bytes sig(len);
  if (EVP_DigestSign(ctx.get(), sig.data(), &len, data.data(), data.size()) != 1) throw_openssl("sign failed");
  sig.resize(len);
  return sig;
}

bool verify(BytesView data, BytesView signature, const VerificationKey& key) {
  if (key.empty()) return false;
  std::unique_ptr<EVP_MD_CTX, MdCtxDeleter> ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, digest_for(key.get()), nullptr, key.get()) != 1) {
    ERR_clear_error();
    return false;
  }
  int rc = EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), data.data(), data.size());
  ERR_clear_error();
  return rc == 1;
}

std::string key_fingerprint(const Key& k_e, const Key& k_a) {
  const auto d = hash(concat(as_view("stcp-fingerprint"), k_e, k_a));
  return to_hex(BytesView(d).first(8));
}

// --- parameter profiles ----------------------------------------------------

ProfileParams profile_params(ParamProfile profile) {
  if (profile == ParamProfile::Full) {
    return {DhGroup::modp2048(), SignatureSpec{SignatureScheme::Rsa, 2048}};
  }
  return {DhGroup::modp1024(), SignatureSpec{SignatureScheme::Ed25519, 0}};
}

ParamProfile parse_profile(std::string_view name) {
  if (name == "full") return ParamProfile::Full;
  if (name == "test") return ParamProfile::Test;
  throw UsageError("unknown parameter profile '" + std::string(name) + "' (expected full|test)");
}

std::string_view profile_name(ParamProfile profile) { return profile == ParamProfile::Full ? "full" : "test"; }

}  // namespace stcp::crypto
