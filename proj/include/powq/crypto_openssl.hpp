#pragma once

// Production-grade suite: SHA3-256 for both the block list and the puzzle,
// Ed25519 for leader signatures. Requires linking against OpenSSL's libcrypto.

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <stdexcept>

#include "powq/crypto.hpp"

namespace powq {

struct Sha3Ed25519Crypto {
  static constexpr std::size_t digest_size = 32;
  using Digest = FixedBytes<DigestTag, 32>;
  using PublicKey = FixedBytes<PublicKeyTag, 32>;
  using Signature = FixedBytes<SignatureTag, 64>;

  struct KeyPair {
    PublicKey public_key;
    std::shared_ptr<EVP_PKEY> secret;
  };

  static Digest max_digest() { return Digest::filled(0xff); }

  static Digest sha3(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b = {},
                     std::span<const std::uint8_t> c = {}) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    Digest out;
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha3_256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), a.data(), a.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), b.data(), b.size()) != 1 ||
        EVP_DigestUpdate(ctx.get(), c.data(), c.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), out.data.data(), &len) != 1 || len != 32) {
      throw std::runtime_error("SHA3-256 evaluation failed");
    }
    return out;
  }

  static Digest hash_pow(const Digest& ref, const PublicKey& voter, Nonce solution) {
    std::array<std::uint8_t, 8> s{};
    for (int i = 0; i < 8; ++i) s[i] = static_cast<std::uint8_t>(solution >> (8 * i));
    return sha3(ref.bytes(), voter.bytes(), s);
  }

  static Digest hash_list(std::span<const std::uint8_t> bytes) { return sha3(bytes); }

  static KeyPair generate_keypair(Rng& rng) {
    std::array<std::uint8_t, 32> seed{};
    for (std::size_t i = 0; i < seed.size(); i += 8) {
      const std::uint64_t word = rng();
      for (std::size_t j = 0; j < 8; ++j) seed[i + j] = static_cast<std::uint8_t>(word >> (8 * j));
    }
    std::shared_ptr<EVP_PKEY> key(
        EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()),
        &EVP_PKEY_free);
    if (!key) throw std::runtime_error("Ed25519 key generation failed");
    KeyPair pair{{}, key};
    std::size_t len = PublicKey::size;
    if (EVP_PKEY_get_raw_public_key(key.get(), pair.public_key.data.data(), &len) != 1 ||
        len != PublicKey::size) {
      throw std::runtime_error("Ed25519 public key export failed");
    }
    return pair;
  }

  static Signature sign(const KeyPair& keys, const Digest& message) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    Signature sig;
    std::size_t len = Signature::size;
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, keys.secret.get()) != 1 ||
        EVP_DigestSign(ctx.get(), sig.data.data(), &len, message.data.data(), Digest::size) != 1 ||
        len != Signature::size) {
      throw std::runtime_error("Ed25519 signing failed");
    }
    return sig;
  }

  static bool check_signature(const PublicKey& key, const Digest& message, const Signature& sig) {
    std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)> pkey(
        EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, key.data.data(), PublicKey::size),
        &EVP_PKEY_free);
    if (!pkey) return false;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1) return false;
    return EVP_DigestVerify(ctx.get(), sig.data.data(), Signature::size, message.data.data(),
                            Digest::size) == 1;
  }
};

static_assert(CryptoSuite<Sha3Ed25519Crypto>);

}  // namespace powq
