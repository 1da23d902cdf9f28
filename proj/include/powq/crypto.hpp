#pragma once

#include <concepts>
#include <cstdint>
#include <span>

#include "powq/bytes.hpp"
#include "powq/rng.hpp"

namespace powq {

struct DigestTag {};
struct PublicKeyTag {};
struct SecretKeyTag {};
struct SignatureTag {};

/// What the protocol needs from its cryptography: one hash for the block
/// list, one for the proof-of-work puzzle, and a signature scheme.
template <class C>
concept CryptoSuite = requires(const typename C::Digest& d, const typename C::PublicKey& pk,
                               const typename C::KeyPair& kp, const typename C::Signature& sig,
                               std::span<const std::uint8_t> bytes, Nonce nonce, Rng& rng) {
  { C::hash_pow(d, pk, nonce) } -> std::same_as<typename C::Digest>;
  { C::hash_list(bytes) } -> std::same_as<typename C::Digest>;
  { C::generate_keypair(rng) } -> std::same_as<typename C::KeyPair>;
  { C::sign(kp, d) } -> std::same_as<typename C::Signature>;
  { C::check_signature(pk, d, sig) } -> std::same_as<bool>;
  { C::max_digest() } -> std::same_as<typename C::Digest>;
  { kp.public_key } -> std::convertible_to<typename C::PublicKey>;
};

/// Simulation-grade suite. 64-bit keyed mixing instead of a cryptographic
/// hash, and a signature that anyone can recompute: the public key doubles
/// as the signing secret. With the vote threshold at its maximum the hash
/// only has to provide a canonical, well-spread order over votes.
struct FastCrypto {
  static constexpr std::size_t digest_size = 8;
  using Digest = FixedBytes<DigestTag, 8>;
  using PublicKey = FixedBytes<PublicKeyTag, 8>;
  using Signature = FixedBytes<SignatureTag, 8>;

  struct KeyPair {
    PublicKey public_key;
    std::uint64_t secret = 0;
  };

  static constexpr std::uint64_t kPowKey = 0x6a09e667f3bcc908ULL;
  static constexpr std::uint64_t kListKey = 0xbb67ae8584caa73bULL;
  static constexpr std::uint64_t kSignKey = 0x3c6ef372fe94f82bULL;

  static Digest max_digest() { return Digest::filled(0xff); }

  static Digest hash_pow(const Digest& ref, const PublicKey& voter, Nonce solution) {
    std::uint64_t h = splitmix64(kPowKey ^ ref.prefix_u64());
    h = splitmix64(h ^ voter.prefix_u64());
    h = splitmix64(h ^ solution);
    return Digest::from_u64(h);
  }

  static std::uint64_t mix_bytes(std::uint64_t state, std::span<const std::uint8_t> bytes) {
    std::size_t i = 0;
    for (; i + 8 <= bytes.size(); i += 8) {
      std::uint64_t word = 0;
      for (std::size_t j = 0; j < 8; ++j) word |= std::uint64_t{bytes[i + j]} << (8 * j);
      state = splitmix64(state ^ word);
    }
    std::uint64_t tail = 0;
    for (std::size_t j = 0; i + j < bytes.size(); ++j) tail |= std::uint64_t{bytes[i + j]} << (8 * j);
    return splitmix64(state ^ tail ^ (std::uint64_t{bytes.size()} << 56));
  }

  static Digest hash_list(std::span<const std::uint8_t> bytes) {
    return Digest::from_u64(mix_bytes(kListKey, bytes));
  }

  static KeyPair generate_keypair(Rng& rng) {
    const std::uint64_t secret = rng();
    return KeyPair{PublicKey::from_u64(secret), secret};
  }

  static Signature sign(const KeyPair& keys, const Digest& message) {
    return Signature::from_u64(splitmix64(kSignKey ^ keys.secret) ^ splitmix64(message.prefix_u64()));
  }

  static bool check_signature(const PublicKey& key, const Digest& message, const Signature& sig) {
    return Signature::from_u64(splitmix64(kSignKey ^ key.prefix_u64()) ^
                               splitmix64(message.prefix_u64())) == sig;
  }
};

static_assert(CryptoSuite<FastCrypto>);

}  // namespace powq
