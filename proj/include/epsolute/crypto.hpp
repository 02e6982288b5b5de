#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>

#include "epsolute/bytes.hpp"
#include "epsolute/random.hpp"

namespace epsolute {

class SymKey {
  public:
    SymKey(Bytes bytes);

    std::size_t bits() const { return bytes_.size() * 8; }
    ByteView bytes() const { return bytes_; }

    friend bool operator==(const SymKey&, const SymKey&) = default;

  private:
    Bytes bytes_;
};

// Draws a uniformly random key of `bits` bits. Only 128 and 256 are accepted.
SymKey keygen(std::size_t bits, Rng& rng);

constexpr std::size_t kIvSize = 16;
constexpr std::size_t kTagSize = 16;
constexpr std::size_t kCiphertextOverhead = kIvSize + kTagSize;

// Serialized layout: iv || body || tag.
struct Ciphertext {
    std::array<std::uint8_t, kIvSize> iv{};
    Bytes body;
    std::array<std::uint8_t, kTagSize> tag{};

    std::size_t serialized_size() const { return kCiphertextOverhead + body.size(); }
    Bytes serialize() const;
    void serialize_into(Bytes& out) const;
    static Ciphertext parse(ByteView data);
};

// AES-GCM with a random 128-bit IV per message. Holds a reusable cipher
// context, so one instance must not be shared between threads.
class BlockCipher {
  public:
    BlockCipher(SymKey key, std::size_t max_plaintext);
    ~BlockCipher();
    BlockCipher(BlockCipher&&) noexcept;
    BlockCipher& operator=(BlockCipher&&) noexcept;
    BlockCipher(const BlockCipher&) = delete;
    BlockCipher& operator=(const BlockCipher&) = delete;

    std::size_t max_plaintext() const { return max_plaintext_; }
    std::size_t ciphertext_size(std::size_t plaintext) const {
        return plaintext + kCiphertextOverhead;
    }

    Ciphertext encrypt(ByteView plaintext, Rng& rng);
    Bytes decrypt(const Ciphertext& c);

    // Appends the serialized ciphertext to `out`; avoids the intermediate
    // Ciphertext on the ORAM hot path.
    void encrypt_append(ByteView plaintext, Rng& rng, Bytes& out);
    // Decrypts a serialized ciphertext in place into `out` (resized).
    void decrypt_serialized(ByteView serialized, Bytes& out);

  private:
    struct Context;
    SymKey key_;
    std::size_t max_plaintext_;
    std::unique_ptr<Context> ctx_;
};

Ciphertext encrypt_block(const SymKey& key, ByteView plaintext, std::size_t max_plaintext,
                         Rng& rng);
Bytes decrypt_block(const SymKey& key, const Ciphertext& c);

constexpr std::size_t kPrfSize = 32;
using PrfOutput = std::array<std::uint8_t, kPrfSize>;

// HMAC-SHA256.
PrfOutput prf(const SymKey& key, ByteView input);

// Maps a record ID to a partition in [0, parts) through the PRF.
std::uint32_t prf_partition(const SymKey& key, std::uint64_t record_id, std::uint32_t parts);

} // namespace epsolute
