#include "epsolute/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <cstring>
#include <string>

#include "epsolute/error.hpp"

namespace epsolute {

namespace {

const EVP_CIPHER* cipher_for(std::size_t key_bytes) {
    return key_bytes == 16 ? EVP_aes_128_gcm() : EVP_aes_256_gcm();
}

void check(int ok, const char* what) {
    if (ok != 1) {
        throw Error(std::string("openssl: ") + what + " failed");
    }
}

} // namespace

SymKey::SymKey(Bytes bytes) : bytes_(std::move(bytes)) {
    if (bytes_.size() != 16 && bytes_.size() != 32) {
        throw ParameterError("key must be 128 or 256 bits, got " +
                             std::to_string(bytes_.size() * 8));
    }
}

SymKey keygen(std::size_t bits, Rng& rng) {
    if (bits != 128 && bits != 256) {
        throw ParameterError("unsupported key size " + std::to_string(bits) + " bits");
    }
    Bytes bytes(bits / 8);
    rng.fill(bytes);
    return SymKey(std::move(bytes));
}

Bytes Ciphertext::serialize() const {
    Bytes out;
    out.reserve(serialized_size());
    serialize_into(out);
    return out;
}

void Ciphertext::serialize_into(Bytes& out) const {
    out.insert(out.end(), iv.begin(), iv.end());
    out.insert(out.end(), body.begin(), body.end());
    out.insert(out.end(), tag.begin(), tag.end());
}

Ciphertext Ciphertext::parse(ByteView data) {
    if (data.size() < kCiphertextOverhead) {
        throw FormatError("ciphertext shorter than iv + tag (" + std::to_string(data.size()) +
                          " bytes)");
    }
    Ciphertext c;
    std::copy_n(data.begin(), kIvSize, c.iv.begin());
    c.body.assign(data.begin() + kIvSize, data.end() - kTagSize);
    std::copy(data.end() - kTagSize, data.end(), c.tag.begin());
    return c;
}

struct BlockCipher::Context {
    EVP_CIPHER_CTX* enc = nullptr;
    EVP_CIPHER_CTX* dec = nullptr;

    ~Context() {
        EVP_CIPHER_CTX_free(enc);
        EVP_CIPHER_CTX_free(dec);
    }
};

BlockCipher::BlockCipher(SymKey key, std::size_t max_plaintext)
    : key_(std::move(key)), max_plaintext_(max_plaintext), ctx_(std::make_unique<Context>()) {
    const auto* cipher = cipher_for(key_.bytes().size());
    ctx_->enc = EVP_CIPHER_CTX_new();
    ctx_->dec = EVP_CIPHER_CTX_new();
    if (ctx_->enc == nullptr || ctx_->dec == nullptr) {
        throw Error("openssl: cannot allocate cipher context");
    }
    check(EVP_EncryptInit_ex(ctx_->enc, cipher, nullptr, nullptr, nullptr), "EncryptInit");
    check(EVP_CIPHER_CTX_ctrl(ctx_->enc, EVP_CTRL_GCM_SET_IVLEN, kIvSize, nullptr), "ivlen");
    check(EVP_EncryptInit_ex(ctx_->enc, nullptr, nullptr, key_.bytes().data(), nullptr),
          "EncryptInit key");
    check(EVP_DecryptInit_ex(ctx_->dec, cipher, nullptr, nullptr, nullptr), "DecryptInit");
    check(EVP_CIPHER_CTX_ctrl(ctx_->dec, EVP_CTRL_GCM_SET_IVLEN, kIvSize, nullptr), "ivlen");
    check(EVP_DecryptInit_ex(ctx_->dec, nullptr, nullptr, key_.bytes().data(), nullptr),
          "DecryptInit key");
}

BlockCipher::~BlockCipher() = default;
BlockCipher::BlockCipher(BlockCipher&&) noexcept = default;
BlockCipher& BlockCipher::operator=(BlockCipher&&) noexcept = default;

void BlockCipher::encrypt_append(ByteView plaintext, Rng& rng, Bytes& out) {
    if (plaintext.size() > max_plaintext_) {
        throw SizeError("plaintext of " + std::to_string(plaintext.size()) +
                        " bytes exceeds block payload " + std::to_string(max_plaintext_));
    }
    const auto start = out.size();
    out.resize(start + plaintext.size() + kCiphertextOverhead);
    auto* iv = out.data() + start;
    auto* body = iv + kIvSize;
    auto* tag = body + plaintext.size();
    rng.fill({iv, kIvSize});

    auto* ctx = ctx_->enc;
    check(EVP_EncryptInit_ex(ctx, nullptr, nullptr, nullptr, iv), "EncryptInit iv");
    int len = 0;
    if (!plaintext.empty()) {
        check(EVP_EncryptUpdate(ctx, body, &len, plaintext.data(),
                                static_cast<int>(plaintext.size())),
              "EncryptUpdate");
    }
    int tail = 0;
    check(EVP_EncryptFinal_ex(ctx, body + len, &tail), "EncryptFinal");
    check(EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_GET_TAG, kTagSize, tag), "get tag");
}

void BlockCipher::decrypt_serialized(ByteView serialized, Bytes& out) {
    if (serialized.size() < kCiphertextOverhead) {
        throw FormatError("ciphertext shorter than iv + tag (" +
                          std::to_string(serialized.size()) + " bytes)");
    }
    const auto body_size = serialized.size() - kCiphertextOverhead;
    const auto* iv = serialized.data();
    const auto* body = iv + kIvSize;
    // EVP wants a mutable tag pointer.
    std::array<std::uint8_t, kTagSize> tag;
    std::copy_n(body + body_size, kTagSize, tag.begin());

    out.resize(body_size);
    auto* ctx = ctx_->dec;
    check(EVP_DecryptInit_ex(ctx, nullptr, nullptr, nullptr, iv), "DecryptInit iv");
    int len = 0;
    if (body_size > 0) {
        check(EVP_DecryptUpdate(ctx, out.data(), &len, body, static_cast<int>(body_size)),
              "DecryptUpdate");
    }
    check(EVP_CIPHER_CTX_ctrl(ctx, EVP_CTRL_GCM_SET_TAG, kTagSize, tag.data()), "set tag");
    int tail = 0;
    if (EVP_DecryptFinal_ex(ctx, out.data() + len, &tail) != 1) {
        throw AuthenticationError("ciphertext failed authentication");
    }
}

Ciphertext BlockCipher::encrypt(ByteView plaintext, Rng& rng) {
    Bytes serialized;
    encrypt_append(plaintext, rng, serialized);
    return Ciphertext::parse(serialized);
}

Bytes BlockCipher::decrypt(const Ciphertext& c) {
    Bytes out;
    decrypt_serialized(c.serialize(), out);
    return out;
}

Ciphertext encrypt_block(const SymKey& key, ByteView plaintext, std::size_t max_plaintext,
                         Rng& rng) {
    BlockCipher cipher(key, max_plaintext);
    return cipher.encrypt(plaintext, rng);
}

Bytes decrypt_block(const SymKey& key, const Ciphertext& c) {
    BlockCipher cipher(key, c.body.size());
    return cipher.decrypt(c);
}

PrfOutput prf(const SymKey& key, ByteView input) {
    PrfOutput out{};
    unsigned int len = 0;
    const auto* result =
        HMAC(EVP_sha256(), key.bytes().data(), static_cast<int>(key.bytes().size()),
             input.data(), input.size(), out.data(), &len);
    if (result == nullptr || len != kPrfSize) {
        throw Error("openssl: HMAC failed");
    }
    return out;
}

std::uint32_t prf_partition(const SymKey& key, std::uint64_t record_id, std::uint32_t parts) {
    if (parts == 0) {
        throw ParameterError("partition count must be positive");
    }
    Bytes input;
    put_u64_le(input, record_id);
    const auto digest = prf(key, input);
    return static_cast<std::uint32_t>(get_u64_le(digest.data()) % parts);
}

} // namespace epsolute
