#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epsolute/bytes.hpp"

// Binary frames between RemoteStore and KvsServer.
//
//   request:  [u32 length][u8 opcode][payload]
//   response: [u32 length][u8 0x80|opcode][u8 status][payload]
//
// `length` counts the bytes after the length field. All integers are
// big-endian.
//
//   GET        req: u64 key                       ok: u32 len, value
//   PUT        req: u64 key, u32 len, value       ok: -
//   BATCH_GET  req: u32 n, n x u64 key            ok: u32 n, n x (u32 len, value)
//                                         not found: u32 n, n x u64 missing key
//   BATCH_PUT  req: u32 n, n x (u64 key, u32 len, value)   ok: -
//   CLEAR      req: -                             ok: -
namespace epsolute {

enum class Opcode : std::uint8_t {
    get = 0x01,
    put = 0x02,
    batch_get = 0x03,
    batch_put = 0x04,
    clear = 0x05,
};

enum class Status : std::uint8_t {
    ok = 0x00,
    not_found = 0x01,
    bad_request = 0x02,
    server_error = 0x03,
};

constexpr std::uint8_t kResponseBit = 0x80;
constexpr std::uint32_t kMaxFrame = 1u << 30;

struct WireRequest {
    Opcode op = Opcode::get;
    std::vector<std::uint64_t> keys;
    std::vector<Bytes> values;

    friend bool operator==(const WireRequest&, const WireRequest&) = default;
};

struct WireResponse {
    Opcode op = Opcode::get;
    Status status = Status::ok;
    std::vector<Bytes> values;
    std::vector<std::uint64_t> missing;

    friend bool operator==(const WireResponse&, const WireResponse&) = default;
};

// Encoders return the complete frame including the length prefix.
Bytes encode_request(const WireRequest& request);
Bytes encode_response(const WireResponse& response);

// Decoders take the frame body (everything after the length prefix) and
// throw FormatError on malformed input.
WireRequest decode_request(ByteView body);
WireResponse decode_response(ByteView body);

} // namespace epsolute
