#include "epsolute/wire.hpp"

#include <string>

#include "epsolute/error.hpp"

namespace epsolute {

namespace {

class Reader {
  public:
    explicit Reader(ByteView data) : data_(data) {}

    std::uint8_t u8() {
        need(1);
        return data_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        const auto v = get_u32_be(data_.data() + pos_);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        const auto v = get_u64_be(data_.data() + pos_);
        pos_ += 8;
        return v;
    }
    Bytes blob() {
        const auto len = u32();
        need(len);
        Bytes out(data_.begin() + pos_, data_.begin() + pos_ + len);
        pos_ += len;
        return out;
    }
    // Guards count fields against allocating for elements that cannot exist.
    std::uint32_t count(std::size_t min_element) {
        const auto n = u32();
        if (min_element > 0 && n > (data_.size() - pos_) / min_element) {
            throw FormatError("frame count " + std::to_string(n) + " exceeds payload");
        }
        return n;
    }
    void finish() const {
        if (pos_ != data_.size()) {
            throw FormatError("trailing bytes in frame");
        }
    }

  private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) {
            throw FormatError("truncated frame");
        }
    }

    ByteView data_;
    std::size_t pos_ = 0;
};

void put_blob(Bytes& out, const Bytes& v) {
    put_u32_be(out, static_cast<std::uint32_t>(v.size()));
    out.insert(out.end(), v.begin(), v.end());
}

void seal(Bytes& frame) {
    const auto len = static_cast<std::uint32_t>(frame.size() - 4);
    frame[0] = static_cast<std::uint8_t>(len >> 24);
    frame[1] = static_cast<std::uint8_t>(len >> 16);
    frame[2] = static_cast<std::uint8_t>(len >> 8);
    frame[3] = static_cast<std::uint8_t>(len);
}

Opcode to_opcode(std::uint8_t raw) {
    if (raw < 0x01 || raw > 0x05) {
        throw FormatError("unknown opcode " + std::to_string(raw));
    }
    return static_cast<Opcode>(raw);
}

} // namespace

Bytes encode_request(const WireRequest& request) {
    Bytes frame(4, 0);
    frame.push_back(static_cast<std::uint8_t>(request.op));
    switch (request.op) {
    case Opcode::get:
        put_u64_be(frame, request.keys.at(0));
        break;
    case Opcode::put:
        put_u64_be(frame, request.keys.at(0));
        put_blob(frame, request.values.at(0));
        break;
    case Opcode::batch_get:
        put_u32_be(frame, static_cast<std::uint32_t>(request.keys.size()));
        for (auto k : request.keys) put_u64_be(frame, k);
        break;
    case Opcode::batch_put:
        if (request.keys.size() != request.values.size()) {
            throw ParameterError("batch_put key/value count mismatch");
        }
        put_u32_be(frame, static_cast<std::uint32_t>(request.keys.size()));
        for (std::size_t i = 0; i < request.keys.size(); ++i) {
            put_u64_be(frame, request.keys[i]);
            put_blob(frame, request.values[i]);
        }
        break;
    case Opcode::clear:
        break;
    }
    seal(frame);
    return frame;
}

WireRequest decode_request(ByteView body) {
    Reader r(body);
    WireRequest req;
    req.op = to_opcode(r.u8());
    switch (req.op) {
    case Opcode::get:
        req.keys.push_back(r.u64());
        break;
    case Opcode::put:
        req.keys.push_back(r.u64());
        req.values.push_back(r.blob());
        break;
    case Opcode::batch_get: {
        const auto n = r.count(8);
        req.keys.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) req.keys.push_back(r.u64());
        break;
    }
    case Opcode::batch_put: {
        const auto n = r.count(12);
        req.keys.reserve(n);
        req.values.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i) {
            req.keys.push_back(r.u64());
            req.values.push_back(r.blob());
        }
        break;
    }
    case Opcode::clear:
        break;
    }
    r.finish();
    return req;
}

Bytes encode_response(const WireResponse& response) {
    Bytes frame(4, 0);
    frame.push_back(static_cast<std::uint8_t>(kResponseBit | static_cast<std::uint8_t>(response.op)));
    frame.push_back(static_cast<std::uint8_t>(response.status));
    if (response.status == Status::ok) {
        if (response.op == Opcode::get) {
            put_blob(frame, response.values.at(0));
        } else if (response.op == Opcode::batch_get) {
            put_u32_be(frame, static_cast<std::uint32_t>(response.values.size()));
            for (const auto& v : response.values) put_blob(frame, v);
        }
    } else if (response.status == Status::not_found && response.op == Opcode::batch_get) {
        put_u32_be(frame, static_cast<std::uint32_t>(response.missing.size()));
        for (auto k : response.missing) put_u64_be(frame, k);
    }
    seal(frame);
    return frame;
}

WireResponse decode_response(ByteView body) {
    Reader r(body);
    WireResponse resp;
    const auto raw = r.u8();
    if ((raw & kResponseBit) == 0) {
        throw FormatError("response opcode lacks the response bit");
    }
    resp.op = to_opcode(raw & ~kResponseBit);
    const auto status = r.u8();
    if (status > static_cast<std::uint8_t>(Status::server_error)) {
        throw FormatError("unknown status " + std::to_string(status));
    }
    resp.status = static_cast<Status>(status);
    if (resp.status == Status::ok) {
        if (resp.op == Opcode::get) {
            resp.values.push_back(r.blob());
        } else if (resp.op == Opcode::batch_get) {
            const auto n = r.count(4);
            resp.values.reserve(n);
            for (std::uint32_t i = 0; i < n; ++i) resp.values.push_back(r.blob());
        }
    } else if (resp.status == Status::not_found && resp.op == Opcode::batch_get) {
        const auto n = r.count(8);
        for (std::uint32_t i = 0; i < n; ++i) resp.missing.push_back(r.u64());
    }
    r.finish();
    return resp;
}

} // namespace epsolute
