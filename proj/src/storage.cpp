#include "epsolute/storage.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

namespace epsolute {

namespace {

std::string describe_missing(const std::vector<std::uint64_t>& missing) {
    std::ostringstream out;
    out << "batch references " << missing.size() << " missing key(s):";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 16);
    for (std::size_t i = 0; i < shown; ++i) out << ' ' << missing[i];
    if (shown < missing.size()) out << " ...";
    return out.str();
}

std::string errno_text(const std::string& what) {
    return what + ": " + std::strerror(errno);
}

} // namespace

MissingKeysError::MissingKeysError(std::vector<std::uint64_t> missing)
    : StorageError(describe_missing(missing)), missing_(std::move(missing)) {}

void KeyValueStore::require_open(const char* op) const {
    if (closed_) {
        throw StorageError(std::string(op) + " on closed store");
    }
}

void KeyValueStore::put(std::uint64_t key, ByteView value) {
    require_open("put");
    do_put(key, value);
    ++counters_.roundtrips;
    counters_.bytes_up += value.size();
}

std::optional<Bytes> KeyValueStore::get(std::uint64_t key) {
    require_open("get");
    auto value = do_get(key);
    ++counters_.roundtrips;
    if (value) counters_.bytes_down += value->size();
    return value;
}

std::vector<Bytes> KeyValueStore::batch_get(std::span<const std::uint64_t> keys) {
    require_open("batch_get");
    if (keys.empty()) {
        throw ParameterError("batch_get with no keys");
    }
    auto values = do_batch_get(keys);
    ++counters_.roundtrips;
    for (const auto& v : values) counters_.bytes_down += v.size();
    return values;
}

void KeyValueStore::batch_put(std::span<const KeyValue> pairs) {
    require_open("batch_put");
    if (pairs.empty()) {
        throw ParameterError("batch_put with no pairs");
    }
    do_batch_put(pairs);
    ++counters_.roundtrips;
    for (const auto& kv : pairs) counters_.bytes_up += kv.value.size();
}

void KeyValueStore::clear() {
    require_open("clear");
    do_clear();
    ++counters_.roundtrips;
}

void KeyValueStore::close() {
    if (!closed_) {
        do_close();
        closed_ = true;
    }
}

// ---- memory ---------------------------------------------------------------

void MemoryStore::do_put(std::uint64_t key, ByteView value) {
    data_[key].assign(value.begin(), value.end());
}

std::optional<Bytes> MemoryStore::do_get(std::uint64_t key) {
    const auto it = data_.find(key);
    if (it == data_.end()) return std::nullopt;
    return it->second;
}

std::vector<Bytes> MemoryStore::do_batch_get(std::span<const std::uint64_t> keys) {
    std::vector<std::uint64_t> missing;
    for (auto k : keys) {
        if (!data_.contains(k)) missing.push_back(k);
    }
    if (!missing.empty()) throw MissingKeysError(std::move(missing));
    std::vector<Bytes> out;
    out.reserve(keys.size());
    for (auto k : keys) out.push_back(data_.at(k));
    return out;
}

void MemoryStore::do_batch_put(std::span<const KeyValue> pairs) {
    for (const auto& kv : pairs) data_[kv.key] = kv.value;
}

void MemoryStore::do_clear() { data_.clear(); }

// ---- disk -----------------------------------------------------------------
//
// File layout: 8-byte magic, then frames
//   [u32 frame magic][u32 count][u64 body length][body]
// with body = count x (u64 key, u32 length, value), big-endian.

namespace {

constexpr char kFileMagic[8] = {'E', 'P', 'S', 'K', 'V', 'L', 'O', 'G'};
constexpr std::uint32_t kFrameMagic = 0xB47C4E01;
constexpr std::size_t kFrameHeader = 16;

void write_all(int fd, const std::uint8_t* data, std::size_t size, std::uint64_t offset) {
    while (size > 0) {
        const auto n = ::pwrite(fd, data, size, static_cast<off_t>(offset));
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StorageError(errno_text("disk store write"));
        }
        data += n;
        size -= static_cast<std::size_t>(n);
        offset += static_cast<std::uint64_t>(n);
    }
}

bool read_all(int fd, std::uint8_t* data, std::size_t size, std::uint64_t offset) {
    while (size > 0) {
        const auto n = ::pread(fd, data, size, static_cast<off_t>(offset));
        if (n < 0) {
            if (errno == EINTR) continue;
            throw StorageError(errno_text("disk store read"));
        }
        if (n == 0) return false;
        data += n;
        size -= static_cast<std::size_t>(n);
        offset += static_cast<std::uint64_t>(n);
    }
    return true;
}

} // namespace

DiskStore::DiskStore(std::filesystem::path path, bool sync) : path_(std::move(path)), sync_(sync) {
    if (path_.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path_.parent_path(), ec);
    }
    fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) {
        throw StorageError(errno_text("cannot open " + path_.string()));
    }
    replay();
}

DiskStore::~DiskStore() {
    if (fd_ >= 0) ::close(fd_);
}

void DiskStore::replay() {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw StorageError(errno_text("fstat"));
    const auto size = static_cast<std::uint64_t>(st.st_size);
    if (size < sizeof(kFileMagic)) {
        write_all(fd_, reinterpret_cast<const std::uint8_t*>(kFileMagic), sizeof(kFileMagic), 0);
        if (::ftruncate(fd_, sizeof(kFileMagic)) != 0) throw StorageError(errno_text("ftruncate"));
        end_ = sizeof(kFileMagic);
        return;
    }
    char magic[8];
    read_all(fd_, reinterpret_cast<std::uint8_t*>(magic), sizeof(magic), 0);
    if (std::memcmp(magic, kFileMagic, sizeof(magic)) != 0) {
        throw StorageError(path_.string() + " is not a disk store");
    }

    std::uint64_t offset = sizeof(kFileMagic);
    std::uint8_t header[kFrameHeader];
    while (offset + kFrameHeader <= size) {
        read_all(fd_, header, kFrameHeader, offset);
        if (get_u32_be(header) != kFrameMagic) break;
        const auto count = get_u32_be(header + 4);
        const auto body_len = get_u64_be(header + 8);
        if (offset + kFrameHeader + body_len > size) break; // torn write
        Bytes body(body_len);
        read_all(fd_, body.data(), body.size(), offset + kFrameHeader);
        std::size_t pos = 0;
        bool ok = true;
        std::vector<std::pair<std::uint64_t, Location>> staged;
        for (std::uint32_t i = 0; i < count && ok; ++i) {
            if (pos + 12 > body.size()) {
                ok = false;
                break;
            }
            const auto key = get_u64_be(body.data() + pos);
            const auto len = get_u32_be(body.data() + pos + 8);
            pos += 12;
            if (pos + len > body.size()) {
                ok = false;
                break;
            }
            staged.emplace_back(key, Location{offset + kFrameHeader + pos, len});
            pos += len;
        }
        if (!ok) break;
        for (auto& [k, loc] : staged) index_[k] = loc;
        offset += kFrameHeader + body_len;
    }
    end_ = offset;
    if (end_ < size && ::ftruncate(fd_, static_cast<off_t>(end_)) != 0) {
        throw StorageError(errno_text("ftruncate"));
    }
}

void DiskStore::append_frame(std::span<const KeyValue> pairs) {
    Bytes frame(kFrameHeader, 0);
    for (const auto& kv : pairs) {
        put_u64_be(frame, kv.key);
        put_u32_be(frame, static_cast<std::uint32_t>(kv.value.size()));
        frame.insert(frame.end(), kv.value.begin(), kv.value.end());
    }
    Bytes header;
    put_u32_be(header, kFrameMagic);
    put_u32_be(header, static_cast<std::uint32_t>(pairs.size()));
    put_u64_be(header, frame.size() - kFrameHeader);
    std::copy(header.begin(), header.end(), frame.begin());

    write_all(fd_, frame.data(), frame.size(), end_);
    if (sync_ && ::fdatasync(fd_) != 0) throw StorageError(errno_text("fdatasync"));

    std::uint64_t pos = end_ + kFrameHeader;
    for (const auto& kv : pairs) {
        pos += 12;
        index_[kv.key] = Location{pos, static_cast<std::uint32_t>(kv.value.size())};
        pos += kv.value.size();
    }
    end_ += frame.size();
}

Bytes DiskStore::read_at(const Location& loc) const {
    Bytes out(loc.length);
    if (!read_all(fd_, out.data(), out.size(), loc.offset)) {
        throw StorageError("disk store truncated under " + path_.string());
    }
    return out;
}

void DiskStore::do_put(std::uint64_t key, ByteView value) {
    const KeyValue kv{key, Bytes(value.begin(), value.end())};
    append_frame({&kv, 1});
}

std::optional<Bytes> DiskStore::do_get(std::uint64_t key) {
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return read_at(it->second);
}

std::vector<Bytes> DiskStore::do_batch_get(std::span<const std::uint64_t> keys) {
    std::vector<std::uint64_t> missing;
    for (auto k : keys) {
        if (!index_.contains(k)) missing.push_back(k);
    }
    if (!missing.empty()) throw MissingKeysError(std::move(missing));
    std::vector<Bytes> out;
    out.reserve(keys.size());
    for (auto k : keys) out.push_back(read_at(index_.at(k)));
    return out;
}

void DiskStore::do_batch_put(std::span<const KeyValue> pairs) { append_frame(pairs); }

void DiskStore::do_clear() {
    if (::ftruncate(fd_, sizeof(kFileMagic)) != 0) throw StorageError(errno_text("ftruncate"));
    end_ = sizeof(kFileMagic);
    index_.clear();
}

void DiskStore::do_close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

// ---- construction ---------------------------------------------------------

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ParameterError("endpoint must be HOST:PORT, got '" + text + "'");
    }
    const auto host = text.substr(0, colon);
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(text.substr(colon + 1), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("junk");
    } catch (const std::exception&) {
        throw ParameterError("bad port in '" + text + "'");
    }
    if (port > 65535) throw ParameterError("port out of range in '" + text + "'");
    return {host, static_cast<std::uint16_t>(port)};
}

StorageSpec StorageSpec::parse(const std::string& text) {
    StorageSpec spec;
    if (text == "memory") {
        spec.kind = Kind::memory;
    } else if (text == "disk" || text.starts_with("disk=")) {
        spec.kind = Kind::disk;
        spec.path = text.size() > 5 ? text.substr(5) : "epsolute-store";
    } else if (text.starts_with("remote=")) {
        spec.kind = Kind::remote;
        std::tie(spec.host, spec.port) = parse_endpoint(text.substr(7));
    } else {
        throw ParameterError("unknown storage '" + text + "' (memory | disk[=DIR] | remote=HOST:PORT)");
    }
    return spec;
}

std::string StorageSpec::to_string() const {
    switch (kind) {
    case Kind::memory:
        return "memory";
    case Kind::disk:
        return "disk=" + path.string();
    case Kind::remote:
        return "remote=" + host + ":" + std::to_string(port);
    }
    return "?";
}

std::unique_ptr<KeyValueStore> open_store(const StorageSpec& spec, std::size_t shard) {
    switch (spec.kind) {
    case StorageSpec::Kind::memory:
        return std::make_unique<MemoryStore>();
    case StorageSpec::Kind::disk:
        return std::make_unique<DiskStore>(spec.path / ("shard-" + std::to_string(shard) + ".log"));
    case StorageSpec::Kind::remote:
        return std::make_unique<RemoteStore>(spec.host, spec.port);
    }
    throw ParameterError("unknown storage kind");
}

} // namespace epsolute
