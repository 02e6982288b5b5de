#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "epsolute/bytes.hpp"
#include "epsolute/error.hpp"
#include "epsolute/wire.hpp"

namespace epsolute {

// A batch request referenced keys the store does not hold.
class MissingKeysError : public StorageError {
  public:
    explicit MissingKeysError(std::vector<std::uint64_t> missing);
    const std::vector<std::uint64_t>& missing() const { return missing_; }

  private:
    std::vector<std::uint64_t> missing_;
};

struct KeyValue {
    std::uint64_t key;
    Bytes value;
};

// Traffic counters. Byte counters measure value bytes only, so they agree
// across backends regardless of framing.
struct StoreCounters {
    std::uint64_t roundtrips = 0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
};

// Untrusted key-value storage. Public calls validate, count, and forward to
// the backend hooks.
class KeyValueStore {
  public:
    virtual ~KeyValueStore() = default;

    void put(std::uint64_t key, ByteView value);
    std::optional<Bytes> get(std::uint64_t key);
    // One round trip; values come back in request order.
    std::vector<Bytes> batch_get(std::span<const std::uint64_t> keys);
    // One round trip; applied entirely or not at all.
    void batch_put(std::span<const KeyValue> pairs);
    void clear();
    void close();

    bool closed() const { return closed_; }
    const StoreCounters& counters() const { return counters_; }
    void reset_counters() { counters_ = {}; }

  protected:
    virtual void do_put(std::uint64_t key, ByteView value) = 0;
    virtual std::optional<Bytes> do_get(std::uint64_t key) = 0;
    virtual std::vector<Bytes> do_batch_get(std::span<const std::uint64_t> keys) = 0;
    virtual void do_batch_put(std::span<const KeyValue> pairs) = 0;
    virtual void do_clear() = 0;
    virtual void do_close() {}

  private:
    void require_open(const char* op) const;

    StoreCounters counters_;
    bool closed_ = false;
};

class MemoryStore final : public KeyValueStore {
  public:
    std::size_t size() const { return data_.size(); }

  protected:
    void do_put(std::uint64_t key, ByteView value) override;
    std::optional<Bytes> do_get(std::uint64_t key) override;
    std::vector<Bytes> do_batch_get(std::span<const std::uint64_t> keys) override;
    void do_batch_put(std::span<const KeyValue> pairs) override;
    void do_clear() override;

  private:
    std::unordered_map<std::uint64_t, Bytes> data_;
};

// Append-only log file with an in-memory offset index rebuilt on open. Each
// write is one framed batch; a torn trailing frame is discarded on replay.
class DiskStore final : public KeyValueStore {
  public:
    explicit DiskStore(std::filesystem::path path, bool sync = false);
    ~DiskStore() override;

    std::size_t size() const { return index_.size(); }
    const std::filesystem::path& path() const { return path_; }

  protected:
    void do_put(std::uint64_t key, ByteView value) override;
    std::optional<Bytes> do_get(std::uint64_t key) override;
    std::vector<Bytes> do_batch_get(std::span<const std::uint64_t> keys) override;
    void do_batch_put(std::span<const KeyValue> pairs) override;
    void do_clear() override;
    void do_close() override;

  private:
    struct Location {
        std::uint64_t offset;
        std::uint32_t length;
    };

    void replay();
    void append_frame(std::span<const KeyValue> pairs);
    Bytes read_at(const Location& loc) const;

    std::filesystem::path path_;
    bool sync_;
    int fd_ = -1;
    std::uint64_t end_ = 0;
    std::unordered_map<std::uint64_t, Location> index_;
};

// Client for the binary wire protocol served by KvsServer.
class RemoteStore final : public KeyValueStore {
  public:
    RemoteStore(const std::string& host, std::uint16_t port);
    ~RemoteStore() override;

    // Frame bytes actually sent/received, including headers.
    std::uint64_t wire_bytes_up() const { return wire_up_; }
    std::uint64_t wire_bytes_down() const { return wire_down_; }

  protected:
    void do_put(std::uint64_t key, ByteView value) override;
    std::optional<Bytes> do_get(std::uint64_t key) override;
    std::vector<Bytes> do_batch_get(std::span<const std::uint64_t> keys) override;
    void do_batch_put(std::span<const KeyValue> pairs) override;
    void do_clear() override;
    void do_close() override;

  private:
    WireResponse exchange(const WireRequest& request);

    int fd_ = -1;
    std::uint64_t wire_up_ = 0;
    std::uint64_t wire_down_ = 0;
};

// Parses "memory", "disk=DIR" or "remote=HOST:PORT".
struct StorageSpec {
    enum class Kind { memory, disk, remote };
    Kind kind = Kind::memory;
    std::filesystem::path path;
    std::string host;
    std::uint16_t port = 0;

    static StorageSpec parse(const std::string& text);
    std::string to_string() const;
};

// Opens the store for one shard (one ORAM). Disk shards live in separate
// files under the spec directory; remote shards are separate connections.
std::unique_ptr<KeyValueStore> open_store(const StorageSpec& spec, std::size_t shard = 0);

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

} // namespace epsolute
