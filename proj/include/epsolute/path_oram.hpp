#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "epsolute/bytes.hpp"
#include "epsolute/crypto.hpp"
#include "epsolute/random.hpp"
#include "epsolute/storage.hpp"

namespace epsolute {

// Upper bound on Pr[stash size > x] for PathORAM with bucket size 5:
// min(1, 14 * 0.6002^x).
double stash_bound(double x);

// Smallest integer x with stash_bound(x) <= target.
std::size_t stash_limit_for(double target);

constexpr double kDefaultOramFailure = 0x1p-32;

struct OramConfig {
    std::size_t bucket_size = 5;
    std::size_t capacity = 1;
    std::size_t block_payload = 0;
    std::size_t stash_limit = stash_limit_for(kDefaultOramFailure);
    // Buckets live at keys [key_base, key_base + bucket_count).
    std::uint64_t key_base = 0;
    // Fresh leaf on every access. Only mutation tests turn this off.
    bool remap = true;
};

struct AccessOp {
    enum class Kind { read, write };

    Kind kind = Kind::read;
    std::uint64_t address = 0;
    std::optional<Bytes> data;

    static AccessOp read(std::uint64_t address) { return {Kind::read, address, std::nullopt}; }
    static AccessOp write(std::uint64_t address, Bytes data) {
        return {Kind::write, address, std::move(data)};
    }
};

// Tree height for a capacity: ceil(log2(max(2, ceil(capacity / Z)))).
std::size_t oram_levels(std::size_t capacity, std::size_t bucket_size);

// Client state of one PathORAM plus the store holding its bucket tree.
//
// Buckets are numbered in heap order (root 0, children 2i+1 and 2i+2). Each
// bucket value is Z serialized ciphertexts; a slot decrypts to
// [u64 LE address][payload], with address ~0 marking a dummy.
class PathOram {
  public:
    // Writes a full tree of dummy buckets. Fails if the store already holds
    // this tree's root.
    PathOram(OramConfig config, SymKey key, std::unique_ptr<KeyValueStore> store,
             std::unique_ptr<Rng> rng);

    PathOram(PathOram&&) noexcept;
    PathOram& operator=(PathOram&&) noexcept;
    ~PathOram();

    // Reads return the stored payload, or all zeros for an address never
    // written. Writes return nullopt.
    std::optional<Bytes> access(const AccessOp& op);

    // Reads the union of all paths in one storage round trip, applies the
    // operations in order, and writes the union back in a second one.
    std::vector<std::optional<Bytes>> batch_access(std::span<const AccessOp> ops);

    const OramConfig& config() const { return config_; }
    std::size_t levels() const { return levels_; }
    std::uint64_t leaf_count() const { return std::uint64_t{1} << levels_; }
    std::uint64_t bucket_count() const { return (std::uint64_t{1} << (levels_ + 1)) - 1; }
    std::size_t slot_size() const;

    std::size_t stash_size() const { return stash_.size(); }
    std::size_t max_stash_size() const { return max_stash_; }
    std::uint64_t access_count() const { return accesses_; }
    bool failed() const { return failed_; }

    KeyValueStore& store() { return *store_; }
    const KeyValueStore& store() const { return *store_; }

    // Records the leaf of every path read while enabled.
    void enable_trace(bool on) { tracing_ = on; }
    const std::vector<std::uint32_t>& trace() const { return trace_; }
    void clear_trace() { trace_.clear(); }

    // White-box check that every live block sits on the path to its mapped
    // leaf or in the stash, exactly once. Returns an empty string when the
    // invariant holds, otherwise a description of the first violation.
    std::string check_invariant();

  private:
    std::uint64_t bucket_key(std::uint64_t bucket) const { return config_.key_base + bucket; }
    void append_path(std::uint32_t leaf, std::vector<std::uint64_t>& buckets) const;
    void load_buckets(std::span<const std::uint64_t> buckets, std::span<const Bytes> values);
    std::vector<KeyValue> evict(std::span<const std::uint64_t> buckets);
    void encrypt_slot(std::uint64_t address, ByteView payload, Bytes& out);

    OramConfig config_;
    std::size_t levels_ = 0;
    std::unique_ptr<KeyValueStore> store_;
    std::unique_ptr<Rng> rng_;
    BlockCipher cipher_;
    std::vector<std::uint32_t> position_;
    std::vector<bool> live_;
    std::map<std::uint64_t, Bytes> stash_;
    std::size_t max_stash_ = 0;
    std::uint64_t accesses_ = 0;
    bool failed_ = false;
    bool tracing_ = false;
    std::vector<std::uint32_t> trace_;
    Bytes scratch_;
};

} // namespace epsolute
