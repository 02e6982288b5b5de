#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "epsolute/crypto.hpp"
#include "epsolute/database.hpp"

namespace epsolute {

struct Locator {
    std::uint64_t record_id = 0;
    std::uint32_t oram_id = 1; // 1..m

    friend bool operator==(const Locator&, const Locator&) = default;
    friend auto operator<=>(const Locator&, const Locator&) = default;
};

struct IndexEntry {
    std::int64_t key = 0;
    Locator locator;
};

// Read-only B+ tree built bottom-up from sorted entries. Duplicate keys are
// kept as separate entries.
class BPlusIndex {
  public:
    struct Options {
        std::size_t fanout = 200;
        double occupancy = 0.7;
    };

    static constexpr std::size_t kPageSize = 4096;

    BPlusIndex() = default;
    static BPlusIndex bulk_load(std::vector<IndexEntry> entries, Options options);
    static BPlusIndex bulk_load(std::vector<IndexEntry> entries) {
        return bulk_load(std::move(entries), Options{});
    }

    // All locators with lo <= key <= hi, in key order.
    std::vector<Locator> lookup(std::int64_t lo, std::int64_t hi) const;
    std::vector<Locator> lookup(const Query& q) const;

    std::size_t size() const { return size_; }
    std::size_t height() const { return levels_.size() + 1; }
    std::size_t leaf_count() const { return leaves_.size(); }
    std::size_t node_count() const;
    const Options& options() const { return options_; }

    // Fill fraction of every node, leaves first.
    std::vector<double> occupancies() const;

    // One 4 KiB page per node; leaves first, then internal levels bottom-up.
    void save(const std::filesystem::path& path) const;
    static BPlusIndex load(const std::filesystem::path& path);
    std::size_t storage_bytes() const { return node_count() * kPageSize; }

  private:
    struct Leaf {
        std::vector<IndexEntry> entries;
    };
    struct Inner {
        std::vector<std::int64_t> min_keys; // smallest key under each child
        std::vector<std::uint32_t> children; // indices into the level below
    };

    std::size_t first_leaf_for(std::int64_t lo) const;

    Options options_;
    std::size_t size_ = 0;
    std::vector<Leaf> leaves_;
    std::vector<std::vector<Inner>> levels_; // levels_[0] sits above the leaves
};

// Splits [0, count) into `parts` nearly equal consecutive runs; returns the
// run sizes.
std::vector<std::size_t> balanced_runs(std::size_t count, std::size_t parts);

// Maps each record of `attribute` to (ID, H(ID)) where H is the PRF
// partition into [1, orams].
BPlusIndex create_index(std::span<const Record> records, std::size_t attribute,
                        std::uint32_t orams, const SymKey& hash_key,
                        BPlusIndex::Options options = {});

// Groups locators by ORAM; result[j] holds the locators of ORAM j+1.
std::vector<std::vector<Locator>> group_by_oram(std::span<const Locator> locators,
                                                std::uint32_t orams);

} // namespace epsolute
