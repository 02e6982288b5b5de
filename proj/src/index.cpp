#include "epsolute/index.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <unordered_set>

#include "epsolute/error.hpp"

namespace epsolute {

namespace {

constexpr std::uint8_t kLeafPage = 1;
constexpr std::uint8_t kInnerPage = 2;
constexpr std::size_t kPageHeader = 8; // type, pad, u16 count, u32 reserved
constexpr std::size_t kLeafEntry = 20;
constexpr std::size_t kInnerEntry = 12;

std::size_t node_total(std::size_t items, const BPlusIndex::Options& o) {
    const auto target = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(static_cast<double>(o.fanout) * o.occupancy)));
    const auto by_capacity = (items + o.fanout - 1) / o.fanout;
    const auto by_target = static_cast<std::size_t>(
        std::lround(static_cast<double>(items) / static_cast<double>(target)));
    return std::max<std::size_t>({1, by_capacity, by_target});
}

void put_u16_le(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32_le(Bytes& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
           (std::uint32_t{p[3]} << 24);
}

} // namespace

std::vector<std::size_t> balanced_runs(std::size_t count, std::size_t parts) {
    if (parts == 0) throw ParameterError("balanced_runs needs at least one part");
    std::vector<std::size_t> runs(parts, count / parts);
    for (std::size_t i = 0; i < count % parts; ++i) ++runs[i];
    return runs;
}

BPlusIndex BPlusIndex::bulk_load(std::vector<IndexEntry> entries, Options options) {
    if (options.fanout < 3 || options.fanout > 200) {
        throw ParameterError("index fanout must be in [3, 200] to fit a 4 KiB page");
    }
    if (!(options.occupancy > 0.5 && options.occupancy <= 1.0)) {
        throw ParameterError("index occupancy must be in (0.5, 1]");
    }
    std::sort(entries.begin(), entries.end(), [](const IndexEntry& a, const IndexEntry& b) {
        return std::tie(a.key, a.locator) < std::tie(b.key, b.locator);
    });

    BPlusIndex index;
    index.options_ = options;
    index.size_ = entries.size();

    std::size_t pos = 0;
    for (auto run : balanced_runs(entries.size(), node_total(entries.size(), options))) {
        Leaf leaf;
        leaf.entries.assign(entries.begin() + static_cast<std::ptrdiff_t>(pos),
                            entries.begin() + static_cast<std::ptrdiff_t>(pos + run));
        index.leaves_.push_back(std::move(leaf));
        pos += run;
    }

    std::vector<std::int64_t> below_min;
    for (const auto& leaf : index.leaves_) {
        below_min.push_back(leaf.entries.empty() ? 0 : leaf.entries.front().key);
    }
    while (below_min.size() > 1) {
        std::vector<Inner> level;
        std::vector<std::int64_t> level_min;
        std::size_t child = 0;
        for (auto run : balanced_runs(below_min.size(), node_total(below_min.size(), options))) {
            Inner node;
            for (std::size_t i = 0; i < run; ++i, ++child) {
                node.min_keys.push_back(below_min[child]);
                node.children.push_back(static_cast<std::uint32_t>(child));
            }
            level_min.push_back(node.min_keys.front());
            level.push_back(std::move(node));
        }
        index.levels_.push_back(std::move(level));
        below_min = std::move(level_min);
    }
    return index;
}

std::size_t BPlusIndex::node_count() const {
    std::size_t total = leaves_.size();
    for (const auto& level : levels_) total += level.size();
    return total;
}

std::vector<double> BPlusIndex::occupancies() const {
    std::vector<double> out;
    const auto f = static_cast<double>(options_.fanout);
    for (const auto& leaf : leaves_) out.push_back(static_cast<double>(leaf.entries.size()) / f);
    for (const auto& level : levels_) {
        for (const auto& node : level) out.push_back(static_cast<double>(node.children.size()) / f);
    }
    return out;
}

std::size_t BPlusIndex::first_leaf_for(std::int64_t lo) const {
    if (levels_.empty()) return 0;
    std::size_t node = 0; // the root is the only node of the top level
    for (std::size_t level = levels_.size(); level-- > 0;) {
        const auto& inner = levels_[level][node];
        // Last child whose smallest key is strictly below lo; equal keys may
        // continue from the previous child.
        const auto it = std::lower_bound(inner.min_keys.begin(), inner.min_keys.end(), lo);
        const auto slot = it == inner.min_keys.begin()
                              ? 0
                              : static_cast<std::size_t>(it - inner.min_keys.begin()) - 1;
        node = inner.children[slot];
    }
    return node;
}

std::vector<Locator> BPlusIndex::lookup(std::int64_t lo, std::int64_t hi) const {
    if (lo > hi) {
        throw QueryError("malformed range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    std::vector<Locator> out;
    if (size_ == 0) return out;
    for (auto leaf = first_leaf_for(lo); leaf < leaves_.size(); ++leaf) {
        const auto& entries = leaves_[leaf].entries;
        auto it = std::lower_bound(entries.begin(), entries.end(), lo,
                                   [](const IndexEntry& e, std::int64_t k) { return e.key < k; });
        for (; it != entries.end(); ++it) {
            if (it->key > hi) return out;
            out.push_back(it->locator);
        }
    }
    return out;
}

std::vector<Locator> BPlusIndex::lookup(const Query& q) const {
    q.validate();
    return lookup(q.lo, q.hi);
}

void BPlusIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write index to " + path.string());

    // Page header: [u8 type][u8 0][u16 count][u32 page number of the first
    // child for inner pages / next leaf for leaves]. A trailer page 0xFF
    // records the options and entry count.
    std::uint32_t page = 0;
    const auto emit = [&](Bytes& buf) {
        buf.resize(kPageSize, 0);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        ++page;
    };
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        Bytes buf{kLeafPage, 0};
        put_u16_le(buf, static_cast<std::uint16_t>(leaves_[i].entries.size()));
        put_u32_le(buf, i + 1 < leaves_.size() ? static_cast<std::uint32_t>(i + 1) : ~0u);
        for (const auto& e : leaves_[i].entries) {
            put_u64_le(buf, static_cast<std::uint64_t>(e.key));
            put_u64_le(buf, e.locator.record_id);
            put_u32_le(buf, e.locator.oram_id);
        }
        emit(buf);
    }
    for (const auto& level : levels_) {
        for (const auto& node : level) {
            Bytes buf{kInnerPage, 0};
            put_u16_le(buf, static_cast<std::uint16_t>(node.children.size()));
            put_u32_le(buf, 0);
            for (std::size_t c = 0; c < node.children.size(); ++c) {
                put_u64_le(buf, static_cast<std::uint64_t>(node.min_keys[c]));
                put_u32_le(buf, node.children[c]);
            }
            emit(buf);
        }
    }
    Bytes trailer{0xFF, 0};
    put_u16_le(trailer, static_cast<std::uint16_t>(levels_.size()));
    put_u32_le(trailer, static_cast<std::uint32_t>(options_.fanout));
    put_u64_le(trailer, size_);
    put_u64_le(trailer, static_cast<std::uint64_t>(std::lround(options_.occupancy * 1e6)));
    put_u64_le(trailer, leaves_.size());
    for (const auto& level : levels_) put_u64_le(trailer, level.size());
    emit(trailer);
    if (!out) throw IoError("short write to " + path.string());
}

BPlusIndex BPlusIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read index from " + path.string());
    std::vector<Bytes> pages;
    for (;;) {
        Bytes buf(kPageSize);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(kPageSize));
        if (in.gcount() == 0) break;
        if (static_cast<std::size_t>(in.gcount()) != kPageSize) throw FormatError("torn index page");
        pages.push_back(std::move(buf));
    }
    if (pages.empty() || pages.back()[0] != 0xFF) throw FormatError("index trailer missing");

    const auto& t = pages.back();
    BPlusIndex index;
    const auto inner_levels = static_cast<std::size_t>(t[2] | (t[3] << 8));
    index.options_.fanout = get_u32_le(t.data() + 4);
    index.size_ = get_u64_le(t.data() + 8);
    index.options_.occupancy = static_cast<double>(get_u64_le(t.data() + 16)) / 1e6;
    const auto leaf_pages = get_u64_le(t.data() + 24);
    if (32 + 8 * inner_levels > kPageSize) throw FormatError("index trailer corrupt");

    std::size_t page = 0;
    const auto take = [&](std::uint8_t type) -> const Bytes& {
        if (page + 1 >= pages.size() || pages[page][0] != type) throw FormatError("index page out of place");
        return pages[page++];
    };
    for (std::uint64_t i = 0; i < leaf_pages; ++i) {
        const auto& p = take(kLeafPage);
        const auto count = static_cast<std::size_t>(p[2] | (p[3] << 8));
        if (kPageHeader + count * kLeafEntry > kPageSize) throw FormatError("leaf page overflow");
        Leaf leaf;
        for (std::size_t e = 0; e < count; ++e) {
            const auto* q = p.data() + kPageHeader + e * kLeafEntry;
            leaf.entries.push_back({static_cast<std::int64_t>(get_u64_le(q)),
                                    {get_u64_le(q + 8), get_u32_le(q + 16)}});
        }
        index.leaves_.push_back(std::move(leaf));
    }
    for (std::size_t l = 0; l < inner_levels; ++l) {
        const auto nodes = get_u64_le(t.data() + 32 + 8 * l);
        std::vector<Inner> level;
        for (std::uint64_t n = 0; n < nodes; ++n) {
            const auto& p = take(kInnerPage);
            const auto count = static_cast<std::size_t>(p[2] | (p[3] << 8));
            if (kPageHeader + count * kInnerEntry > kPageSize) throw FormatError("inner page overflow");
            Inner node;
            for (std::size_t c = 0; c < count; ++c) {
                const auto* q = p.data() + kPageHeader + c * kInnerEntry;
                node.min_keys.push_back(static_cast<std::int64_t>(get_u64_le(q)));
                node.children.push_back(get_u32_le(q + 8));
            }
            level.push_back(std::move(node));
        }
        index.levels_.push_back(std::move(level));
    }
    if (page + 1 != pages.size()) throw FormatError("unexpected pages in index file");
    return index;
}

BPlusIndex create_index(std::span<const Record> records, std::size_t attribute,
                        std::uint32_t orams, const SymKey& hash_key, BPlusIndex::Options options) {
    if (orams == 0) throw ParameterError("need at least one ORAM");
    std::unordered_set<std::uint64_t> ids;
    ids.reserve(records.size());
    std::vector<IndexEntry> entries;
    entries.reserve(records.size());
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) {
            throw DataError("duplicate record ID " + std::to_string(r.id));
        }
        const auto oram = orams == 1 ? 0u : prf_partition(hash_key, r.id, orams);
        entries.push_back({r.key(attribute), {r.id, oram + 1}});
    }
    return BPlusIndex::bulk_load(std::move(entries), options);
}

std::vector<std::vector<Locator>> group_by_oram(std::span<const Locator> locators,
                                                std::uint32_t orams) {
    std::vector<std::vector<Locator>> groups(orams);
    for (const auto& loc : locators) {
        if (loc.oram_id < 1 || loc.oram_id > orams) {
            throw DataError("locator names ORAM " + std::to_string(loc.oram_id));
        }
        groups[loc.oram_id - 1].push_back(loc);
    }
    return groups;
}

} // namespace epsolute
