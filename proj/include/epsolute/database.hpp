#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "epsolute/bytes.hpp"

namespace epsolute {

// One row: unique ID, one search key per attribute, fixed-size payload.
struct Record {
    std::uint64_t id = 0;
    std::vector<std::int64_t> keys;
    Bytes payload;

    std::int64_t key(std::size_t attribute = 0) const { return keys.at(attribute); }
};

// Throws DataError on duplicate IDs, unequal payload sizes, or records with
// differing attribute counts. Empty databases are accepted here; the engine
// rejects them at setup.
void validate_records(const std::vector<Record>& records);

struct Query {
    enum class Kind { point, range };

    Kind kind = Kind::range;
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    std::size_t attribute = 0;

    static Query point(std::int64_t key, std::size_t attribute = 0) {
        return {Kind::point, key, key, attribute};
    }
    static Query range(std::int64_t lo, std::int64_t hi, std::size_t attribute = 0) {
        return {Kind::range, lo, hi, attribute};
    }

    bool matches(std::int64_t key) const { return lo <= key && key <= hi; }
    // Throws QueryError for lo > hi or a point query with lo != hi.
    void validate() const;
};

} // namespace epsolute
