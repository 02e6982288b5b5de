#include "epsolute/database.hpp"

#include <string>
#include <unordered_set>

#include "epsolute/error.hpp"

namespace epsolute {

void validate_records(const std::vector<Record>& records) {
    if (records.empty()) return;
    const auto payload = records.front().payload.size();
    const auto attributes = records.front().keys.size();
    if (attributes == 0) throw DataError("records need at least one search key");
    std::unordered_set<std::uint64_t> ids;
    ids.reserve(records.size());
    for (const auto& r : records) {
        if (!ids.insert(r.id).second) {
            throw DataError("duplicate record ID " + std::to_string(r.id));
        }
        if (r.payload.size() != payload) {
            throw DataError("record " + std::to_string(r.id) + " has a " +
                            std::to_string(r.payload.size()) + "-byte payload, expected " +
                            std::to_string(payload));
        }
        if (r.keys.size() != attributes) {
            throw DataError("record " + std::to_string(r.id) + " has a different attribute count");
        }
    }
}

void Query::validate() const {
    if (lo > hi) {
        throw QueryError("malformed range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    if (kind == Kind::point && lo != hi) {
        throw QueryError("point query must have lo == hi");
    }
}

} // namespace epsolute
