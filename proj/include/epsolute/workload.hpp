#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "epsolute/database.hpp"

namespace epsolute {

enum class Distribution { uniform, histogram };
enum class QuerySampling { uniform, cdf };

// Weighted key interval [lo, hi) of a source histogram.
struct HistogramBin {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    double weight = 0;
};

// Reads "lo,hi,weight" lines; a non-numeric first line is taken as a header.
std::vector<HistogramBin> read_histogram(const std::filesystem::path& path);

struct DatasetSpec {
    std::uint64_t n = 1000;
    std::int64_t domain_lo = 0;
    std::uint64_t domain = 100;
    Distribution distribution = Distribution::uniform;
    std::vector<HistogramBin> histogram;
    std::uint64_t seed = 1;
};

struct DatasetRow {
    std::uint64_t id = 0;
    std::int64_t key = 0;

    friend bool operator==(const DatasetRow&, const DatasetRow&) = default;
};

// Uniform keys over the domain, or bins drawn by weight with keys uniform
// inside the chosen bin. IDs are 0..n-1.
std::vector<DatasetRow> generate_dataset(const DatasetSpec& spec);

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRow>& rows);
std::vector<DatasetRow> read_dataset(const std::filesystem::path& path);

// Pseudo-random payload of `size` bytes fixed by (seed, id).
Bytes payload_for(std::uint64_t seed, std::uint64_t id, std::size_t size);
std::vector<Record> materialize(const std::vector<DatasetRow>& rows, std::size_t record_size,
                                std::uint64_t seed);

struct QuerySpec {
    std::size_t count = 100;
    double selectivity = 0.005;
    std::int64_t domain_lo = 0;
    std::uint64_t domain = 100;
    Query::Kind kind = Query::Kind::range;
    QuerySampling sampling = QuerySampling::uniform;
    std::uint64_t seed = 1;
};

// Number of domain units each range spans: round(selectivity * domain).
std::uint64_t range_width(double selectivity, std::uint64_t domain);

// Ranges of range_width() units with the left endpoint uniform, or centred on
// a key drawn from `data` (cdf sampling) and shifted to stay in the domain.
std::vector<Query> generate_queries(const QuerySpec& spec, const std::vector<DatasetRow>& data);

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries);
std::vector<Query> read_queries(const std::filesystem::path& path);

// Brute-force filter; the reference every engine is checked against.
std::vector<std::uint64_t> matching_ids(std::span<const Record> records, const Query& q);

} // namespace epsolute
