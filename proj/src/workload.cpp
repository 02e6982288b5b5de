#include "epsolute/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "epsolute/error.hpp"
#include "epsolute/random.hpp"

namespace epsolute {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end != s.c_str();
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

} // namespace

std::vector<HistogramBin> read_histogram(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<HistogramBin> bins;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split_csv(line);
        if (first && (cells.empty() || !is_number(cells[0]))) {
            first = false;
            continue;
        }
        first = false;
        if (cells.size() != 3) throw FormatError("histogram line needs lo,hi,weight: " + line);
        HistogramBin bin{std::stoll(cells[0]), std::stoll(cells[1]), std::stod(cells[2])};
        if (bin.hi <= bin.lo || bin.weight < 0) throw FormatError("bad histogram bin: " + line);
        bins.push_back(bin);
    }
    if (bins.empty()) throw FormatError(path.string() + " holds no histogram bins");
    return bins;
}

std::vector<DatasetRow> generate_dataset(const DatasetSpec& spec) {
    if (spec.n == 0) throw ParameterError("dataset size must be positive");
    if (spec.domain == 0) throw ParameterError("domain must be positive");
    SeededRng rng(derive_seed(spec.seed, 101));
    std::vector<DatasetRow> rows;
    rows.reserve(spec.n);
    if (spec.distribution == Distribution::uniform) {
        for (std::uint64_t i = 0; i < spec.n; ++i) {
            rows.push_back({i, spec.domain_lo + static_cast<std::int64_t>(rng.below(spec.domain))});
        }
        return rows;
    }

    if (spec.histogram.empty()) throw ParameterError("histogram distribution needs bins");
    std::vector<double> cumulative;
    double total = 0;
    for (const auto& b : spec.histogram) {
        total += b.weight;
        cumulative.push_back(total);
    }
    if (!(total > 0)) throw ParameterError("histogram weights sum to zero");
    for (std::uint64_t i = 0; i < spec.n; ++i) {
        const auto u = rng.uniform01() * total;
        const auto bin = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                     cumulative.begin()),
            cumulative.size() - 1);
        const auto& b = spec.histogram[bin];
        const auto width = static_cast<std::uint64_t>(b.hi - b.lo);
        rows.push_back({i, b.lo + static_cast<std::int64_t>(rng.below(width))});
    }
    return rows;
}

void write_dataset(const std::filesystem::path& path, const std::vector<DatasetRow>& rows) {
    auto out = open_output(path);
    out << "id,key\n";
    for (const auto& r : rows) out << r.id << ',' << r.key << '\n';
    if (!out) throw IoError("short write to " + path.string());
}

std::vector<DatasetRow> read_dataset(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<DatasetRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "id,key") continue;
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw FormatError("dataset line needs id,key: " + line);
        rows.push_back({std::stoull(cells[0]), std::stoll(cells[1])});
    }
    return rows;
}

Bytes payload_for(std::uint64_t seed, std::uint64_t id, std::size_t size) {
    SeededRng rng(derive_seed(seed, id ^ 0x5eed5eed00000000ULL));
    Bytes out(size);
    rng.fill(out);
    return out;
}

std::vector<Record> materialize(const std::vector<DatasetRow>& rows, std::size_t record_size,
                                std::uint64_t seed) {
    std::vector<Record> records;
    records.reserve(rows.size());
    for (const auto& row : rows) {
        records.push_back({row.id, {row.key}, payload_for(seed, row.id, record_size)});
    }
    return records;
}

std::uint64_t range_width(double selectivity, std::uint64_t domain) {
    if (!(selectivity > 0 && selectivity < 1)) {
        throw ParameterError("selectivity must lie in (0, 1)");
    }
    const auto width = std::llround(selectivity * static_cast<double>(domain));
    if (width < 1) throw ParameterError("selectivity * domain is below one unit");
    return static_cast<std::uint64_t>(width);
}

std::vector<Query> generate_queries(const QuerySpec& spec, const std::vector<DatasetRow>& data) {
    if (spec.domain == 0) throw ParameterError("domain must be positive");
    const auto width = spec.kind == Query::Kind::point ? 1 : range_width(spec.selectivity, spec.domain);
    if (spec.sampling == QuerySampling::cdf && data.empty()) {
        throw ParameterError("cdf sampling needs a dataset");
    }
    SeededRng rng(derive_seed(spec.seed, 202));
    const auto last_start = spec.domain - width; // offset of the rightmost start
    std::vector<Query> queries;
    queries.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        std::uint64_t start = 0;
        if (spec.sampling == QuerySampling::uniform) {
            start = rng.below(last_start + 1);
        } else {
            const auto mid = static_cast<std::uint64_t>(data[rng.below(data.size())].key - spec.domain_lo);
            const auto half = width / 2;
            start = mid >= half ? mid - half : 0;
            start = std::min(start, last_start);
        }
        const auto lo = spec.domain_lo + static_cast<std::int64_t>(start);
        const auto hi = lo + static_cast<std::int64_t>(width) - 1;
        queries.push_back(spec.kind == Query::Kind::point ? Query::point(lo) : Query::range(lo, hi));
    }
    return queries;
}

void write_queries(const std::filesystem::path& path, const std::vector<Query>& queries) {
    auto out = open_output(path);
    out << "kind,lo,hi\n";
    for (const auto& q : queries) {
        out << (q.kind == Query::Kind::point ? "point" : "range") << ',' << q.lo << ',' << q.hi << '\n';
    }
    if (!out) throw IoError("short write to " + path.string());
}

std::vector<Query> read_queries(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::vector<Query> queries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "kind,lo,hi") continue;
        const auto cells = split_csv(line);
        if (cells.size() != 3) throw FormatError("query line needs kind,lo,hi: " + line);
        const auto lo = std::stoll(cells[1]);
        const auto hi = std::stoll(cells[2]);
        if (cells[0] == "point") {
            queries.push_back(Query::point(lo));
        } else if (cells[0] == "range") {
            queries.push_back(Query::range(lo, hi));
        } else {
            throw FormatError("unknown query kind '" + cells[0] + "'");
        }
        queries.back().validate();
    }
    return queries;
}

std::vector<std::uint64_t> matching_ids(std::span<const Record> records, const Query& q) {
    std::vector<std::uint64_t> ids;
    for (const auto& r : records) {
        if (q.matches(r.key(q.attribute))) ids.push_back(r.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

} // namespace epsolute
