#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "epsolute/database.hpp"
#include "epsolute/engine.hpp"

namespace epsolute {

struct AuditReport {
    std::string name;
    double statistic = 0;
    double threshold = 0;
    bool pass = false;
    std::uint64_t sample_size = 0;

    std::string to_string() const;
};

// Chi-square homogeneity of the leaf histograms of two traces; passes when
// p > 0.001. The statistic reported is the p-value.
AuditReport audit_obliviousness(const std::vector<std::uint32_t>& trace_a,
                                const std::vector<std::uint32_t>& trace_b, std::uint64_t leaves);

struct VolumeAuditOptions {
    double epsilon = 0.6931471805599453;
    double delta = 0;
    // Relative slack on top of e^epsilon.
    double slack = 0.10;
    // Sets with fewer hits than this in both samples are skipped.
    std::uint64_t min_count = 2000;
};

// Empirical likelihood-ratio check between the observed request counts of
// two neighbouring databases: for every singleton and every tail set S with
// enough mass, (P_a(S) - delta) / P_b(S) and the reverse must stay below
// e^epsilon * (1 + slack). A set hit only by one side fails outright.
AuditReport audit_volume(const std::vector<std::uint64_t>& counts_a,
                         const std::vector<std::uint64_t>& counts_b,
                         const VolumeAuditOptions& options = {});

// True when the databases differ by exactly one record (added or removed).
bool are_neighbours(const std::vector<Record>& a, const std::vector<Record>& b);

// Builds a fresh engine per repetition for both databases with the shared
// per-repetition seed derive_seed(seed, rep) and records the fetched count of
// `q`. Throws ParameterError when the databases are not neighbours.
struct VolumeSamples {
    std::vector<std::uint64_t> a;
    std::vector<std::uint64_t> b;
};
VolumeSamples collect_volume_samples(const std::vector<Record>& db_a,
                                     const std::vector<Record>& db_b, const EngineConfig& config,
                                     const Query& q, std::size_t repetitions, std::uint64_t seed);

// Fetched-count difference per query between two runs of the same query
// sequence; the simple report used for identical databases.
AuditReport audit_volume_difference(const std::vector<std::uint64_t>& fetched_a,
                                    const std::vector<std::uint64_t>& fetched_b);

enum class AlphaKind { point, range };

// Re-derives the minimal shift in 50-digit arithmetic and checks that
// `alpha` satisfies the positivity inequality while alpha - 1 does not.
AuditReport audit_alpha_minimality(AlphaKind kind, double epsilon, double beta,
                                   std::uint64_t domain, std::uint64_t fanout, std::int64_t alpha);

// Leaf traces as a flat sequence of u32 little-endian values.
void write_trace(const std::filesystem::path& path, const std::vector<std::uint32_t>& trace);
std::vector<std::uint32_t> read_trace(const std::filesystem::path& path);

} // namespace epsolute
