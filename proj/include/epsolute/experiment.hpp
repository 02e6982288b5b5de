#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "epsolute/engine.hpp"
#include "epsolute/storage.hpp"
#include "epsolute/workload.hpp"

namespace epsolute {

enum class RunMode { single, no_gamma, gamma, linear_scan };

RunMode parse_run_mode(const std::string& text);
std::string to_string(RunMode mode);

struct ExperimentSpec {
    RunMode mode = RunMode::gamma;
    std::uint64_t n = 10000;
    std::uint64_t domain = 1000;
    std::size_t record_size = 64;
    double selectivity = 0.005;
    std::size_t queries = 100;
    Query::Kind query_kind = Query::Kind::range;
    Distribution distribution = Distribution::uniform;
    std::filesystem::path histogram_file;
    QuerySampling sampling = QuerySampling::uniform;
    double epsilon = 0.6931471805599453;
    double beta = 0x1p-20;
    std::uint64_t fanout = 16;
    std::uint32_t orams = 4;
    StorageSpec storage;
    std::uint64_t seed = 1;
    Execution execution = Execution::parallel;
    std::size_t scan_workers = 4;

    // Read instead of generating when set.
    std::optional<std::filesystem::path> dataset_file;
    std::optional<std::filesystem::path> queries_file;
    // Save the generated inputs when set.
    std::optional<std::filesystem::path> save_dataset;
    std::optional<std::filesystem::path> save_queries;

    void validate() const;
};

struct QueryRow {
    std::size_t index = 0;
    double elapsed_ms = 0;
    std::uint64_t true_count = 0;
    std::uint64_t fetched = 0;
    std::uint64_t returned = 0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
    std::uint64_t oram_accesses = 0;
    std::uint64_t roundtrips = 0;
    bool failed = false;
    bool correct = true;
};

// (a1, a2) pairs measured on this run.
struct Efficiency {
    double a1 = 0;
    double a2 = 0;
};

struct ExperimentResult {
    std::vector<QueryRow> rows;
    double setup_ms = 0;
    std::uint64_t failed = 0;
    std::uint64_t mismatches = 0;
    // Stored bytes relative to plaintext record bytes; a2 = 0.
    Efficiency storage;
    // Transferred bytes relative to result bytes: a1 is the worst ratio over
    // queries with results, a2 the most transferred by an empty-result query.
    Efficiency communication;
    std::uint64_t server_bytes = 0;
    std::uint64_t record_bytes = 0;

    bool ok() const { return failed == 0 && mismatches == 0; }
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

// Deterministic columns only: timings go to write_timings_csv so that a
// fixed seed reproduces this file byte for byte.
void write_metrics_csv(const std::filesystem::path& path, const ExperimentResult& result);
void write_timings_csv(const std::filesystem::path& path, const ExperimentResult& result);

// "<stem>.timings.csv" next to the metrics file.
std::filesystem::path timings_path_for(const std::filesystem::path& metrics);

} // namespace epsolute
