#include "epsolute/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>

#include "epsolute/error.hpp"
#include "epsolute/scan.hpp"

namespace epsolute {

namespace {

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

RunMode parse_run_mode(const std::string& text) {
    if (text == "linear-scan") return RunMode::linear_scan;
    switch (parse_mode(text)) {
    case Mode::single:
        return RunMode::single;
    case Mode::no_gamma:
        return RunMode::no_gamma;
    case Mode::gamma:
        return RunMode::gamma;
    }
    throw ParameterError("unknown mode '" + text + "'");
}

std::string to_string(RunMode mode) {
    switch (mode) {
    case RunMode::single:
        return "single";
    case RunMode::no_gamma:
        return "no-gamma";
    case RunMode::gamma:
        return "gamma";
    case RunMode::linear_scan:
        return "linear-scan";
    }
    return "?";
}

void ExperimentSpec::validate() const {
    if (!dataset_file && n == 0) throw ParameterError("dataset size must be positive");
    if (domain == 0) throw ParameterError("domain must be positive");
    if (!queries_file && query_kind == Query::Kind::range) range_width(selectivity, domain);
    if (distribution == Distribution::histogram && !dataset_file && histogram_file.empty()) {
        throw ParameterError("histogram distribution needs a histogram file");
    }
    for (const auto* p : {dataset_file ? &*dataset_file : nullptr, queries_file ? &*queries_file : nullptr,
                          histogram_file.empty() ? nullptr : &histogram_file}) {
        if (p != nullptr && !std::filesystem::is_regular_file(*p)) {
            throw IoError("cannot read " + p->string());
        }
    }
    if (mode == RunMode::single && orams != 1) throw ParameterError("single mode runs exactly one ORAM");
    if (orams < 1) throw ParameterError("need at least one ORAM");
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
    spec.validate();

    std::vector<DatasetRow> rows;
    if (spec.dataset_file) {
        rows = read_dataset(*spec.dataset_file);
    } else {
        DatasetSpec ds;
        ds.n = spec.n;
        ds.domain = spec.domain;
        ds.distribution = spec.distribution;
        if (spec.distribution == Distribution::histogram) ds.histogram = read_histogram(spec.histogram_file);
        ds.seed = spec.seed;
        rows = generate_dataset(ds);
    }
    if (spec.save_dataset) write_dataset(*spec.save_dataset, rows);

    std::vector<Query> queries;
    if (spec.queries_file) {
        queries = read_queries(*spec.queries_file);
    } else {
        QuerySpec qs;
        qs.count = spec.queries;
        qs.selectivity = spec.selectivity;
        qs.domain = spec.domain;
        qs.kind = spec.query_kind;
        qs.sampling = spec.sampling;
        qs.seed = spec.seed;
        queries = generate_queries(qs, rows);
    }
    if (spec.save_queries) write_queries(*spec.save_queries, queries);

    const auto records = materialize(rows, spec.record_size, spec.seed);

    ExperimentResult result;
    const auto setup_start = std::chrono::steady_clock::now();
    std::unique_ptr<Engine> engine;
    std::unique_ptr<LinearScan> scan;
    try {
        if (spec.mode == RunMode::linear_scan) {
            ScanConfig sc;
            sc.storage = spec.storage;
            sc.workers = spec.scan_workers;
            sc.clear_storage = true;
            sc.execution = spec.execution;
            sc.seed = spec.seed;
            scan = std::make_unique<LinearScan>(records, sc);
            result.server_bytes = scan->server_bytes();
        } else {
            EngineConfig ec;
            ec.mode = spec.mode == RunMode::single     ? Mode::single
                      : spec.mode == RunMode::no_gamma ? Mode::no_gamma
                                                       : Mode::gamma;
            ec.orams = spec.orams;
            ec.sanitizer = spec.query_kind == Query::Kind::point ? Sanitizer::Kind::point
                                                                 : Sanitizer::Kind::range;
            ec.epsilon = spec.epsilon;
            ec.beta = spec.beta;
            ec.fanout = spec.fanout;
            ec.domain_lo = 0;
            ec.domain_hi = static_cast<std::int64_t>(spec.domain) - 1;
            ec.storage = spec.storage;
            ec.clear_storage = true;
            ec.execution = spec.execution;
            ec.seed = spec.seed;
            engine = std::make_unique<Engine>(records, ec);
            for (std::uint32_t j = 0; j < engine->oram_count(); ++j) {
                const auto& o = engine->oram(j);
                result.server_bytes += o.bucket_count() * o.config().bucket_size * o.slot_size();
            }
        }
    } catch (const Error& e) {
        throw Error(std::string("setup failed: ") + e.what());
    }
    result.setup_ms = ms_since(setup_start);
    result.record_bytes = records.size() * spec.record_size;
    result.storage = {result.record_bytes > 0
                          ? static_cast<double>(result.server_bytes) / static_cast<double>(result.record_bytes)
                          : 0.0,
                      0.0};

    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        const auto res = scan ? scan->query(q) : engine->query(q);
        const auto& m = res.metrics;
        QueryRow row;
        row.index = i;
        row.elapsed_ms = m.elapsed_ms;
        row.true_count = m.true_count;
        row.fetched = m.fetched;
        row.returned = m.returned;
        row.bytes_up = m.bytes_up;
        row.bytes_down = m.bytes_down;
        row.oram_accesses = m.oram_accesses;
        row.roundtrips = m.roundtrips;
        row.failed = m.failed;
        if (!m.failed) {
            std::vector<std::uint64_t> got;
            bool payloads_ok = true;
            for (const auto& r : res.records) {
                got.push_back(r.id);
                if (r.payload != payload_for(spec.seed, r.id, spec.record_size)) payloads_ok = false;
            }
            row.correct = payloads_ok && got == matching_ids(records, q);
        }
        if (row.failed) ++result.failed;
        if (!row.correct) ++result.mismatches;

        const double moved = static_cast<double>(row.bytes_up + row.bytes_down);
        const double answer = static_cast<double>(row.returned * spec.record_size);
        if (answer > 0) {
            result.communication.a1 = std::max(result.communication.a1, moved / answer);
        } else {
            result.communication.a2 = std::max(result.communication.a2, moved);
        }
        result.rows.push_back(row);
    }
    return result;
}

void write_metrics_csv(const std::filesystem::path& path, const ExperimentResult& result) {
    auto out = open_csv(path);
    out << "index,true_count,fetched_count,bytes_up,bytes_down,oram_accesses,roundtrips,failed\n";
    for (const auto& r : result.rows) {
        out << r.index << ',' << r.true_count << ',' << r.fetched << ',' << r.bytes_up << ','
            << r.bytes_down << ',' << r.oram_accesses << ',' << r.roundtrips << ','
            << (r.failed ? 1 : 0) << '\n';
    }
    out << "summary,queries=" << result.rows.size() << ",failed=" << result.failed
        << ",mismatches=" << result.mismatches << ",storage_a1=" << fixed(result.storage.a1)
        << ",storage_a2=" << fixed(result.storage.a2) << ",comm_a1=" << fixed(result.communication.a1)
        << ",comm_a2=" << fixed(result.communication.a2) << '\n';
    if (!out) throw IoError("short write to " + path.string());
}

void write_timings_csv(const std::filesystem::path& path, const ExperimentResult& result) {
    auto out = open_csv(path);
    out << "index,elapsed_ms\n";
    out << "setup," << fixed(result.setup_ms) << '\n';
    for (const auto& r : result.rows) out << r.index << ',' << fixed(r.elapsed_ms) << '\n';
    if (!out) throw IoError("short write to " + path.string());
}

std::filesystem::path timings_path_for(const std::filesystem::path& metrics) {
    auto p = metrics;
    p.replace_extension();
    p += ".timings.csv";
    return p;
}

} // namespace epsolute
