#include <doctest.h>

#include <fstream>
#include <iterator>
#include <sstream>

#include "epsolute/error.hpp"
#include "epsolute/experiment.hpp"
#include "epsolute/scan.hpp"
#include "epsolute/stats.hpp"
#include "epsolute/workload.hpp"
#include "support.hpp"

using namespace epsolute;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<HistogramBin> skewed_bins() {
    return {{0, 100, 1}, {100, 200, 6}, {200, 300, 2}, {300, 1000, 1}};
}

} // namespace

TEST_CASE("uniform dataset") {
    DatasetSpec s;
    s.n = 1000;
    s.domain = 100;
    const auto rows = generate_dataset(s);
    REQUIRE(rows.size() == 1000);
    std::vector<std::uint64_t> counts(100, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].id == i);
        REQUIRE(rows[i].key >= 0);
        REQUIRE(rows[i].key < 100);
        counts[static_cast<std::size_t>(rows[i].key)]++;
    }
    const std::vector<double> probs(100, 0.01);
    CHECK(chi_square_gof(counts, probs).p_value > 0.001);
    CHECK(generate_dataset(s) == rows);

    s.n = 0;
    CHECK_THROWS_AS(generate_dataset(s), ParameterError);
}

TEST_CASE("histogram resampling keeps bin proportions") {
    testing::TempDir dir;
    const auto path = dir.path() / "hist.csv";
    {
        std::ofstream out(path);
        out << "lo,hi,weight\n";
        for (const auto& b : skewed_bins()) out << b.lo << ',' << b.hi << ',' << b.weight << '\n';
    }
    const auto bins = read_histogram(path);
    REQUIRE(bins.size() == 4);
    DatasetSpec s;
    s.n = 100000;
    s.domain = 1000;
    s.distribution = Distribution::histogram;
    s.histogram = bins;
    const auto rows = generate_dataset(s);
    std::vector<double> share(4, 0);
    for (const auto& r : rows) {
        for (std::size_t b = 0; b < bins.size(); ++b) {
            if (r.key >= bins[b].lo && r.key < bins[b].hi) share[b] += 1.0 / rows.size();
        }
    }
    const double total = 10;
    for (std::size_t b = 0; b < bins.size(); ++b) CHECK(std::abs(share[b] - bins[b].weight / total) <= 0.02);

    std::ofstream(dir.path() / "broken.csv") << "0,10\n";
    CHECK_THROWS_AS(read_histogram(dir.path() / "broken.csv"), FormatError);
    CHECK_THROWS_AS(read_histogram(dir.path() / "missing.csv"), IoError);
}

TEST_CASE("dataset and query files round trip") {
    testing::TempDir dir;
    DatasetSpec s;
    s.n = 50;
    s.domain = 20;
    const auto rows = generate_dataset(s);
    write_dataset(dir.path() / "d.csv", rows);
    CHECK(read_dataset(dir.path() / "d.csv") == rows);
    CHECK_THROWS_AS(write_dataset("/proc/definitely/not/here.csv", rows), IoError);

    QuerySpec q;
    q.count = 10;
    q.selectivity = 0.1;
    q.domain = 20;
    const auto queries = generate_queries(q, rows);
    write_queries(dir.path() / "q.csv", queries);
    const auto back = read_queries(dir.path() / "q.csv");
    REQUIRE(back.size() == queries.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].lo == queries[i].lo);
        CHECK(back[i].hi == queries[i].hi);
    }
    const auto records = materialize(rows, 32, 9);
    CHECK(records[5].payload == payload_for(9, rows[5].id, 32));
    CHECK(records[5].payload != payload_for(10, rows[5].id, 32));
}

TEST_CASE("query widths") {
    QuerySpec q;
    q.count = 200;
    q.selectivity = 0.005;
    q.domain = 10000;
    for (const auto& query : generate_queries(q, {})) {
        CHECK(query.hi - query.lo + 1 == 50);
        CHECK(query.lo >= 0);
        CHECK(query.hi < 10000);
    }
    q.selectivity = 0;
    CHECK_THROWS_AS(generate_queries(q, {}), ParameterError);
    q.selectivity = 0.00001;
    CHECK_THROWS_AS(generate_queries(q, {}), ParameterError);
    q.selectivity = 0.01;
    q.sampling = QuerySampling::cdf;
    CHECK_THROWS_AS(generate_queries(q, {}), ParameterError);
}

TEST_CASE("cdf sampling follows the data") {
    DatasetSpec s;
    s.n = 20000;
    s.domain = 1000;
    s.distribution = Distribution::histogram;
    s.histogram = {{100, 200, 8}, {200, 900, 2}};
    const auto rows = generate_dataset(s);
    QuerySpec q;
    q.count = 2000;
    q.selectivity = 0.01;
    q.domain = 1000;
    q.sampling = QuerySampling::cdf;
    const auto width = range_width(q.selectivity, q.domain);
    std::vector<double> mids, keys;
    for (const auto& query : generate_queries(q, rows)) mids.push_back(static_cast<double>(query.lo + width / 2));
    for (const auto& r : rows) keys.push_back(static_cast<double>(r.key));
    CHECK(ks_two_sample(mids, keys).p_value > 0.001);

    q.sampling = QuerySampling::uniform;
    mids.clear();
    for (const auto& query : generate_queries(q, rows)) mids.push_back(static_cast<double>(query.lo + width / 2));
    CHECK(ks_two_sample(mids, keys).p_value < 0.001);
}

TEST_CASE("linear scan matches the engine") {
    DatasetSpec s;
    s.n = 1000;
    s.domain = 256;
    const auto rows = generate_dataset(s);
    const auto records = materialize(rows, 48, 1);
    ScanConfig sc;
    sc.seed = 3;
    LinearScan scan(records, sc);
    EngineConfig ec;
    ec.mode = Mode::gamma;
    ec.orams = 4;
    ec.domain_hi = 255;
    ec.seed = 3;
    Engine engine(records, ec);

    QuerySpec q;
    q.count = 100;
    q.selectivity = 0.05;
    q.domain = 256;
    for (const auto& query : generate_queries(q, rows)) {
        const auto a = scan.query(query);
        const auto b = engine.query(query);
        CHECK(a.metrics.fetched == 1000);
        CHECK(a.metrics.bytes_down == 1000 * scan.ciphertext_size());
        CHECK(scan.ciphertext_size() == 8 + 8 + 48 + 32);
        REQUIRE_FALSE(b.metrics.failed);
        REQUIRE(a.records.size() == b.records.size());
        for (std::size_t i = 0; i < a.records.size(); ++i) {
            CHECK(a.records[i].id == b.records[i].id);
            CHECK(a.records[i].payload == b.records[i].payload);
        }
        std::vector<std::uint64_t> ids;
        for (const auto& r : a.records) ids.push_back(r.id);
        CHECK(ids == matching_ids(records, query));
    }
    sc.execution = Execution::serial;
    LinearScan serial(records, sc);
    CHECK(serial.query(Query::range(3, 90)).records.size() == scan.query(Query::range(3, 90)).records.size());
}

TEST_CASE("experiment runs and is reproducible") {
    testing::TempDir dir;
    ExperimentSpec spec;
    spec.n = 2000;
    spec.domain = 1000;
    spec.queries = 30;
    spec.orams = 4;
    spec.seed = 42;
    const auto r1 = run_experiment(spec);
    CHECK(r1.ok());
    CHECK(r1.rows.size() == 30);
    CHECK(r1.storage.a1 > 1);
    CHECK(r1.communication.a1 >= 1);
    write_metrics_csv(dir.path() / "a.csv", r1);
    const auto r2 = run_experiment(spec);
    write_metrics_csv(dir.path() / "b.csv", r2);
    CHECK(slurp(dir.path() / "a.csv") == slurp(dir.path() / "b.csv"));
    write_timings_csv(timings_path_for(dir.path() / "a.csv"), r1);
    CHECK(std::filesystem::exists(dir.path() / "a.timings.csv"));

    const auto text = slurp(dir.path() / "a.csv");
    CHECK(text.starts_with("index,true_count,fetched_count,bytes_up,bytes_down,oram_accesses,roundtrips,failed\n"));
    CHECK(text.find("\nsummary,queries=30,failed=0,mismatches=0,") != std::string::npos);

    spec.mode = RunMode::linear_scan;
    const auto scan = run_experiment(spec);
    CHECK(scan.ok());
    for (const auto& row : scan.rows) CHECK(row.fetched == 2000);

    spec.selectivity = 0;
    CHECK_THROWS_AS(run_experiment(spec), ParameterError);
    spec.selectivity = 0.01;
    spec.dataset_file = dir.path() / "nope.csv";
    CHECK_THROWS_AS(run_experiment(spec), IoError);
}

TEST_CASE("experiment from saved inputs") {
    testing::TempDir dir;
    ExperimentSpec spec;
    spec.n = 500;
    spec.domain = 300;
    spec.queries = 10;
    spec.query_kind = Query::Kind::point;
    spec.mode = RunMode::no_gamma;
    spec.save_dataset = dir.path() / "d.csv";
    spec.save_queries = dir.path() / "q.csv";
    const auto first = run_experiment(spec);
    CHECK(first.mismatches == 0);

    ExperimentSpec again = spec;
    again.save_dataset.reset();
    again.save_queries.reset();
    again.dataset_file = dir.path() / "d.csv";
    again.queries_file = dir.path() / "q.csv";
    const auto second = run_experiment(again);
    REQUIRE(second.rows.size() == first.rows.size());
    for (std::size_t i = 0; i < first.rows.size(); ++i) CHECK(second.rows[i].fetched == first.rows[i].fetched);
    CHECK(parse_run_mode("linear-scan") == RunMode::linear_scan);
    CHECK_THROWS_AS(parse_run_mode("fast"), ParameterError);
}
