// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include <unistd.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "epsolute/audit.hpp"
#include "epsolute/engine.hpp"
#include "epsolute/experiment.hpp"
#include "epsolute/path_oram.hpp"
#include "epsolute/sanitizer.hpp"
#include "epsolute/scan.hpp"
#include "epsolute/server.hpp"
#include "epsolute/workload.hpp"

using namespace epsolute;

namespace {

const double kLn2 = std::numbers::ln2;
using Big = boost::multiprecision::cpp_bin_float_50;

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Independent oracle: upward scan for the smallest shift in 50 digits.
std::int64_t oracle_shift(double scale, double beta, std::uint64_t draws) {
    const Big one(1), s(scale), b(beta);
    for (std::int64_t a = 0;; ++a) {
        if (pow(one - exp(-Big(a) / s) / 2, Big(draws)) >= one - b) return a;
    }
}

std::vector<std::uint64_t> ids_of(const QueryResult& r) {
    std::vector<std::uint64_t> ids;
    for (const auto& rec : r.records) ids.push_back(rec.id);
    return ids;
}

bool payloads_match(const QueryResult& r, const std::map<std::uint64_t, const Record*>& by_id) {
    for (const auto& rec : r.records) {
        const auto it = by_id.find(rec.id);
        if (it == by_id.end() || it->second->payload != rec.payload || it->second->keys != rec.keys) {
            return false;
        }
    }
    return true;
}

EngineConfig engine_config(Mode mode, std::uint32_t m, std::uint64_t domain, std::uint64_t seed) {
    EngineConfig c;
    c.mode = mode;
    c.orams = m;
    c.domain_lo = 0;
    c.domain_hi = static_cast<std::int64_t>(domain) - 1;
    c.seed = seed;
    return c;
}

// ---------------------------------------------------------------------------

Outcome ac1_exact_correctness() {
    constexpr std::uint64_t domain = 1000;
    struct Dataset {
        std::string name;
        std::vector<DatasetRow> rows;
    };
    std::vector<Dataset> datasets;
    for (std::uint64_t n : {1000, 10000}) {
        DatasetSpec s;
        s.n = n;
        s.domain = domain;
        s.seed = n;
        datasets.push_back({"uniform-" + std::to_string(n), generate_dataset(s)});

        s.distribution = Distribution::histogram;
        s.histogram = {{0, 50, 30}, {50, 300, 5}, {300, 320, 40}, {320, 1000, 2}};
        datasets.push_back({"skewed-" + std::to_string(n), generate_dataset(s)});

        // 25 distinct keys shared by all records
        s.histogram.clear();
        for (std::int64_t v = 0; v < 25; ++v) s.histogram.push_back({v * 40 + 3, v * 40 + 4, 1.0 + v % 3});
        datasets.push_back({"duplicates-" + std::to_string(n), generate_dataset(s)});
    }

    struct Setup {
        Mode mode;
        std::uint32_t m;
    };
    const std::vector<Setup> setups = {{Mode::single, 1}, {Mode::no_gamma, 1}, {Mode::no_gamma, 4},
                                       {Mode::no_gamma, 8}, {Mode::gamma, 1},    {Mode::gamma, 4},
                                       {Mode::gamma, 8}};
    std::uint64_t checked = 0, failed = 0, wrong = 0;
    std::string first_wrong;
    std::uint64_t seed = 100;
    for (const auto& ds : datasets) {
        const auto records = materialize(ds.rows, 32, 7);
        std::map<std::uint64_t, const Record*> by_id;
        for (const auto& r : records) by_id[r.id] = &r;

        QuerySpec qs;
        qs.count = 100;
        qs.selectivity = 0.01;
        qs.domain = domain;
        qs.seed = seed;
        const auto ranges = generate_queries(qs, ds.rows);
        std::vector<Query> points;
        SeededRng prng(seed);
        for (int i = 0; i < 100; ++i) {
            const auto key = i % 2 == 0 ? ds.rows[prng.below(ds.rows.size())].key
                                        : static_cast<std::int64_t>(prng.below(domain));
            points.push_back(Query::point(key));
        }

        for (const auto& s : setups) {
            for (auto kind : {Sanitizer::Kind::range, Sanitizer::Kind::point}) {
                auto cfg = engine_config(s.mode, s.m, domain, ++seed);
                cfg.sanitizer = kind;
                Engine engine(records, cfg);
                const auto& qs_for = kind == Sanitizer::Kind::range ? ranges : points;
                for (const auto& q : qs_for) {
                    const auto res = engine.query(q);
                    if (res.metrics.failed) {
                        ++failed;
                        continue;
                    }
                    ++checked;
                    if (ids_of(res) != matching_ids(records, q) || !payloads_match(res, by_id)) {
                        if (wrong++ == 0) {
                            first_wrong = ds.name + " " + to_string(s.mode) + " m=" + std::to_string(s.m);
                        }
                    }
                }
            }
        }
    }
    std::ostringstream d;
    d << datasets.size() << " datasets x " << setups.size() << " configurations, " << checked
      << " queries checked, " << failed << " failed (excluded), " << wrong << " mismatches";
    if (wrong > 0) d << " (first: " << first_wrong << ")";
    return {wrong == 0 && checked > 0, d.str()};
}

Outcome ac2_formulas() {
    const auto ap = alpha_point(kLn2, 0x1p-20, 10000);
    const auto ar = alpha_range(kLn2, 0x1p-20, 4096, 16);
    const auto nodes = tree_nodes_count(4096, 16);
    const auto g = compute_gamma(8, 0x1p-20, 1000);

    const auto ap_oracle = oracle_shift(1 / kLn2, 0x1p-20, 10000);
    std::uint64_t nodes_oracle = 0;
    for (std::uint64_t w = 1; w <= 4096; w *= 16) nodes_oracle += w;
    const auto ar_oracle = oracle_shift(3 / kLn2, 0x1p-20, nodes_oracle);
    const Big g_oracle = sqrt(Big(-3) * 8 * log(Big(0x1p-20)) / 1000);

    const bool values = ap == 33 && ar == 94 && nodes == 4369 && std::abs(g - 0.5768) <= 1e-4;
    const bool oracles = ap == ap_oracle && ar == ar_oracle && nodes == nodes_oracle &&
                         abs(Big(g) - g_oracle) < Big(1e-12);
    const bool minimal = audit_alpha_minimality(AlphaKind::point, kLn2, 0x1p-20, 10000, 0, ap).pass &&
                         audit_alpha_minimality(AlphaKind::range, kLn2, 0x1p-20, 4096, 16, ar).pass;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "alpha_point=%lld alpha_range=%lld nodes=%llu gamma=%.6f; oracle agreement=%s, "
                  "minimality=%s",
                  static_cast<long long>(ap), static_cast<long long>(ar),
                  static_cast<unsigned long long>(nodes), g, oracles ? "yes" : "no",
                  minimal ? "yes" : "no");
    return {values && oracles && minimal, buf};
}

Outcome ac3_sanitizer_guarantee() {
    constexpr int trials = 10000;
    const SanitizerParams p{kLn2, 0.01, 256, 4};
    SeededRng rng(3);
    int negative = 0, within = 0;
    for (int t = 0; t < trials; ++t) {
        std::vector<std::uint64_t> bins;
        for (int i = 0; i < 500; ++i) bins.push_back(rng.below(256));
        const auto tree = AggregateTree::build(bins, p, rng);
        const auto lo = rng.below(256);
        const auto hi = lo + rng.below(256 - lo);
        std::int64_t truth = 0;
        for (auto b : bins) truth += (b >= lo && b <= hi);
        const auto c = tree.query(lo, hi);
        const auto cover = static_cast<std::int64_t>(tree.cover(lo, hi).size());
        if (c < truth) ++negative;
        const auto diff = c - truth;
        if (diff >= 0 && diff <= 2 * tree.alpha() * cover) ++within;
    }
    const double neg_rate = static_cast<double>(negative) / trials;
    const double band_rate = static_cast<double>(within) / trials;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%d builds: negative-noise rate %.4f (<= 0.02), in-band rate %.4f (>= 0.99)",
                  trials, neg_rate, band_rate);
    return {neg_rate <= 0.02 && band_rate >= 0.99, buf};
}

std::vector<std::uint32_t> leaf_trace(bool remap, bool hot, std::uint64_t seed) {
    OramConfig c;
    c.capacity = 1024;
    c.block_payload = 8;
    c.remap = remap;
    SeededRng key_rng(seed);
    PathOram o(c, keygen(128, key_rng), std::make_unique<MemoryStore>(),
               std::make_unique<SeededRng>(seed + 1));
    o.enable_trace(true);
    for (std::uint64_t i = 0; i < 100000; ++i) o.access(AccessOp::read(hot ? 511 : i % 1024));
    return o.trace();
}

Outcome ac4_obliviousness() {
    const auto scan = leaf_trace(true, false, 11);
    const auto hot = leaf_trace(true, true, 12);
    const auto good = audit_obliviousness(scan, hot, 256);
    const auto mutant = audit_obliviousness(leaf_trace(false, false, 13), leaf_trace(false, true, 14), 256);
    char buf[200];
    std::snprintf(buf, sizeof buf, "10^5 accesses each: scan vs hot p=%.4g (pass), remap-disabled mutant p=%.3g (fail)",
                  good.statistic, mutant.statistic);
    return {good.pass && !mutant.pass, buf};
}

Outcome ac5_stash() {
    OramConfig c;
    c.capacity = 4096;
    c.block_payload = 8;
    SeededRng key_rng(5);
    PathOram o(c, keygen(128, key_rng), std::make_unique<MemoryStore>(), std::make_unique<SeededRng>(6));
    SeededRng rng(7);
    const Bytes data(8, 1);
    for (int i = 0; i < 1000000; ++i) {
        const auto a = rng.below(c.capacity);
        if (rng.below(2) == 0) {
            o.access(AccessOp::read(a));
        } else {
            o.access(AccessOp::write(a, data));
        }
    }
    const auto limit = stash_limit_for(0x1p-32);
    const double b50 = stash_bound(50);
    const bool bound_ok = std::abs(b50 - 1.15e-10) <= 1e-12;
    char buf[200];
    std::snprintf(buf, sizeof buf, "10^6 accesses: max stash %zu <= %zu; stash_bound(50)=%.4e; invariant %s",
                  o.max_stash_size(), limit, b50, o.check_invariant().empty() ? "holds" : "BROKEN");
    return {o.max_stash_size() <= limit && bound_ok && o.check_invariant().empty(), buf};
}

Outcome ac6_batching() {
    SeededRng rng(8);
    int mismatched = 0;
    for (int p = 0; p < 1000; ++p) {
        OramConfig c;
        c.capacity = 64;
        c.block_payload = 12;
        SeededRng k1(p), k2(p);
        PathOram seq(c, keygen(128, k1), std::make_unique<MemoryStore>(), std::make_unique<SeededRng>(p));
        PathOram bat(c, keygen(128, k2), std::make_unique<MemoryStore>(), std::make_unique<SeededRng>(p));
        std::vector<AccessOp> ops;
        const auto len = 1 + rng.below(30);
        for (std::uint64_t i = 0; i < len; ++i) {
            const auto a = rng.below(64);
            if (rng.below(2)) {
                ops.push_back(AccessOp::read(a));
            } else {
                Bytes d(12);
                rng.fill(d);
                ops.push_back(AccessOp::write(a, d));
            }
        }
        std::vector<std::optional<Bytes>> expected;
        for (const auto& op : ops) expected.push_back(seq.access(op));
        if (bat.batch_access(ops) != expected) ++mismatched;
    }

    KvsServer server(std::make_unique<MemoryStore>(), "127.0.0.1", 0);
    server.start();
    DatasetSpec ds;
    ds.n = 2000;
    ds.domain = 1000;
    const auto rows = generate_dataset(ds);
    auto cfg = engine_config(Mode::gamma, 4, 1000, 9);
    cfg.storage = StorageSpec::parse("remote=127.0.0.1:" + std::to_string(server.port()));
    cfg.clear_storage = true;
    Engine engine(materialize(rows, 64, 1), cfg);
    QuerySpec qs;
    qs.count = 20;
    qs.selectivity = 0.02;
    qs.domain = 1000;
    bool two_each = true;
    for (const auto& q : generate_queries(qs, rows)) {
        const auto res = engine.query(q);
        for (auto r : res.metrics.roundtrips_per_oram) two_each = two_each && r == 2;
    }
    server.stop();
    std::ostringstream d;
    d << "1000 programs, " << mismatched << " batched/sequential mismatches; remote gamma queries "
      << (two_each ? "used exactly 2 round trips per ORAM" : "did NOT use 2 round trips per ORAM");
    return {mismatched == 0 && two_each, d.str()};
}

Outcome ac7_volume_shape() {
    DatasetSpec ds;
    ds.n = 3000;
    ds.domain = 1000;
    const auto rows = generate_dataset(ds);
    auto a = materialize(rows, 32, 1);
    auto b = a;
    // identical key multiset, payloads attached to different keys
    SeededRng rng(2);
    std::vector<std::int64_t> keys;
    for (const auto& r : b) keys.push_back(r.keys[0]);
    std::shuffle(keys.begin(), keys.end(), rng);
    for (std::size_t i = 0; i < b.size(); ++i) b[i].keys[0] = keys[i];

    QuerySpec qs;
    qs.count = 100;
    qs.selectivity = 0.01;
    qs.domain = 1000;
    const auto queries = generate_queries(qs, rows);
    bool same = true;
    std::size_t compared = 0;
    for (auto [mode, m] : {std::pair{Mode::single, 1u}, std::pair{Mode::gamma, 4u}}) {
        Engine ea(a, engine_config(mode, m, 1000, 55));
        Engine eb(b, engine_config(mode, m, 1000, 55));
        for (const auto& q : queries) {
            same = same && ea.query(q).metrics.fetched == eb.query(q).metrics.fetched;
            ++compared;
        }
    }
    return {same, std::to_string(compared) + " queries (single and gamma m=4): fetched_count sequences " +
                      (same ? "identical" : "DIFFER")};
}

Outcome ac8_uniformity_and_budget() {
    DatasetSpec ds;
    ds.n = 5000;
    ds.domain = 1000;
    const auto rows = generate_dataset(ds);
    const auto records = materialize(rows, 16, 1);
    Engine gamma(records, engine_config(Mode::gamma, 8, 1000, 3));
    QuerySpec qs;
    qs.count = 100;
    qs.selectivity = 0.02;
    qs.domain = 1000;
    bool equal = true;
    for (const auto& q : generate_queries(qs, rows)) {
        const auto per = gamma.query(q).metrics.requests_per_oram;
        equal = equal && std::all_of(per.begin(), per.end(), [&](auto x) { return x == per.front(); });
    }

    Engine no_gamma(records, engine_config(Mode::no_gamma, 4, 1000, 4));
    const double disjoint = no_gamma.total_budget();

    std::vector<Record> two = records;
    SeededRng rng(5);
    for (auto& r : two) r.keys.push_back(static_cast<std::int64_t>(rng.below(1000)));
    auto cfg = engine_config(Mode::gamma, 4, 1000, 6);
    cfg.epsilon = kLn2 / 2;
    cfg.total_budget = kLn2;
    Engine multi(two, cfg);
    multi.register_attribute(1, kLn2 / 2);
    const double summed = multi.total_budget();

    const bool budgets = std::abs(disjoint - kLn2) < 1e-12 && std::abs(summed - kLn2) < 1e-12;
    char buf[220];
    std::snprintf(buf, sizeof buf,
                  "gamma m=8 per-ORAM counts %s on 100 queries; no-gamma m=4 budget %.6f (max rule), "
                  "two attributes at ln2/2 total %.6f (sum rule)",
                  equal ? "equal" : "UNEQUAL", disjoint, summed);
    return {equal && budgets, buf};
}

Outcome ac9_scan_crossover() {
    ExperimentSpec spec;
    spec.n = 10000;
    spec.domain = 1000;
    spec.record_size = 4096;
    spec.selectivity = 0.005;
    spec.queries = 20;
    spec.orams = 4;
    spec.seed = 9;
    spec.mode = RunMode::gamma;
    const auto eps = run_experiment(spec);
    spec.mode = RunMode::linear_scan;
    const auto scan = run_experiment(spec);
    auto mean_down = [](const ExperimentResult& r) {
        double s = 0;
        for (const auto& row : r.rows) s += static_cast<double>(row.bytes_down);
        return s / static_cast<double>(r.rows.size());
    };
    const double e = mean_down(eps), s = mean_down(scan);
    char buf[220];
    std::snprintf(buf, sizeof buf,
                  "n=10^4, 4 KiB, 0.5%%, m=4, N=1000: mean bytes_down %.1f MB vs scan %.1f MB, ratio %.3f",
                  e / 1e6, s / 1e6, e / s);
    return {e < s && eps.ok() && scan.ok(), buf};
}

Outcome ac10_determinism() {
    const auto dir = std::filesystem::temp_directory_path() / ("epsolute-ac10-" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    ExperimentSpec spec;
    spec.n = 5000;
    spec.domain = 1000;
    spec.queries = 50;
    spec.seed = 1234;
    write_metrics_csv(dir / "one.csv", run_experiment(spec));
    write_metrics_csv(dir / "two.csv", run_experiment(spec));
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    const auto a = slurp(dir / "one.csv"), b = slurp(dir / "two.csv");
    std::filesystem::remove_all(dir);
    return {!a.empty() && a == b,
            "two runs with seed 1234: metrics CSV " + std::string(a == b ? "byte-identical" : "DIFFERENT") +
                " (" + std::to_string(a.size()) + " bytes)"};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"AC1 exact correctness", ac1_exact_correctness},
        {"AC2 noise-parameter formulas", ac2_formulas},
        {"AC3 sanitizer guarantee", ac3_sanitizer_guarantee},
        {"AC4 obliviousness audit", ac4_obliviousness},
        {"AC5 stash bound", ac5_stash},
        {"AC6 batching contract", ac6_batching},
        {"AC7 volume-hiding shape", ac7_volume_shape},
        {"AC8 gamma uniformity and budget rule", ac8_uniformity_and_budget},
        {"AC9 scan crossover", ac9_scan_crossover},
        {"AC10 determinism", ac10_determinism},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    return failures == 0 ? 0 : 1;
}
