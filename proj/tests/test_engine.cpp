#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "epsolute/engine.hpp"
#include "epsolute/error.hpp"
#include "support.hpp"

using namespace epsolute;

namespace {

const double kLn2 = std::numbers::ln2;

std::vector<Record> random_db(std::size_t n, std::int64_t domain, std::uint64_t seed,
                              std::size_t attrs = 1, std::size_t payload = 16) {
    SeededRng rng(seed);
    std::vector<Record> out;
    for (std::size_t i = 0; i < n; ++i) {
        Record r{i * 3 + 7, {}, Bytes(payload)};
        for (std::size_t a = 0; a < attrs; ++a) r.keys.push_back(static_cast<std::int64_t>(rng.below(domain)));
        rng.fill(r.payload);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::uint64_t> expected_ids(const std::vector<Record>& db, const Query& q) {
    std::vector<std::uint64_t> ids;
    for (const auto& r : db) {
        if (q.matches(r.key(q.attribute))) ids.push_back(r.id);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool same_records(const QueryResult& res, const std::vector<Record>& db, const Query& q) {
    std::vector<std::uint64_t> got;
    for (const auto& r : res.records) {
        got.push_back(r.id);
        const auto it = std::find_if(db.begin(), db.end(), [&](const Record& x) { return x.id == r.id; });
        if (it == db.end() || it->payload != r.payload || it->keys != r.keys) return false;
    }
    return got == expected_ids(db, q);
}

EngineConfig config_for(Mode mode, std::uint32_t m, std::int64_t domain, std::uint64_t seed = 1) {
    EngineConfig c;
    c.mode = mode;
    c.orams = m;
    c.domain_lo = 0;
    c.domain_hi = domain - 1;
    c.seed = seed;
    return c;
}

struct Recorder : RequestObserver {
    struct Call {
        std::uint32_t oram;
        std::vector<std::uint64_t> true_ids, noise_ids;
        std::uint64_t dummies;
    };
    std::vector<Call> calls;
    void on_requests(std::uint32_t oram, const std::vector<std::uint64_t>& t,
                     const std::vector<std::uint64_t>& n, std::uint64_t d) override {
        calls.push_back({oram, t, n, d});
    }
};

} // namespace

TEST_CASE("gamma formula and quota") {
    CHECK(compute_gamma(1, std::exp(-1.0), 3) == doctest::Approx(1.0));
    CHECK(std::abs(compute_gamma(8, 0x1p-20, 1000) - 0.5768) < 1e-4);
    CHECK_THROWS_AS(compute_gamma(0, 0.1, 10), ParameterError);
    CHECK_THROWS_AS(compute_gamma(2, 1.0, 10), ParameterError);
    CHECK_THROWS_AS(compute_gamma(2, 0.1, 0), ParameterError);
    CHECK(gamma_quota(4, 0.1, 0) == 0);
    const double g = compute_gamma(4, 0.01, 200);
    CHECK(gamma_quota(4, 0.01, 200) == static_cast<std::uint64_t>(std::ceil((1 + g) * 200 / 4)));
}

TEST_CASE("balls into bins respects the gamma bound") {
    constexpr std::uint32_t m = 8;
    constexpr int k = 1000;
    const double beta = 0x1p-20;
    const double limit = (1 + compute_gamma(m, beta, k)) * k / m;
    SeededRng rng(5);
    int over = 0;
    constexpr int trials = 100000;
    for (int t = 0; t < trials; ++t) {
        std::uint32_t load[m] = {};
        for (int b = 0; b < k; ++b) load[rng.below(m)]++;
        over += *std::max_element(load, load + m) > limit;
    }
    CHECK(static_cast<double>(over) / trials <= 10 * beta);
}

TEST_CASE("setup partitions the records") {
    const auto db = random_db(100, 64, 1);
    Engine e(db, config_for(Mode::gamma, 4, 64));
    std::size_t total = 0, largest = 0;
    for (std::uint32_t j = 0; j < 4; ++j) {
        total += e.partition_size(j);
        largest = std::max(largest, e.partition_size(j));
    }
    CHECK(total == 100);
    CHECK(largest <= static_cast<std::size_t>(std::ceil(25 * (1 + compute_gamma(4, 0x1p-20, 100)))));

    auto bad = db;
    bad[3].payload.push_back(0);
    CHECK_THROWS_AS(Engine(bad, config_for(Mode::gamma, 4, 64)), DataError);
    CHECK_THROWS_AS(Engine({}, config_for(Mode::gamma, 4, 64)), DataError);
    CHECK_THROWS_AS(Engine(db, config_for(Mode::gamma, 4, 32)), DataError);
    CHECK_THROWS_AS(Engine(db, config_for(Mode::single, 4, 64)), ConfigError);
    auto small = config_for(Mode::gamma, 4, 64);
    small.max_oram_capacity = 10;
    CHECK_THROWS_AS(Engine(db, small), ConfigError);
    auto narrow = config_for(Mode::gamma, 4, 8);
    CHECK_THROWS_AS(Engine(random_db(10, 8, 1), narrow), ConfigError);
}

TEST_CASE("small fixture answers exactly with padding") {
    std::vector<Record> db;
    const std::vector<std::int64_t> keys = {1, 2, 3, 3};
    for (std::size_t i = 0; i < keys.size(); ++i) db.push_back({i, {keys[i]}, Bytes(8, static_cast<std::uint8_t>(i))});
    auto c = config_for(Mode::single, 1, 16);
    c.beta = 0.01;
    Engine e(db, c);
    const auto q = Query::range(2, 3);
    const auto res = e.query(q);
    REQUIRE_FALSE(res.metrics.failed);
    CHECK(same_records(res, db, q));
    CHECK(res.metrics.fetched >= 3);
    CHECK(res.metrics.roundtrips == 2);

    const auto none = e.query(Query::range(10, 12));
    CHECK(none.records.empty());
    CHECK(none.metrics.fetched > 0);
    CHECK(none.metrics.padded_requests > 0); // four records cannot supply distinct noise

    CHECK_THROWS_AS(e.query(Query::range(3, 2)), QueryError);
    CHECK_THROWS_AS(e.query(Query::range(0, 16)), QueryError);
    CHECK_THROWS_AS(e.query(Query::range(0, 3, 1)), QueryError);
}

TEST_CASE("every mode matches the brute-force filter") {
    const auto db = random_db(1000, 1000, 2);
    SeededRng rng(3);
    struct Setup {
        Mode mode;
        std::uint32_t m;
    };
    for (auto s : {Setup{Mode::single, 1}, Setup{Mode::no_gamma, 1}, Setup{Mode::no_gamma, 4},
                   Setup{Mode::no_gamma, 8}, Setup{Mode::gamma, 1}, Setup{Mode::gamma, 4},
                   Setup{Mode::gamma, 8}}) {
        CAPTURE(to_string(s.mode));
        CAPTURE(s.m);
        Engine e(db, config_for(s.mode, s.m, 1000, 10 + s.m));
        int failed = 0;
        for (int i = 0; i < 100; ++i) {
            const auto lo = static_cast<std::int64_t>(rng.below(1000));
            const auto q = Query::range(lo, std::min<std::int64_t>(999, lo + static_cast<std::int64_t>(rng.below(50))));
            const auto res = e.query(q);
            if (res.metrics.failed) {
                ++failed;
                continue;
            }
            REQUIRE(same_records(res, db, q));
            CHECK(res.metrics.fetched >= res.metrics.true_count);
            CHECK(res.metrics.fetched >= res.metrics.returned);
            if (s.mode == Mode::gamma) {
                const auto& per = res.metrics.requests_per_oram;
                CHECK(std::adjacent_find(per.begin(), per.end(), std::not_equal_to<>()) == per.end());
                CHECK(per[0] == gamma_quota(s.m, e.config().beta, res.metrics.noisy_count));
            }
        }
        CHECK(failed == 0);
    }
}

TEST_CASE("gamma quota follows the released count") {
    const auto db = random_db(2000, 256, 4);
    Engine e(db, config_for(Mode::gamma, 4, 256));
    const auto q = Query::range(10, 40);
    const auto c = e.sanitizer(0).query(10, 40);
    const auto res = e.query(q);
    CHECK(res.metrics.noisy_count == c);
    const double g = compute_gamma(4, 0x1p-20, static_cast<double>(c));
    const auto expected = static_cast<std::uint64_t>(std::ceil((1 + g) * static_cast<double>(c) / 4));
    for (auto n : res.metrics.requests_per_oram) CHECK(n == expected);
    for (auto r : res.metrics.roundtrips_per_oram) CHECK(r == 2);
}

TEST_CASE("no-gamma fetches at least the true count and reports a single budget") {
    const auto db = random_db(1000, 256, 5);
    Engine e(db, config_for(Mode::no_gamma, 4, 256));
    CHECK(e.attribute_budget(0) == doctest::Approx(kLn2));
    CHECK(e.total_budget() == doctest::Approx(kLn2));
    SeededRng rng(6);
    for (int i = 0; i < 100; ++i) {
        const auto lo = static_cast<std::int64_t>(rng.below(200));
        const auto res = e.query(Query::range(lo, lo + 30));
        CHECK(res.metrics.fetched >= res.metrics.true_count);
    }
}

TEST_CASE("noise requests are distinct, valid and outside the answer") {
    const auto db = random_db(500, 256, 7);
    std::set<std::uint64_t> valid;
    for (const auto& r : db) valid.insert(r.id);
    Engine e(db, config_for(Mode::gamma, 4, 256));
    Recorder rec;
    e.set_observer(&rec);
    for (int i = 0; i < 20; ++i) {
        rec.calls.clear();
        e.query(Query::range(i * 10, i * 10 + 15));
        for (const auto& call : rec.calls) {
            std::set<std::uint64_t> seen(call.true_ids.begin(), call.true_ids.end());
            for (auto id : call.noise_ids) {
                CHECK(valid.contains(id));
                CHECK(seen.insert(id).second);
            }
        }
    }
}

TEST_CASE("failure rate stays near beta") {
    int failed = 0;
    constexpr int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        auto c = config_for(Mode::gamma, 2, 16, 1000 + t);
        c.fanout = 4;
        c.beta = 0.01;
        c.execution = Execution::serial;
        Engine e(random_db(40, 16, t), c);
        failed += e.query(Query::range(0, 7)).metrics.failed;
    }
    CHECK(static_cast<double>(failed) / trials <= 0.02);
}

TEST_CASE("volume depends only on the key multiset") {
    auto a = random_db(800, 256, 8);
    auto b = a;
    // same keys, reassigned to other records
    SeededRng rng(9);
    std::vector<std::int64_t> keys;
    for (const auto& r : b) keys.push_back(r.keys[0]);
    std::shuffle(keys.begin(), keys.end(), rng);
    for (std::size_t i = 0; i < b.size(); ++i) b[i].keys[0] = keys[i];

    for (auto mode : {Mode::single, Mode::gamma}) {
        const std::uint32_t m = mode == Mode::single ? 1 : 4;
        Engine ea(a, config_for(mode, m, 256, 77));
        Engine eb(b, config_for(mode, m, 256, 77));
        for (int i = 0; i < 30; ++i) {
            const auto q = Query::range(i * 7, i * 7 + 20);
            CHECK(ea.query(q).metrics.fetched == eb.query(q).metrics.fetched);
        }
    }
}

TEST_CASE("serial and parallel execution agree") {
    const auto db = random_db(1500, 512, 10);
    Engine par(db, config_for(Mode::gamma, 4, 512, 5));
    auto cs = config_for(Mode::gamma, 4, 512, 5);
    cs.execution = Execution::serial;
    Engine ser(db, cs);
    for (int i = 0; i < 20; ++i) {
        const auto q = Query::range(i * 20, i * 20 + 40);
        const auto x = par.query(q);
        const auto y = ser.query(q);
        CHECK(x.metrics.requests_per_oram == y.metrics.requests_per_oram);
        CHECK(x.metrics.bytes_down == y.metrics.bytes_down);
        REQUIRE(x.records.size() == y.records.size());
        for (std::size_t k = 0; k < x.records.size(); ++k) CHECK(x.records[k].id == y.records[k].id);
    }
}

TEST_CASE("point engine") {
    const auto db = random_db(600, 50, 11);
    auto c = config_for(Mode::gamma, 4, 50);
    c.sanitizer = Sanitizer::Kind::point;
    Engine e(db, c);
    for (std::int64_t k = 0; k < 50; k += 7) {
        const auto q = Query::point(k);
        const auto res = e.query(q);
        if (!res.metrics.failed) CHECK(same_records(res, db, q));
    }
    CHECK_THROWS_AS(e.query(Query::range(1, 3)), QueryError);
}

TEST_CASE("multi-attribute budget") {
    const auto db = random_db(500, 256, 12, 2);
    auto c = config_for(Mode::gamma, 4, 256);
    c.epsilon = kLn2 / 2;
    c.total_budget = kLn2;
    Engine e(db, c);
    e.register_attribute(1, kLn2 / 2);
    CHECK(e.total_budget() == doctest::Approx(kLn2));
    CHECK(e.attributes() == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(e.register_attribute(1, 0.01), ParameterError);
    CHECK_THROWS_AS(e.register_attribute(2, 0.01), ParameterError);

    const auto q = Query::range(40, 90, 1);
    const auto res = e.query(q);
    REQUIRE_FALSE(res.metrics.failed);
    CHECK(same_records(res, db, q));

    const auto three = random_db(100, 256, 13, 3);
    Engine f(three, c);
    f.register_attribute(1, kLn2 / 2);
    CHECK_THROWS_AS(f.register_attribute(2, 0.1), BudgetError);
}

TEST_CASE("engine on disk storage") {
    testing::TempDir dir;
    const auto db = random_db(300, 256, 14);
    auto c = config_for(Mode::gamma, 2, 256);
    c.storage.kind = StorageSpec::Kind::disk;
    c.storage.path = dir.path();
    c.clear_storage = true;
    Engine e(db, c);
    const auto q = Query::range(5, 60);
    const auto res = e.query(q);
    REQUIRE_FALSE(res.metrics.failed);
    CHECK(same_records(res, db, q));
}
