// Serial vs OpenMP versions of the two parallel kernels: per-ORAM query
// fan-out and the linear-scan download/decrypt loop.
//
//   ./kernels_bench --benchmark_filter=Query

#include <benchmark/benchmark.h>

#include "epsolute/engine.hpp"
#include "epsolute/scan.hpp"
#include "epsolute/workload.hpp"

using namespace epsolute;

namespace {

std::vector<Record> dataset(std::uint64_t n, std::size_t record_size) {
    DatasetSpec s;
    s.n = n;
    s.domain = 1000;
    return materialize(generate_dataset(s), record_size, 1);
}

std::vector<Query> queries() {
    QuerySpec q;
    q.count = 64;
    q.selectivity = 0.005;
    q.domain = 1000;
    return generate_queries(q, {});
}

void run_engine(benchmark::State& state, Execution exec) {
    const auto records = dataset(static_cast<std::uint64_t>(state.range(0)), 1024);
    EngineConfig c;
    c.mode = Mode::gamma;
    c.orams = static_cast<std::uint32_t>(state.range(1));
    c.domain_hi = 999;
    c.seed = 1;
    c.execution = exec;
    Engine engine(records, c);
    const auto qs = queries();
    std::size_t i = 0;
    std::uint64_t bytes = 0;
    for (auto _ : state) {
        const auto r = engine.query(qs[i++ % qs.size()]);
        bytes += r.metrics.bytes_down;
        benchmark::DoNotOptimize(r.records.data());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}

void run_scan(benchmark::State& state, Execution exec) {
    const auto records = dataset(static_cast<std::uint64_t>(state.range(0)), 1024);
    ScanConfig c;
    c.workers = static_cast<std::size_t>(state.range(1));
    c.seed = 1;
    c.execution = exec;
    LinearScan scan(records, c);
    const auto qs = queries();
    std::size_t i = 0;
    std::uint64_t bytes = 0;
    for (auto _ : state) {
        const auto r = scan.query(qs[i++ % qs.size()]);
        bytes += r.metrics.bytes_down;
        benchmark::DoNotOptimize(r.records.data());
    }
    state.SetBytesProcessed(static_cast<std::int64_t>(bytes));
}

void BM_QuerySerial(benchmark::State& s) { run_engine(s, Execution::serial); }
void BM_QueryParallel(benchmark::State& s) { run_engine(s, Execution::parallel); }
void BM_ScanSerial(benchmark::State& s) { run_scan(s, Execution::serial); }
void BM_ScanParallel(benchmark::State& s) { run_scan(s, Execution::parallel); }

} // namespace

BENCHMARK(BM_QuerySerial)->Args({10000, 4})->Args({10000, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QueryParallel)->Args({10000, 4})->Args({10000, 8})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScanSerial)->Args({10000, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ScanParallel)->Args({10000, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
