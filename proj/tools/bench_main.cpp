// Runs one experiment and writes per-query metrics.
//
//   epsolute-bench --mode gamma --n 10000 --domain 1000 --out run/metrics.csv
//
// Exit status is 0 only when every query succeeded and matched the
// brute-force answer.

#include <cmath>
#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "epsolute/error.hpp"
#include "epsolute/experiment.hpp"

using namespace epsolute;

int main(int argc, char** argv) {
    CLI::App app{"Epsolute experiment runner"};

    ExperimentSpec spec;
    std::string mode = "gamma";
    std::string storage = "memory";
    std::string distribution = "uniform";
    std::string sampling = "uniform";
    std::string kind = "range";
    std::string execution = "parallel";
    std::string out;
    std::string dataset_in, queries_in, dataset_out, queries_out;

    app.add_option("--mode", mode, "single | gamma | no-gamma | linear-scan")
        ->check(CLI::IsMember({"single", "gamma", "no-gamma", "linear-scan"}))
        ->capture_default_str();
    app.add_option("--n", spec.n, "number of records")->capture_default_str();
    app.add_option("--domain", spec.domain, "key domain size N, keys in [0, N)")->capture_default_str();
    app.add_option("--record-size", spec.record_size, "payload bytes per record")->capture_default_str();
    app.add_option("--selectivity", spec.selectivity, "range width as a fraction of the domain")
        ->capture_default_str();
    app.add_option("--queries", spec.queries, "number of queries")->capture_default_str();
    app.add_option("--query-kind", kind, "range | point")
        ->check(CLI::IsMember({"range", "point"}))
        ->capture_default_str();
    app.add_option("--epsilon", spec.epsilon, "privacy budget")->capture_default_str();
    app.add_option("--beta", spec.beta, "failure probability")->capture_default_str();
    app.add_option("--fanout", spec.fanout, "aggregate tree fanout k")->capture_default_str();
    app.add_option("--orams", spec.orams, "number of ORAMs m")->capture_default_str();
    app.add_option("--storage", storage, "memory | disk=DIR | remote=HOST:PORT")->capture_default_str();
    app.add_option("--seed", spec.seed, "seed for data, queries, keys and noise")->capture_default_str();
    app.add_option("--out", out, "metrics CSV path (timings go next to it)");
    app.add_option("--distribution", distribution, "uniform | histogram")
        ->check(CLI::IsMember({"uniform", "histogram"}))
        ->capture_default_str();
    app.add_option("--histogram-file", spec.histogram_file, "lo,hi,weight bins for --distribution histogram");
    app.add_option("--query-sampling", sampling, "uniform | cdf")
        ->check(CLI::IsMember({"uniform", "cdf"}))
        ->capture_default_str();
    app.add_option("--execution", execution, "parallel | serial")
        ->check(CLI::IsMember({"parallel", "serial"}))
        ->capture_default_str();
    app.add_option("--scan-workers", spec.scan_workers, "linear scan worker count")->capture_default_str();
    app.add_option("--dataset", dataset_in, "read the dataset CSV instead of generating");
    app.add_option("--query-file", queries_in, "read the query CSV instead of generating");
    app.add_option("--save-dataset", dataset_out, "write the generated dataset CSV");
    app.add_option("--save-queries", queries_out, "write the generated query CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        spec.mode = parse_run_mode(mode);
        spec.storage = StorageSpec::parse(storage);
        spec.distribution = distribution == "histogram" ? Distribution::histogram : Distribution::uniform;
        spec.sampling = sampling == "cdf" ? QuerySampling::cdf : QuerySampling::uniform;
        spec.query_kind = kind == "point" ? Query::Kind::point : Query::Kind::range;
        spec.execution = execution == "serial" ? Execution::serial : Execution::parallel;
        if (!dataset_in.empty()) spec.dataset_file = dataset_in;
        if (!queries_in.empty()) spec.queries_file = queries_in;
        if (!dataset_out.empty()) spec.save_dataset = dataset_out;
        if (!queries_out.empty()) spec.save_queries = queries_out;

        const auto result = run_experiment(spec);
        if (!out.empty()) {
            write_metrics_csv(out, result);
            write_timings_csv(timings_path_for(out), result);
        }

        double total_ms = 0, down = 0;
        for (const auto& r : result.rows) {
            total_ms += r.elapsed_ms;
            down += static_cast<double>(r.bytes_down);
        }
        const double q = result.rows.empty() ? 1.0 : static_cast<double>(result.rows.size());
        std::printf("mode=%s queries=%zu failed=%llu mismatches=%llu setup_ms=%.1f mean_ms=%.3f "
                    "mean_bytes_down=%.0f storage=(%.3f, %.0f) comm=(%.3f, %.0f)\n",
                    to_string(spec.mode).c_str(), result.rows.size(),
                    static_cast<unsigned long long>(result.failed),
                    static_cast<unsigned long long>(result.mismatches), result.setup_ms, total_ms / q,
                    down / q, result.storage.a1, result.storage.a2, result.communication.a1,
                    result.communication.a2);
        return result.ok() ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
