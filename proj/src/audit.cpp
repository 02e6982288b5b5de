#include "epsolute/audit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "epsolute/error.hpp"
#include "epsolute/sanitizer.hpp"
#include "epsolute/stats.hpp"

namespace epsolute {

namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

// Does a shift of `a` keep all `draws` Laplace(a, scale) values positive
// with probability at least 1 - beta?
bool shift_holds(std::int64_t a, const Big& scale, const Big& beta, std::uint64_t draws) {
    if (a < 0) return false;
    const Big tail = exp(-Big(a) / scale) / 2;
    const Big all_positive = pow(Big(1) - tail, Big(draws));
    return all_positive >= Big(1) - beta;
}

} // namespace

std::string AuditReport::to_string() const {
    std::ostringstream out;
    out << name << ": statistic=" << statistic << " threshold=" << threshold
        << " n=" << sample_size << (pass ? " pass" : " FAIL");
    return out.str();
}

AuditReport audit_obliviousness(const std::vector<std::uint32_t>& trace_a,
                                const std::vector<std::uint32_t>& trace_b, std::uint64_t leaves) {
    if (trace_a.size() != trace_b.size()) {
        throw ParameterError("traces differ in length");
    }
    if (leaves == 0) throw ParameterError("leaf count must be positive");
    AuditReport report;
    report.name = "obliviousness";
    report.threshold = 0.001;
    report.sample_size = trace_a.size();
    if (trace_a == trace_b) {
        report.statistic = 1.0;
        report.pass = true;
        return report;
    }
    std::vector<std::uint64_t> ha(leaves, 0), hb(leaves, 0);
    for (auto leaf : trace_a) ha.at(leaf)++;
    for (auto leaf : trace_b) hb.at(leaf)++;
    const auto t = chi_square_homogeneity(ha, hb);
    report.statistic = t.p_value;
    report.pass = t.p_value > report.threshold;
    return report;
}

AuditReport audit_volume(const std::vector<std::uint64_t>& counts_a,
                         const std::vector<std::uint64_t>& counts_b,
                         const VolumeAuditOptions& options) {
    if (counts_a.empty() || counts_b.empty()) throw ParameterError("empty sample");
    AuditReport report;
    report.name = "volume";
    report.threshold = std::exp(options.epsilon) * (1 + options.slack);
    report.sample_size = std::min(counts_a.size(), counts_b.size());

    std::map<std::uint64_t, std::uint64_t> ha, hb;
    for (auto c : counts_a) ha[c]++;
    for (auto c : counts_b) hb[c]++;
    std::set<std::uint64_t> values;
    for (const auto& [v, _] : ha) values.insert(v);
    for (const auto& [v, _] : hb) values.insert(v);

    const double na = static_cast<double>(counts_a.size());
    const double nb = static_cast<double>(counts_b.size());
    double worst = 0;
    auto check = [&](std::uint64_t hits_a, std::uint64_t hits_b) {
        if (std::max(hits_a, hits_b) < options.min_count) return;
        const double pa = static_cast<double>(hits_a) / na;
        const double pb = static_cast<double>(hits_b) / nb;
        for (auto [p, q] : {std::pair{pa, pb}, std::pair{pb, pa}}) {
            const double num = p - options.delta;
            if (num <= 0) continue;
            worst = std::max(worst, q > 0 ? num / q : std::numeric_limits<double>::infinity());
        }
    };

    const std::vector<std::uint64_t> sorted(values.begin(), values.end());
    std::uint64_t below_a = 0, below_b = 0;
    const auto total_a = counts_a.size(), total_b = counts_b.size();
    for (auto v : sorted) {
        const auto a = ha.contains(v) ? ha[v] : 0;
        const auto b = hb.contains(v) ? hb[v] : 0;
        check(a, b);
        below_a += a;
        below_b += b;
        check(below_a, below_b);                     // {x <= v}
        check(total_a - below_a, total_b - below_b); // {x > v}
    }
    report.statistic = worst;
    report.pass = worst <= report.threshold;
    return report;
}

bool are_neighbours(const std::vector<Record>& a, const std::vector<Record>& b) {
    const auto& big = a.size() >= b.size() ? a : b;
    const auto& small = a.size() >= b.size() ? b : a;
    if (big.size() != small.size() + 1) return false;
    std::map<std::uint64_t, const Record*> by_id;
    for (const auto& r : big) by_id[r.id] = &r;
    for (const auto& r : small) {
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) return false;
        if (it->second->keys != r.keys || it->second->payload != r.payload) return false;
    }
    return true;
}

VolumeSamples collect_volume_samples(const std::vector<Record>& db_a,
                                     const std::vector<Record>& db_b, const EngineConfig& config,
                                     const Query& q, std::size_t repetitions, std::uint64_t seed) {
    if (!are_neighbours(db_a, db_b)) throw ParameterError("databases are not neighbours");
    if (config.storage.kind != StorageSpec::Kind::memory) {
        throw ParameterError("volume sampling runs on in-memory storage only");
    }
    VolumeSamples out;
    out.a.reserve(repetitions);
    out.b.reserve(repetitions);
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        auto c = config;
        c.seed = derive_seed(seed, rep);
        c.execution = Execution::serial;
        Engine ea(db_a, c);
        out.a.push_back(ea.query(q).metrics.fetched);
        Engine eb(db_b, c);
        out.b.push_back(eb.query(q).metrics.fetched);
    }
    return out;
}

AuditReport audit_volume_difference(const std::vector<std::uint64_t>& fetched_a,
                                    const std::vector<std::uint64_t>& fetched_b) {
    if (fetched_a.size() != fetched_b.size()) throw ParameterError("query sequences differ in length");
    AuditReport report;
    report.name = "volume-difference";
    report.sample_size = fetched_a.size();
    double worst = 0;
    for (std::size_t i = 0; i < fetched_a.size(); ++i) {
        const auto d = fetched_a[i] > fetched_b[i] ? fetched_a[i] - fetched_b[i]
                                                   : fetched_b[i] - fetched_a[i];
        worst = std::max(worst, static_cast<double>(d));
    }
    report.statistic = worst;
    report.pass = worst <= report.threshold;
    return report;
}

AuditReport audit_alpha_minimality(AlphaKind kind, double epsilon, double beta,
                                   std::uint64_t domain, std::uint64_t fanout, std::int64_t alpha) {
    AuditReport report;
    report.name = kind == AlphaKind::point ? "alpha-point-minimality" : "alpha-range-minimality";
    report.sample_size = 1;
    std::uint64_t draws = domain;
    Big scale = Big(1) / Big(epsilon);
    if (kind == AlphaKind::range) {
        const auto height = tree_height(domain, fanout);
        draws = 0;
        std::uint64_t width = 1;
        for (std::size_t i = 0; i <= height; ++i, width *= fanout) draws += width;
        scale = Big(height) / Big(epsilon);
    }
    const Big b(beta);
    // Independent 50-digit closed form, then nudged to the exact boundary.
    const Big inner = Big(2) - 2 * pow(Big(1) - b, Big(1) / Big(draws));
    auto reference = static_cast<std::int64_t>(ceil(-log(inner) * scale));
    reference = std::max<std::int64_t>(reference, 0);
    while (reference > 0 && shift_holds(reference - 1, scale, b, draws)) --reference;
    while (!shift_holds(reference, scale, b, draws)) ++reference;

    report.statistic = static_cast<double>(alpha);
    report.threshold = static_cast<double>(reference);
    report.pass = shift_holds(alpha, scale, b, draws) &&
                  (alpha == 0 || !shift_holds(alpha - 1, scale, b, draws));
    return report;
}

void write_trace(const std::filesystem::path& path, const std::vector<std::uint32_t>& trace) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (auto leaf : trace) {
        const char bytes[4] = {static_cast<char>(leaf & 0xff), static_cast<char>((leaf >> 8) & 0xff),
                               static_cast<char>((leaf >> 16) & 0xff),
                               static_cast<char>((leaf >> 24) & 0xff)};
        out.write(bytes, 4);
    }
    if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::uint32_t> read_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<std::uint32_t> trace;
    unsigned char bytes[4];
    while (in.read(reinterpret_cast<char*>(bytes), 4)) {
        trace.push_back(static_cast<std::uint32_t>(bytes[0]) | static_cast<std::uint32_t>(bytes[1]) << 8 |
                        static_cast<std::uint32_t>(bytes[2]) << 16 |
                        static_cast<std::uint32_t>(bytes[3]) << 24);
    }
    if (in.gcount() != 0) throw FormatError(path.string() + " is not a whole number of u32 values");
    return trace;
}

} // namespace epsolute
