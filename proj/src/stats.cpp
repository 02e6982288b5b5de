#include "epsolute/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "epsolute/error.hpp"

namespace epsolute {

namespace {

double chi_square_tail(double statistic, double df) {
    if (df < 1) return 1.0;
    boost::math::chi_squared dist(df);
    return boost::math::cdf(boost::math::complement(dist, statistic));
}

} // namespace

TestResult chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> probs) {
    if (observed.size() != probs.size() || observed.size() < 2) {
        throw ParameterError("goodness of fit needs matching histograms of two or more bins");
    }
    double total = 0;
    for (auto o : observed) total += static_cast<double>(o);
    if (total == 0) throw ParameterError("empty sample");
    TestResult r;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double expected = probs[i] * total;
        if (!(expected > 0)) throw ParameterError("expected count must be positive");
        const double d = static_cast<double>(observed[i]) - expected;
        r.statistic += d * d / expected;
    }
    r.df = static_cast<double>(observed.size() - 1);
    r.p_value = chi_square_tail(r.statistic, r.df);
    return r;
}

TestResult chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    if (a.size() != b.size()) throw ParameterError("histograms differ in length");
    double na = 0, nb = 0;
    for (auto x : a) na += static_cast<double>(x);
    for (auto x : b) nb += static_cast<double>(x);
    if (na == 0 || nb == 0) throw ParameterError("empty sample");
    TestResult r;
    std::size_t used = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double col = static_cast<double>(a[i]) + static_cast<double>(b[i]);
        if (col == 0) continue;
        ++used;
        const double ea = col * na / (na + nb);
        const double eb = col * nb / (na + nb);
        const double da = static_cast<double>(a[i]) - ea;
        const double db = static_cast<double>(b[i]) - eb;
        r.statistic += da * da / ea + db * db / eb;
    }
    r.df = used > 0 ? static_cast<double>(used - 1) : 0;
    r.p_value = chi_square_tail(r.statistic, r.df);
    return r;
}

double kolmogorov_q(double lambda) {
    if (lambda < 1e-3) return 1.0;
    double sum = 0;
    for (int k = 1; k <= 200; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

TestResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw ParameterError("empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    TestResult r;
    r.statistic = d;
    const double ne = std::sqrt(nx * ny / (nx + ny));
    r.p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    return r;
}

} // namespace epsolute
