#pragma once

#include <cstdint>
#include <span>

namespace epsolute {

struct TestResult {
    double statistic = 0;
    double df = 0;
    double p_value = 1;
};

// Pearson goodness of fit of observed counts against expected probabilities.
TestResult chi_square_gof(std::span<const std::uint64_t> observed, std::span<const double> probs);

// Two-sample homogeneity test over paired histograms. Bins empty in both
// samples are dropped.
TestResult chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b);

// Two-sample Kolmogorov-Smirnov with the asymptotic p-value. Inputs need
// not be sorted.
TestResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// Kolmogorov survival function Q(lambda).
double kolmogorov_q(double lambda);

} // namespace epsolute
