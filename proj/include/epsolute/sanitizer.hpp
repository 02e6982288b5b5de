#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "epsolute/bytes.hpp"
#include "epsolute/random.hpp"

namespace epsolute {

struct SanitizerParams {
    double epsilon = 0.6931471805599453; // ln 2
    double beta = 0x1p-20;
    std::uint64_t domain = 1; // bins N
    std::uint64_t fanout = 16; // k, range sanitizer only

    void validate() const;
};

// Inverse-CDF Laplace draw for a given uniform u in (0, 1).
double laplace_from_uniform(double mean, double scale, double u);
double laplace_sample(double mean, double scale, Rng& rng);

// Smallest non-negative integer shift a such that `draws` independent
// Laplace(a, scale) values are all positive with probability >= 1 - beta.
// Closed form ceil(-ln(2 - 2 (1-beta)^(1/draws)) * scale), confirmed against
// the CDF inequality to absorb floating-point error at the ceiling.
std::int64_t min_positive_shift(double scale, double beta, std::uint64_t draws);

// LPA histogram shift: draws = N, scale = 1/epsilon.
std::int64_t alpha_point(double epsilon, double beta, std::uint64_t domain);

// Node count of the complete k-ary tree over N = k^h leaves.
std::uint64_t tree_nodes_count(std::uint64_t domain, std::uint64_t fanout);

// Height h with k^h = N; throws ParameterError when N is not a power of k.
std::size_t tree_height(std::uint64_t domain, std::uint64_t fanout);

// Aggregate-tree shift: draws = node count, scale = log_k(N)/epsilon.
std::int64_t alpha_range(double epsilon, double beta, std::uint64_t domain, std::uint64_t fanout);

// Largest power of k not exceeding `size`.
std::uint64_t largest_power_at_most(std::uint64_t size, std::uint64_t fanout);

// Privacy budget of several releases: sum for overlapping data, max for
// disjoint partitions.
double compose(std::span<const double> budgets, bool disjoint);

// Per-bin noisy counts, each shifted by alpha and clamped at zero.
class PointHistogram {
  public:
    static PointHistogram build(std::span<const std::uint64_t> bins, const SanitizerParams& params,
                                Rng& rng);

    std::int64_t query(std::uint64_t bin) const;

    std::uint64_t domain() const { return counts_.size(); }
    std::int64_t alpha() const { return alpha_; }
    double epsilon() const { return epsilon_; }
    const std::vector<std::int64_t>& counts() const { return counts_; }
    std::size_t clamp_events() const { return clamped_; }

    Bytes serialize() const;
    static PointHistogram deserialize(ByteView data);

  private:
    std::vector<std::int64_t> counts_;
    std::int64_t alpha_ = 0;
    double epsilon_ = 0;
    std::size_t clamped_ = 0;
};

struct TreeNode {
    std::size_t level = 0;    // 0 is the root
    std::uint64_t index = 0;  // position within the level

    friend bool operator==(const TreeNode&, const TreeNode&) = default;
    friend auto operator<=>(const TreeNode&, const TreeNode&) = default;
};

// Complete k-ary tree of noisy counts over N = k^h bins. Every node carries
// the true count of its range plus its own independent Laplace(alpha, h/eps)
// draw, rounded and clamped at zero. Stored breadth-first.
class AggregateTree {
  public:
    static AggregateTree build(std::span<const std::uint64_t> bins, const SanitizerParams& params,
                               Rng& rng);

    // Minimal set of aligned subtrees whose leaves are exactly [lo, hi].
    std::vector<TreeNode> cover(std::uint64_t lo, std::uint64_t hi) const;
    // Sum of the noisy counts over cover(lo, hi).
    std::int64_t query(std::uint64_t lo, std::uint64_t hi) const;

    std::uint64_t fanout() const { return fanout_; }
    std::uint64_t domain() const { return domain_; }
    std::size_t height() const { return height_; }
    std::int64_t alpha() const { return alpha_; }
    double epsilon() const { return epsilon_; }
    double noise_scale() const { return static_cast<double>(height_) / epsilon_; }
    std::size_t node_count() const { return counts_.size(); }
    std::int64_t value(const TreeNode& node) const;
    const std::vector<std::int64_t>& counts() const { return counts_; }
    std::size_t clamp_events() const { return clamped_; }

    // Leaves spanned by a node, inclusive.
    std::pair<std::uint64_t, std::uint64_t> span_of(const TreeNode& node) const;

    Bytes serialize() const;
    static AggregateTree deserialize(ByteView data);

  private:
    std::uint64_t level_offset(std::size_t level) const;
    void collect(TreeNode node, std::uint64_t lo, std::uint64_t hi, std::vector<TreeNode>& out) const;

    std::uint64_t fanout_ = 2;
    std::uint64_t domain_ = 1;
    std::size_t height_ = 0;
    std::int64_t alpha_ = 0;
    double epsilon_ = 0;
    std::vector<std::int64_t> counts_;
    std::size_t clamped_ = 0;
};

// Released DP structure for one attribute (or one ORAM partition).
class Sanitizer {
  public:
    enum class Kind { point, range };

    Sanitizer(PointHistogram h) : structure_(std::move(h)) {}
    Sanitizer(AggregateTree t) : structure_(std::move(t)) {}

    static Sanitizer build(Kind kind, std::span<const std::uint64_t> bins,
                           const SanitizerParams& params, Rng& rng);

    Kind kind() const { return std::holds_alternative<PointHistogram>(structure_) ? Kind::point
                                                                                  : Kind::range; }
    std::uint64_t domain() const;
    std::int64_t alpha() const;
    double epsilon() const;
    std::size_t clamp_events() const;

    // Noisy answer for bins [lo, hi]. Point structures only answer lo == hi.
    std::int64_t query(std::uint64_t lo, std::uint64_t hi) const;
    // Number of released counts the answer sums.
    std::size_t cover_size(std::uint64_t lo, std::uint64_t hi) const;

    const PointHistogram* histogram() const { return std::get_if<PointHistogram>(&structure_); }
    const AggregateTree* tree() const { return std::get_if<AggregateTree>(&structure_); }

  private:
    std::variant<PointHistogram, AggregateTree> structure_;
};

} // namespace epsolute
