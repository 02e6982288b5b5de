#include "epsolute/sanitizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "epsolute/error.hpp"

namespace epsolute {

namespace {

void check_budget(double epsilon, double beta) {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) {
        throw ParameterError("epsilon must be positive and finite");
    }
    if (!(beta > 0 && beta < 1)) {
        throw ParameterError("beta must lie in (0, 1)");
    }
}

// Pr[all `draws` Laplace(shift, scale) values > 0] >= 1 - beta, evaluated in
// log space so (1 - beta)^(1/draws) close to 1 keeps its precision.
bool shift_suffices(long double shift, long double scale, long double beta, std::uint64_t draws) {
    const long double per_draw_negative = 0.5L * std::exp(-shift / scale);
    return static_cast<long double>(draws) * std::log1p(-per_draw_negative) >= std::log1p(-beta);
}

constexpr char kMagic[4] = {'E', 'P', 'D', 'S'};
constexpr std::uint8_t kKindTree = 1;
constexpr std::uint8_t kKindHistogram = 2;
constexpr std::size_t kHeaderSize = 4 + 1 + 8 * 5;

Bytes write_header(std::uint8_t kind, std::uint64_t fanout, std::uint64_t domain,
                   std::int64_t alpha, double epsilon, std::uint64_t count) {
    Bytes out(kMagic, kMagic + 4);
    out.push_back(kind);
    put_u64_le(out, fanout);
    put_u64_le(out, domain);
    put_u64_le(out, static_cast<std::uint64_t>(alpha));
    put_u64_le(out, std::bit_cast<std::uint64_t>(epsilon));
    put_u64_le(out, count);
    return out;
}

struct Header {
    std::uint8_t kind;
    std::uint64_t fanout;
    std::uint64_t domain;
    std::int64_t alpha;
    double epsilon;
    std::vector<std::int64_t> counts;
};

Header read_header(ByteView data) {
    if (data.size() < kHeaderSize || std::memcmp(data.data(), kMagic, 4) != 0) {
        throw FormatError("not a serialized DP structure");
    }
    Header h;
    const auto* p = data.data() + 4;
    h.kind = *p++;
    h.fanout = get_u64_le(p);
    h.domain = get_u64_le(p + 8);
    h.alpha = static_cast<std::int64_t>(get_u64_le(p + 16));
    h.epsilon = std::bit_cast<double>(get_u64_le(p + 24));
    const auto count = get_u64_le(p + 32);
    if ((data.size() - kHeaderSize) / 8 != count || (data.size() - kHeaderSize) % 8 != 0) {
        throw FormatError("DP structure length does not match its node count");
    }
    h.counts.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        h.counts[i] = static_cast<std::int64_t>(get_u64_le(data.data() + kHeaderSize + 8 * i));
    }
    return h;
}

std::int64_t noisy_count(std::int64_t truth, std::int64_t alpha, double scale, Rng& rng,
                         std::size_t& clamped) {
    const auto value = std::llround(static_cast<double>(truth) +
                                    laplace_sample(static_cast<double>(alpha), scale, rng));
    if (value < 0) {
        ++clamped;
        return 0;
    }
    return value;
}

} // namespace

void SanitizerParams::validate() const {
    check_budget(epsilon, beta);
    if (domain < 1) throw ParameterError("domain must hold at least one bin");
    if (fanout < 2) throw ParameterError("fanout must be at least 2");
}

double laplace_from_uniform(double mean, double scale, double u) {
    if (!(scale > 0)) throw ParameterError("Laplace scale must be positive");
    if (!(u > 0 && u < 1)) throw ParameterError("uniform draw must lie in (0, 1)");
    if (u < 0.5) return mean + scale * std::log(2 * u);
    return mean - scale * std::log(2 * (1 - u));
}

double laplace_sample(double mean, double scale, Rng& rng) {
    if (!(scale > 0)) throw ParameterError("Laplace scale must be positive");
    return laplace_from_uniform(mean, scale, rng.uniform01());
}

std::int64_t min_positive_shift(double scale, double beta, std::uint64_t draws) {
    if (!(scale > 0) || !std::isfinite(scale)) throw ParameterError("scale must be positive");
    if (!(beta > 0 && beta < 1)) throw ParameterError("beta must lie in (0, 1)");
    if (draws == 0) throw ParameterError("need at least one draw");

    const long double s = scale;
    const long double b = beta;
    const long double gap = -2.0L * std::expm1(std::log1p(-b) / static_cast<long double>(draws));
    auto shift = static_cast<std::int64_t>(std::ceil(-std::log(gap) * s));
    shift = std::max<std::int64_t>(shift, 0);
    while (shift > 0 && shift_suffices(shift - 1, s, b, draws)) --shift;
    while (!shift_suffices(shift, s, b, draws)) ++shift;
    return shift;
}

std::int64_t alpha_point(double epsilon, double beta, std::uint64_t domain) {
    SanitizerParams{epsilon, beta, domain, 2}.validate();
    return min_positive_shift(1.0 / epsilon, beta, domain);
}

std::size_t tree_height(std::uint64_t domain, std::uint64_t fanout) {
    if (domain < 1 || fanout < 2) throw ParameterError("tree needs N >= 1 and k >= 2");
    std::size_t height = 0;
    std::uint64_t leaves = 1;
    while (leaves < domain) {
        if (leaves > std::numeric_limits<std::uint64_t>::max() / fanout) break;
        leaves *= fanout;
        ++height;
    }
    if (leaves != domain) {
        throw ParameterError("domain " + std::to_string(domain) + " is not a power of fanout " +
                             std::to_string(fanout));
    }
    return height;
}

std::uint64_t tree_nodes_count(std::uint64_t domain, std::uint64_t fanout) {
    const auto height = tree_height(domain, fanout);
    // (k^h - 1) / (k - 1) internal nodes plus N leaves.
    std::uint64_t total = 0;
    std::uint64_t level = 1;
    for (std::size_t l = 0; l <= height; ++l) {
        total += level;
        level *= fanout;
    }
    return total;
}

std::int64_t alpha_range(double epsilon, double beta, std::uint64_t domain, std::uint64_t fanout) {
    SanitizerParams{epsilon, beta, domain, fanout}.validate();
    const auto height = tree_height(domain, fanout);
    if (height == 0) {
        throw ParameterError("range sanitizer needs at least k bins");
    }
    return min_positive_shift(static_cast<double>(height) / epsilon, beta,
                              tree_nodes_count(domain, fanout));
}

std::uint64_t largest_power_at_most(std::uint64_t size, std::uint64_t fanout) {
    if (size < 1 || fanout < 2) throw ParameterError("need size >= 1 and k >= 2");
    std::uint64_t power = 1;
    while (power <= size / fanout) power *= fanout;
    return power;
}

double compose(std::span<const double> budgets, bool disjoint) {
    if (budgets.empty()) throw ParameterError("compose needs at least one budget");
    double total = 0.0;
    for (double e : budgets) {
        if (!(e > 0)) throw ParameterError("budgets must be positive");
        total = disjoint ? std::max(total, e) : total + e;
    }
    return total;
}

// ---- point ----------------------------------------------------------------

PointHistogram PointHistogram::build(std::span<const std::uint64_t> bins,
                                     const SanitizerParams& params, Rng& rng) {
    params.validate();
    std::vector<std::int64_t> truth(params.domain, 0);
    for (auto b : bins) {
        if (b >= params.domain) {
            throw DataError("bin " + std::to_string(b) + " outside domain of " +
                            std::to_string(params.domain));
        }
        ++truth[b];
    }
    PointHistogram h;
    h.alpha_ = alpha_point(params.epsilon, params.beta, params.domain);
    h.epsilon_ = params.epsilon;
    h.counts_.resize(params.domain);
    const double scale = 1.0 / params.epsilon;
    for (std::uint64_t i = 0; i < params.domain; ++i) {
        h.counts_[i] = noisy_count(truth[i], h.alpha_, scale, rng, h.clamped_);
    }
    return h;
}

std::int64_t PointHistogram::query(std::uint64_t bin) const {
    if (bin >= counts_.size()) {
        throw QueryError("bin " + std::to_string(bin) + " outside the histogram");
    }
    return counts_[bin];
}

Bytes PointHistogram::serialize() const {
    auto out = write_header(kKindHistogram, 0, counts_.size(), alpha_, epsilon_, counts_.size());
    for (auto c : counts_) put_u64_le(out, static_cast<std::uint64_t>(c));
    return out;
}

PointHistogram PointHistogram::deserialize(ByteView data) {
    auto header = read_header(data);
    if (header.kind != kKindHistogram || header.counts.size() != header.domain) {
        throw FormatError("serialized structure is not a point histogram");
    }
    PointHistogram h;
    h.counts_ = std::move(header.counts);
    h.alpha_ = header.alpha;
    h.epsilon_ = header.epsilon;
    return h;
}

// ---- range ----------------------------------------------------------------

std::uint64_t AggregateTree::level_offset(std::size_t level) const {
    std::uint64_t offset = 0;
    std::uint64_t width = 1;
    for (std::size_t l = 0; l < level; ++l) {
        offset += width;
        width *= fanout_;
    }
    return offset;
}

AggregateTree AggregateTree::build(std::span<const std::uint64_t> bins,
                                   const SanitizerParams& params, Rng& rng) {
    params.validate();
    AggregateTree t;
    t.fanout_ = params.fanout;
    t.domain_ = params.domain;
    t.height_ = tree_height(params.domain, params.fanout);
    t.alpha_ = alpha_range(params.epsilon, params.beta, params.domain, params.fanout);
    t.epsilon_ = params.epsilon;

    const auto nodes = tree_nodes_count(params.domain, params.fanout);
    std::vector<std::int64_t> truth(nodes, 0);
    const auto leaf_offset = t.level_offset(t.height_);
    for (auto b : bins) {
        if (b >= params.domain) {
            throw DataError("bin " + std::to_string(b) + " outside domain of " +
                            std::to_string(params.domain));
        }
        ++truth[leaf_offset + b];
    }
    for (std::size_t level = t.height_; level-- > 0;) {
        const auto offset = t.level_offset(level);
        const auto child_offset = t.level_offset(level + 1);
        const auto width = child_offset - offset;
        for (std::uint64_t i = 0; i < width; ++i) {
            std::int64_t sum = 0;
            for (std::uint64_t c = 0; c < t.fanout_; ++c) {
                sum += truth[child_offset + i * t.fanout_ + c];
            }
            truth[offset + i] = sum;
        }
    }

    t.counts_.resize(nodes);
    const double scale = t.noise_scale();
    for (std::uint64_t i = 0; i < nodes; ++i) {
        t.counts_[i] = noisy_count(truth[i], t.alpha_, scale, rng, t.clamped_);
    }
    return t;
}

std::pair<std::uint64_t, std::uint64_t> AggregateTree::span_of(const TreeNode& node) const {
    std::uint64_t width = 1;
    for (std::size_t l = node.level; l < height_; ++l) width *= fanout_;
    return {node.index * width, node.index * width + width - 1};
}

std::int64_t AggregateTree::value(const TreeNode& node) const {
    return counts_.at(level_offset(node.level) + node.index);
}

void AggregateTree::collect(TreeNode node, std::uint64_t lo, std::uint64_t hi,
                            std::vector<TreeNode>& out) const {
    const auto [first, last] = span_of(node);
    if (last < lo || first > hi) return;
    if (lo <= first && last <= hi) {
        out.push_back(node);
        return;
    }
    for (std::uint64_t c = 0; c < fanout_; ++c) {
        collect({node.level + 1, node.index * fanout_ + c}, lo, hi, out);
    }
}

std::vector<TreeNode> AggregateTree::cover(std::uint64_t lo, std::uint64_t hi) const {
    if (lo > hi || hi >= domain_) {
        throw QueryError("range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                         "] outside domain of " + std::to_string(domain_));
    }
    std::vector<TreeNode> out;
    collect({0, 0}, lo, hi, out);
    return out;
}

std::int64_t AggregateTree::query(std::uint64_t lo, std::uint64_t hi) const {
    std::int64_t total = 0;
    for (const auto& node : cover(lo, hi)) total += value(node);
    return total;
}

Bytes AggregateTree::serialize() const {
    auto out = write_header(kKindTree, fanout_, domain_, alpha_, epsilon_, counts_.size());
    for (auto c : counts_) put_u64_le(out, static_cast<std::uint64_t>(c));
    return out;
}

AggregateTree AggregateTree::deserialize(ByteView data) {
    auto header = read_header(data);
    if (header.kind != kKindTree) throw FormatError("serialized structure is not an aggregate tree");
    AggregateTree t;
    t.fanout_ = header.fanout;
    t.domain_ = header.domain;
    try {
        t.height_ = tree_height(header.domain, header.fanout);
        if (header.counts.size() != tree_nodes_count(header.domain, header.fanout)) {
            throw FormatError("node count does not match the tree shape");
        }
    } catch (const ParameterError& e) {
        throw FormatError(e.what());
    }
    t.alpha_ = header.alpha;
    t.epsilon_ = header.epsilon;
    t.counts_ = std::move(header.counts);
    return t;
}

// ---- variant --------------------------------------------------------------

Sanitizer Sanitizer::build(Kind kind, std::span<const std::uint64_t> bins,
                           const SanitizerParams& params, Rng& rng) {
    if (kind == Kind::point) return Sanitizer(PointHistogram::build(bins, params, rng));
    return Sanitizer(AggregateTree::build(bins, params, rng));
}

std::uint64_t Sanitizer::domain() const {
    return std::visit([](const auto& s) { return s.domain(); }, structure_);
}

std::int64_t Sanitizer::alpha() const {
    return std::visit([](const auto& s) { return s.alpha(); }, structure_);
}

double Sanitizer::epsilon() const {
    return std::visit([](const auto& s) { return s.epsilon(); }, structure_);
}

std::size_t Sanitizer::clamp_events() const {
    return std::visit([](const auto& s) { return s.clamp_events(); }, structure_);
}

std::int64_t Sanitizer::query(std::uint64_t lo, std::uint64_t hi) const {
    if (const auto* h = histogram()) {
        if (lo != hi) throw QueryError("point sanitizer cannot answer range queries");
        return h->query(lo);
    }
    return tree()->query(lo, hi);
}

std::size_t Sanitizer::cover_size(std::uint64_t lo, std::uint64_t hi) const {
    if (histogram() != nullptr) {
        if (lo != hi) throw QueryError("point sanitizer cannot answer range queries");
        return 1;
    }
    return tree()->cover(lo, hi).size();
}

} // namespace epsolute
