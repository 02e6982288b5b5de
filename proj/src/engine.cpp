#include "epsolute/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "epsolute/error.hpp"
#include "epsolute/parallel.hpp"

namespace epsolute {

namespace {

constexpr std::size_t kSetupChunk = 512;
constexpr std::uint64_t kShardKeySpace = std::uint64_t{1} << 40;
constexpr std::uint64_t kMaxPointDomain = std::uint64_t{1} << 26;

} // namespace

std::string to_string(Mode mode) {
    switch (mode) {
    case Mode::single:
        return "single";
    case Mode::no_gamma:
        return "no-gamma";
    case Mode::gamma:
        return "gamma";
    }
    return "?";
}

Mode parse_mode(const std::string& text) {
    if (text == "single") return Mode::single;
    if (text == "no-gamma") return Mode::no_gamma;
    if (text == "gamma") return Mode::gamma;
    throw ParameterError("unknown mode '" + text + "'");
}

double compute_gamma(std::uint32_t orams, double beta, double noisy_count) {
    if (orams < 1) throw ParameterError("need at least one ORAM");
    if (!(beta > 0 && beta < 1)) throw ParameterError("beta must lie in (0, 1)");
    if (!(noisy_count > 0)) throw ParameterError("gamma needs a positive record count");
    return std::sqrt(-3.0 * orams * std::log(beta) / noisy_count);
}

std::uint64_t gamma_quota(std::uint32_t orams, double beta, std::int64_t noisy_count) {
    if (noisy_count <= 0) return 0;
    const auto k = static_cast<double>(noisy_count);
    const auto gamma = compute_gamma(orams, beta, k);
    return static_cast<std::uint64_t>(std::ceil((1.0 + gamma) * k / orams));
}

bool DomainMap::contains(std::int64_t key) const {
    return key >= lo && static_cast<std::uint64_t>(key - lo) < size;
}

std::uint64_t DomainMap::bin_of(std::int64_t key) const {
    if (!contains(key)) {
        throw QueryError("key " + std::to_string(key) + " outside the domain");
    }
    const auto offset = static_cast<unsigned __int128>(static_cast<std::uint64_t>(key - lo));
    return static_cast<std::uint64_t>(offset * bins / size);
}

void EngineConfig::validate() const {
    if (orams < 1) throw ConfigError("need at least one ORAM");
    if (mode == Mode::single && orams != 1) throw ConfigError("single mode runs exactly one ORAM");
    if (domain_hi < domain_lo) throw ConfigError("empty key domain");
    if (bucket_size < 1) throw ConfigError("bucket size must be positive");
    try {
        SanitizerParams{epsilon, beta, 1, fanout}.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    if (total_budget && *total_budget < epsilon) {
        throw ConfigError("total budget below the first attribute's epsilon");
    }
    domain_map();
}

DomainMap EngineConfig::domain_map() const {
    DomainMap map;
    map.lo = domain_lo;
    map.size = static_cast<std::uint64_t>(domain_hi) - static_cast<std::uint64_t>(domain_lo) + 1;
    if (map.size == 0) throw ConfigError("key domain spans the whole 64-bit range");
    if (sanitizer == Sanitizer::Kind::point) {
        if (map.size > kMaxPointDomain) throw ConfigError("point histogram domain too large");
        map.bins = map.size;
    } else {
        map.bins = largest_power_at_most(map.size, fanout);
        if (map.bins < fanout) {
            throw ConfigError("range domain needs at least " + std::to_string(fanout) + " keys");
        }
    }
    return map;
}

struct Engine::Shard {
    std::vector<std::uint64_t> ids; // sorted; ORAM address = position
    std::unordered_map<std::uint64_t, std::uint64_t> address;
    std::unique_ptr<PathOram> oram;
    SeededRng rng;

    explicit Shard(std::uint64_t seed) : rng(seed) {}
    std::uint64_t dummy_address() const { return ids.size(); }
};

struct Engine::Attribute {
    std::size_t attribute = 0;
    double epsilon = 0;
    BPlusIndex index;
    std::vector<Sanitizer> sanitizers;
};

struct Engine::ShardOutcome {
    std::vector<Record> records;
    StoreCounters traffic;
    std::uint64_t accesses = 0;
    std::uint64_t padded = 0;
};

Engine::Engine(const std::vector<Record>& records, EngineConfig config)
    : config_(std::move(config)) {
    config_.validate();
    if (records.empty()) throw DataError("database is empty");
    validate_records(records);
    domain_ = config_.domain_map();
    for (const auto& r : records) {
        if (!domain_.contains(r.key(0))) {
            throw DataError("record " + std::to_string(r.id) + " key " + std::to_string(r.key(0)) +
                            " outside the domain");
        }
    }

    const auto seed = config_.seed ? *config_.seed : make_entropy_rng()->next();
    record_size_ = records.front().payload.size();
    key_count_ = records.front().keys.size();
    block_payload_ = 8 + 8 * key_count_ + record_size_;
    noise_rng_ = std::make_unique<SeededRng>(derive_seed(seed, 0));
    SeededRng key_rng(derive_seed(seed, 1));
    auto data_key = keygen(config_.key_bits, key_rng);
    hash_key_ = std::make_unique<SymKey>(keygen(config_.key_bits, key_rng));

    const auto m = config_.orams;
    ids_.reserve(records.size());
    keys_.reserve(records.size());
    partition_of_.reserve(records.size());
    for (const auto& r : records) {
        ids_.push_back(r.id);
        keys_.push_back(r.keys);
        partition_of_.push_back(m == 1 ? 0 : prf_partition(*hash_key_, r.id, m));
    }

    std::vector<std::unique_ptr<KeyValueStore>> stores;
    for (std::uint32_t j = 0; j < m; ++j) {
        shards_.push_back(std::make_unique<Shard>(derive_seed(seed, 3000 + j)));
        stores.push_back(open_store(config_.storage, j));
    }
    if (config_.clear_storage) {
        for (auto& s : stores) s->clear();
    }
    std::vector<std::vector<std::size_t>> members(m);
    for (std::size_t i = 0; i < records.size(); ++i) members[partition_of_[i]].push_back(i);
    for (std::uint32_t j = 0; j < m; ++j) {
        auto& shard = *shards_[j];
        std::sort(members[j].begin(), members[j].end(),
                  [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
        for (auto i : members[j]) {
            shard.address.emplace(records[i].id, shard.ids.size());
            shard.ids.push_back(records[i].id);
        }
        if (config_.max_oram_capacity != 0 && shard.ids.size() > config_.max_oram_capacity) {
            throw ConfigError("ORAM " + std::to_string(j + 1) + " would hold " +
                              std::to_string(shard.ids.size()) + " records, capacity " +
                              std::to_string(config_.max_oram_capacity));
        }
    }

    for_each_index(m, config_.execution == Execution::parallel, [&](std::size_t j) {
        auto& shard = *shards_[j];
        OramConfig oc;
        oc.bucket_size = config_.bucket_size;
        oc.capacity = shard.ids.size() + 1; // one spare address for dummy reads
        oc.block_payload = block_payload_;
        oc.key_base = j * kShardKeySpace;
        shard.oram = std::make_unique<PathOram>(oc, data_key, std::move(stores[j]),
                                                std::make_unique<SeededRng>(derive_seed(seed, 2000 + j)));
        std::vector<AccessOp> ops;
        for (auto i : members[j]) {
            ops.push_back(AccessOp::write(shard.address.at(records[i].id), encode_block(records[i])));
            if (ops.size() == kSetupChunk) {
                shard.oram->batch_access(ops);
                ops.clear();
            }
        }
        if (!ops.empty()) shard.oram->batch_access(ops);
        shard.oram->store().reset_counters();
    });

    register_attribute(0, config_.epsilon);
}

Engine::~Engine() = default;
Engine::Engine(Engine&&) noexcept = default;
Engine& Engine::operator=(Engine&&) noexcept = default;

Bytes Engine::encode_block(const Record& r) const {
    Bytes out;
    out.reserve(block_payload_);
    put_u64_le(out, r.id);
    for (auto k : r.keys) put_u64_le(out, static_cast<std::uint64_t>(k));
    out.insert(out.end(), r.payload.begin(), r.payload.end());
    return out;
}

Record Engine::decode_block(ByteView block) const {
    Record r;
    r.id = get_u64_le(block.data());
    for (std::size_t a = 0; a < key_count_; ++a) {
        r.keys.push_back(static_cast<std::int64_t>(get_u64_le(block.data() + 8 + 8 * a)));
    }
    const auto* payload = block.data() + 8 + 8 * key_count_;
    r.payload.assign(payload, payload + record_size_);
    return r;
}

void Engine::register_attribute(std::size_t attribute, double epsilon) {
    if (attribute >= key_count_) {
        throw ParameterError("records have no attribute " + std::to_string(attribute));
    }
    for (const auto& a : attributes_) {
        if (a->attribute == attribute) {
            throw ParameterError("attribute " + std::to_string(attribute) + " already registered");
        }
    }
    if (!(epsilon > 0)) throw ParameterError("attribute budget must be positive");
    const double limit = config_.total_budget.value_or(config_.epsilon);
    const double used = attributes_.empty() ? 0.0 : total_budget();
    if (used + epsilon > limit * (1 + 1e-12)) {
        throw BudgetError("attribute " + std::to_string(attribute) + " needs " +
                          std::to_string(epsilon) + " but only " + std::to_string(limit - used) +
                          " of the budget remains");
    }

    const auto m = config_.orams;
    std::vector<IndexEntry> entries;
    entries.reserve(ids_.size());
    std::vector<std::vector<std::uint64_t>> bins(config_.mode == Mode::no_gamma ? m : 1);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        const auto key = keys_[i][attribute];
        if (!domain_.contains(key)) {
            throw DataError("record " + std::to_string(ids_[i]) + " attribute " +
                            std::to_string(attribute) + " outside the domain");
        }
        entries.push_back({key, {ids_[i], partition_of_[i] + 1}});
        bins[config_.mode == Mode::no_gamma ? partition_of_[i] : 0].push_back(domain_.bin_of(key));
    }

    auto attr = std::make_unique<Attribute>();
    attr->attribute = attribute;
    attr->epsilon = epsilon;
    attr->index = BPlusIndex::bulk_load(std::move(entries));
    const SanitizerParams params{epsilon, config_.beta, domain_.bins, config_.fanout};
    for (const auto& part : bins) {
        attr->sanitizers.push_back(Sanitizer::build(config_.sanitizer, part, params, *noise_rng_));
    }
    attributes_.push_back(std::move(attr));
}

double Engine::attribute_budget(std::size_t attribute) const {
    for (const auto& a : attributes_) {
        if (a->attribute != attribute) continue;
        std::vector<double> parts;
        for (const auto& s : a->sanitizers) parts.push_back(s.epsilon());
        return compose(parts, true);
    }
    throw ParameterError("attribute " + std::to_string(attribute) + " not registered");
}

double Engine::total_budget() const {
    std::vector<double> parts;
    for (const auto& a : attributes_) parts.push_back(attribute_budget(a->attribute));
    return compose(parts, false);
}

std::vector<std::size_t> Engine::attributes() const {
    std::vector<std::size_t> out;
    for (const auto& a : attributes_) out.push_back(a->attribute);
    return out;
}

const BPlusIndex& Engine::index(std::size_t attribute) const {
    for (const auto& a : attributes_) {
        if (a->attribute == attribute) return a->index;
    }
    throw ParameterError("attribute " + std::to_string(attribute) + " not registered");
}

const Sanitizer& Engine::sanitizer(std::size_t attribute, std::uint32_t oram) const {
    for (const auto& a : attributes_) {
        if (a->attribute == attribute) return a->sanitizers.at(a->sanitizers.size() == 1 ? 0 : oram);
    }
    throw ParameterError("attribute " + std::to_string(attribute) + " not registered");
}

std::size_t Engine::partition_size(std::uint32_t oram) const { return shards_.at(oram)->ids.size(); }
const PathOram& Engine::oram(std::uint32_t oram) const { return *shards_.at(oram)->oram; }
PathOram& Engine::oram(std::uint32_t oram) { return *shards_.at(oram)->oram; }

Engine::ShardOutcome Engine::run_shard(std::uint32_t j, const Query& q,
                                       const std::vector<Locator>& wanted, std::uint64_t quota,
                                       bool failed) {
    ShardOutcome out;
    if (quota == 0) return out;
    auto& shard = *shards_[j];
    const auto before = shard.oram->store().counters();

    std::vector<std::uint64_t> true_ids;
    if (!failed) {
        for (const auto& loc : wanted) true_ids.push_back(loc.record_id);
    }
    std::unordered_set<std::uint64_t> excluded(true_ids.begin(), true_ids.end());

    const auto needed = quota - true_ids.size();
    const auto available = shard.ids.size() - true_ids.size();
    std::vector<std::uint64_t> noise_ids;
    noise_ids.reserve(std::min(needed, available));
    if (needed * 2 <= available) {
        std::unordered_set<std::uint64_t> taken;
        while (noise_ids.size() < needed) {
            const auto id = shard.ids[shard.rng.below(shard.ids.size())];
            if (excluded.contains(id) || !taken.insert(id).second) continue;
            noise_ids.push_back(id);
        }
    } else {
        std::vector<std::uint64_t> pool;
        pool.reserve(available);
        for (auto id : shard.ids) {
            if (!excluded.contains(id)) pool.push_back(id);
        }
        const auto take = std::min<std::uint64_t>(needed, pool.size());
        for (std::uint64_t i = 0; i < take; ++i) {
            std::swap(pool[i], pool[i + shard.rng.below(pool.size() - i)]);
        }
        noise_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
    }
    const auto dummy_reads = needed - noise_ids.size();
    out.padded = dummy_reads;
    if (observer_ != nullptr) observer_->on_requests(j + 1, true_ids, noise_ids, dummy_reads);

    std::vector<AccessOp> ops;
    ops.reserve(quota);
    for (auto id : true_ids) ops.push_back(AccessOp::read(shard.address.at(id)));
    for (auto id : noise_ids) ops.push_back(AccessOp::read(shard.address.at(id)));
    for (std::uint64_t i = 0; i < dummy_reads; ++i) ops.push_back(AccessOp::read(shard.dummy_address()));
    std::shuffle(ops.begin(), ops.end(), shard.rng);

    const auto blocks = shard.oram->batch_access(ops);
    out.accesses = ops.size();
    if (!failed) {
        for (std::size_t i = 0; i < ops.size(); ++i) {
            if (ops[i].address == shard.dummy_address()) continue;
            auto record = decode_block(*blocks[i]);
            if (excluded.contains(record.id) && q.matches(record.key(q.attribute))) {
                out.records.push_back(std::move(record));
            }
        }
    }
    const auto& after = shard.oram->store().counters();
    out.traffic.roundtrips = after.roundtrips - before.roundtrips;
    out.traffic.bytes_up = after.bytes_up - before.bytes_up;
    out.traffic.bytes_down = after.bytes_down - before.bytes_down;
    return out;
}

QueryResult Engine::query(const Query& q) {
    const auto start = std::chrono::steady_clock::now();
    q.validate();
    const Attribute* attr = nullptr;
    for (const auto& a : attributes_) {
        if (a->attribute == q.attribute) attr = a.get();
    }
    if (attr == nullptr) {
        throw QueryError("attribute " + std::to_string(q.attribute) + " not registered");
    }
    if (!domain_.contains(q.lo) || !domain_.contains(q.hi)) {
        throw QueryError("query [" + std::to_string(q.lo) + ", " + std::to_string(q.hi) +
                         "] leaves the domain");
    }
    if (q.kind == Query::Kind::range && config_.sanitizer == Sanitizer::Kind::point) {
        throw QueryError("engine built for point queries cannot answer ranges");
    }
    const auto bin_lo = domain_.bin_of(q.lo);
    const auto bin_hi = domain_.bin_of(q.hi);

    const auto m = config_.orams;
    const auto matches = attr->index.lookup(q.lo, q.hi);
    const auto groups = group_by_oram(matches, m);

    QueryResult result;
    auto& metrics = result.metrics;
    metrics.true_count = matches.size();
    std::vector<std::uint64_t> quota(m, 0);
    if (config_.mode == Mode::no_gamma) {
        for (std::uint32_t j = 0; j < m; ++j) {
            const auto c = attr->sanitizers[j].query(bin_lo, bin_hi);
            metrics.noisy_count += c;
            quota[j] = static_cast<std::uint64_t>(c);
        }
    } else {
        const auto c = attr->sanitizers[0].query(bin_lo, bin_hi);
        metrics.noisy_count = c;
        if (config_.mode == Mode::single) {
            quota[0] = static_cast<std::uint64_t>(c);
        } else {
            std::fill(quota.begin(), quota.end(), gamma_quota(m, config_.beta, c));
        }
    }
    for (std::uint32_t j = 0; j < m; ++j) {
        if (groups[j].size() > quota[j]) metrics.failed = true;
    }

    std::vector<ShardOutcome> outcomes(m);
    for_each_index(m, config_.execution == Execution::parallel, [&](std::size_t j) {
        outcomes[j] = run_shard(static_cast<std::uint32_t>(j), q, groups[j], quota[j], metrics.failed);
    });

    for (std::uint32_t j = 0; j < m; ++j) {
        auto& o = outcomes[j];
        metrics.fetched += o.accesses;
        metrics.oram_accesses += o.accesses;
        metrics.padded_requests += o.padded;
        metrics.bytes_up += o.traffic.bytes_up;
        metrics.bytes_down += o.traffic.bytes_down;
        metrics.roundtrips += o.traffic.roundtrips;
        metrics.requests_per_oram.push_back(o.accesses);
        metrics.roundtrips_per_oram.push_back(o.traffic.roundtrips);
        for (auto& r : o.records) result.records.push_back(std::move(r));
    }
    std::sort(result.records.begin(), result.records.end(),
              [](const Record& a, const Record& b) { return a.id < b.id; });
    metrics.returned = result.records.size();
    metrics.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace epsolute
