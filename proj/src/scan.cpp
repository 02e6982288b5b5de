#include "epsolute/scan.hpp"

#include <algorithm>
#include <chrono>

#include "epsolute/error.hpp"
#include "epsolute/parallel.hpp"

namespace epsolute {

namespace {

// Kept clear of the ORAM shard namespaces (j << 40) on a shared server.
constexpr std::uint64_t kScanKeyBase = std::uint64_t{1} << 62;
constexpr std::uint64_t kWorkerKeySpace = std::uint64_t{1} << 40;

} // namespace

struct LinearScan::Worker {
    std::unique_ptr<KeyValueStore> store;
    BlockCipher cipher;
    std::uint64_t key_base = 0;
    std::uint64_t size = 0;

    Worker(SymKey key, std::size_t max_plaintext) : cipher(std::move(key), max_plaintext) {}
};

LinearScan::LinearScan(const std::vector<Record>& records, ScanConfig config)
    : config_(std::move(config)) {
    if (records.empty()) throw DataError("database is empty");
    if (config_.workers < 1) throw ConfigError("need at least one scan worker");
    if (config_.batch < 1) throw ConfigError("scan batch must be positive");
    validate_records(records);
    count_ = records.size();
    key_count_ = records.front().keys.size();
    record_size_ = records.front().payload.size();
    block_payload_ = 8 + 8 * key_count_ + record_size_;

    const auto seed = config_.seed ? *config_.seed : make_entropy_rng()->next();
    SeededRng key_rng(derive_seed(seed, 1));
    const auto key = keygen(config_.key_bits, key_rng);
    const auto w = std::min(config_.workers, records.size());
    for (std::size_t i = 0; i < w; ++i) {
        auto worker = std::make_unique<Worker>(key, block_payload_);
        worker->store = open_store(config_.storage, i);
        worker->key_base = kScanKeyBase + i * kWorkerKeySpace;
        workers_.push_back(std::move(worker));
    }
    if (config_.clear_storage) {
        for (auto& wk : workers_) wk->store->clear();
    }

    for_each_index(w, config_.execution == Execution::parallel, [&](std::size_t i) {
        auto& wk = *workers_[i];
        SeededRng iv_rng(derive_seed(seed, 4000 + i));
        std::vector<KeyValue> batch;
        Bytes plain;
        for (std::size_t r = i; r < records.size(); r += w) {
            const auto& rec = records[r];
            plain.clear();
            put_u64_le(plain, rec.id);
            for (auto k : rec.keys) put_u64_le(plain, static_cast<std::uint64_t>(k));
            plain.insert(plain.end(), rec.payload.begin(), rec.payload.end());
            KeyValue kv{wk.key_base + wk.size++, {}};
            wk.cipher.encrypt_append(plain, iv_rng, kv.value);
            batch.push_back(std::move(kv));
            if (batch.size() == config_.batch) {
                wk.store->batch_put(batch);
                batch.clear();
            }
        }
        if (!batch.empty()) wk.store->batch_put(batch);
        wk.store->reset_counters();
    });
}

LinearScan::~LinearScan() = default;
LinearScan::LinearScan(LinearScan&&) noexcept = default;
LinearScan& LinearScan::operator=(LinearScan&&) noexcept = default;

QueryResult LinearScan::query(const Query& q) {
    const auto start = std::chrono::steady_clock::now();
    q.validate();
    if (q.attribute >= key_count_) {
        throw QueryError("attribute " + std::to_string(q.attribute) + " not present");
    }
    std::vector<std::vector<Record>> found(workers_.size());
    std::vector<StoreCounters> traffic(workers_.size());
    for_each_index(workers_.size(), config_.execution == Execution::parallel, [&](std::size_t i) {
        auto& wk = *workers_[i];
        const auto before = wk.store->counters();
        std::vector<std::uint64_t> keys;
        Bytes plain;
        for (std::uint64_t first = 0; first < wk.size; first += config_.batch) {
            keys.clear();
            const auto last = std::min<std::uint64_t>(wk.size, first + config_.batch);
            for (auto k = first; k < last; ++k) keys.push_back(wk.key_base + k);
            for (const auto& value : wk.store->batch_get(keys)) {
                wk.cipher.decrypt_serialized(value, plain);
                const auto key = static_cast<std::int64_t>(get_u64_le(plain.data() + 8 + 8 * q.attribute));
                if (!q.matches(key)) continue;
                Record r;
                r.id = get_u64_le(plain.data());
                for (std::size_t a = 0; a < key_count_; ++a) {
                    r.keys.push_back(static_cast<std::int64_t>(get_u64_le(plain.data() + 8 + 8 * a)));
                }
                const auto* payload = plain.data() + 8 + 8 * key_count_;
                r.payload.assign(payload, payload + record_size_);
                found[i].push_back(std::move(r));
            }
        }
        const auto& after = wk.store->counters();
        traffic[i] = {after.roundtrips - before.roundtrips, after.bytes_up - before.bytes_up,
                      after.bytes_down - before.bytes_down};
    });

    QueryResult result;
    auto& m = result.metrics;
    for (std::size_t i = 0; i < workers_.size(); ++i) {
        for (auto& r : found[i]) result.records.push_back(std::move(r));
        m.bytes_up += traffic[i].bytes_up;
        m.bytes_down += traffic[i].bytes_down;
        m.roundtrips += traffic[i].roundtrips;
        m.requests_per_oram.push_back(workers_[i]->size);
        m.roundtrips_per_oram.push_back(traffic[i].roundtrips);
    }
    std::sort(result.records.begin(), result.records.end(),
              [](const Record& a, const Record& b) { return a.id < b.id; });
    m.true_count = result.records.size();
    m.noisy_count = static_cast<std::int64_t>(count_);
    m.fetched = count_;
    m.returned = result.records.size();
    m.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return result;
}

} // namespace epsolute
