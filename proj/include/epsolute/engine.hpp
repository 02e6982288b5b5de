#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "epsolute/crypto.hpp"
#include "epsolute/database.hpp"
#include "epsolute/index.hpp"
#include "epsolute/path_oram.hpp"
#include "epsolute/random.hpp"
#include "epsolute/sanitizer.hpp"
#include "epsolute/storage.hpp"

namespace epsolute {

enum class Mode {
    single,   // one ORAM, one DP structure
    no_gamma, // m ORAMs, one DP structure per ORAM
    gamma,    // m ORAMs, one shared DP structure, Chernoff-padded quotas
};

// Per-ORAM work is independent; `parallel` fans it out with OpenMP while
// `serial` runs the same code in a plain loop and is kept as the reference.
enum class Execution { serial, parallel };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

// gamma = sqrt(-3 m ln(beta) / k), the Chernoff slack that keeps the largest
// per-ORAM share of k uniformly assigned records below (1 + gamma) k / m
// except with probability beta.
double compute_gamma(std::uint32_t orams, double beta, double noisy_count);

// Per-ORAM request quota ceil((1 + gamma) k / m); zero when k <= 0.
std::uint64_t gamma_quota(std::uint32_t orams, double beta, std::int64_t noisy_count);

// Maps raw search keys in [lo, lo + size) onto `bins` equal-width buckets.
struct DomainMap {
    std::int64_t lo = 0;
    std::uint64_t size = 1;
    std::uint64_t bins = 1;

    bool contains(std::int64_t key) const;
    std::uint64_t bin_of(std::int64_t key) const;
};

struct EngineConfig {
    Mode mode = Mode::single;
    std::uint32_t orams = 1;
    Sanitizer::Kind sanitizer = Sanitizer::Kind::range;
    double epsilon = 0.6931471805599453;
    double beta = 0x1p-20;
    std::uint64_t fanout = 16;
    // Raw key domain [domain_lo, domain_hi].
    std::int64_t domain_lo = 0;
    std::int64_t domain_hi = 0;
    // Budget available to all attributes together; defaults to epsilon.
    std::optional<double> total_budget;
    std::size_t bucket_size = 5;
    // Zero means unlimited.
    std::size_t max_oram_capacity = 0;
    StorageSpec storage;
    // Wipe the backing store before building the ORAMs.
    bool clear_storage = false;
    Execution execution = Execution::parallel;
    std::optional<std::uint64_t> seed;
    std::size_t key_bits = 128;

    void validate() const;
    DomainMap domain_map() const;
};

struct QueryMetrics {
    double elapsed_ms = 0;
    std::uint64_t true_count = 0;
    // Noisy count the sanitizer returned (summed over ORAMs in no-gamma mode).
    std::int64_t noisy_count = 0;
    std::uint64_t fetched = 0;
    std::uint64_t returned = 0;
    std::uint64_t bytes_up = 0;
    std::uint64_t bytes_down = 0;
    std::uint64_t oram_accesses = 0;
    std::uint64_t roundtrips = 0;
    std::uint64_t padded_requests = 0;
    bool failed = false;
    std::vector<std::uint64_t> requests_per_oram;
    std::vector<std::uint64_t> roundtrips_per_oram;
};

struct QueryResult {
    std::vector<Record> records; // sorted by ID
    QueryMetrics metrics;
};

// Observes every ORAM request list right before it is issued. Test hook for
// the noise-request contract.
struct RequestObserver {
    virtual ~RequestObserver() = default;
    virtual void on_requests(std::uint32_t oram, const std::vector<std::uint64_t>& true_ids,
                             const std::vector<std::uint64_t>& noise_ids,
                             std::uint64_t dummy_reads) = 0;
};

class Engine {
  public:
    // Builds the ORAMs, writes every record, and registers attribute 0 with
    // config.epsilon.
    Engine(const std::vector<Record>& records, EngineConfig config);
    ~Engine();
    Engine(Engine&&) noexcept;
    Engine& operator=(Engine&&) noexcept;

    void register_attribute(std::size_t attribute, double epsilon);

    QueryResult query(const Query& q);

    const EngineConfig& config() const { return config_; }
    std::size_t record_count() const { return ids_.size(); }
    std::uint32_t oram_count() const { return static_cast<std::uint32_t>(shards_.size()); }
    std::size_t partition_size(std::uint32_t oram) const;
    const PathOram& oram(std::uint32_t oram) const;
    PathOram& oram(std::uint32_t oram);

    // Budget of one attribute: max over disjoint partitions in no-gamma mode.
    double attribute_budget(std::size_t attribute) const;
    // Sum over registered attributes.
    double total_budget() const;
    std::vector<std::size_t> attributes() const;

    const BPlusIndex& index(std::size_t attribute) const;
    // Shared structure (oram 0) or the structure of one partition (no-gamma).
    const Sanitizer& sanitizer(std::size_t attribute, std::uint32_t oram = 0) const;

    // Plaintext bytes per ORAM block: id, keys, payload.
    std::size_t block_payload() const { return block_payload_; }
    std::size_t record_size() const { return record_size_; }

    void set_observer(RequestObserver* observer) { observer_ = observer; }
    void set_execution(Execution e) { config_.execution = e; }

  private:
    struct Shard;
    struct Attribute;
    struct ShardOutcome;

    ShardOutcome run_shard(std::uint32_t j, const Query& q, const std::vector<Locator>& wanted,
                           std::uint64_t quota, bool failed);
    Bytes encode_block(const Record& r) const;
    Record decode_block(ByteView block) const;

    EngineConfig config_;
    DomainMap domain_;
    std::size_t record_size_ = 0;
    std::size_t key_count_ = 0;
    std::size_t block_payload_ = 0;
    std::unique_ptr<SeededRng> noise_rng_;
    std::unique_ptr<SymKey> hash_key_;
    std::vector<std::uint64_t> ids_;
    std::vector<std::vector<std::int64_t>> keys_;
    std::vector<std::uint32_t> partition_of_;
    std::vector<std::unique_ptr<Shard>> shards_;
    std::vector<std::unique_ptr<Attribute>> attributes_;
    RequestObserver* observer_ = nullptr;
};

} // namespace epsolute
