#include "epsolute/path_oram.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "epsolute/error.hpp"

namespace epsolute {

namespace {

constexpr std::uint64_t kDummyAddress = ~std::uint64_t{0};
constexpr std::size_t kAddressBytes = 8;
constexpr std::size_t kInitChunk = 1024;

std::size_t depth_of(std::uint64_t bucket) {
    return static_cast<std::size_t>(std::bit_width(bucket + 1) - 1);
}

} // namespace

double stash_bound(double x) {
    if (!(x >= 0)) {
        throw ParameterError("stash_bound: x must be non-negative");
    }
    return std::min(1.0, 14.0 * std::pow(0.6002, x));
}

std::size_t stash_limit_for(double target) {
    if (!(target > 0 && target <= 1)) {
        throw ParameterError("stash failure target must be in (0, 1]");
    }
    std::size_t x = 0;
    while (stash_bound(static_cast<double>(x)) > target) ++x;
    return x;
}

std::size_t oram_levels(std::size_t capacity, std::size_t bucket_size) {
    if (capacity == 0 || bucket_size == 0) {
        throw ParameterError("ORAM capacity and bucket size must be positive");
    }
    const auto leaves_wanted = std::max<std::size_t>(2, (capacity + bucket_size - 1) / bucket_size);
    return static_cast<std::size_t>(std::bit_width(leaves_wanted - 1));
}

PathOram::PathOram(OramConfig config, SymKey key, std::unique_ptr<KeyValueStore> store,
                   std::unique_ptr<Rng> rng)
    : config_(config), store_(std::move(store)), rng_(std::move(rng)),
      cipher_(std::move(key), kAddressBytes + config.block_payload) {
    if (!store_ || !rng_) {
        throw ParameterError("PathOram needs a store and a random source");
    }
    levels_ = oram_levels(config_.capacity, config_.bucket_size);
    if (levels_ > 31) {
        throw ParameterError("ORAM too large for 32-bit leaf indices");
    }
    if (store_->get(bucket_key(0))) {
        throw StorageError("storage not empty: ORAM root bucket already present");
    }

    std::vector<KeyValue> batch;
    for (std::uint64_t b = 0; b < bucket_count(); ++b) {
        Bytes value;
        value.reserve(config_.bucket_size * slot_size());
        for (std::size_t z = 0; z < config_.bucket_size; ++z) {
            encrypt_slot(kDummyAddress, {}, value);
        }
        batch.push_back({bucket_key(b), std::move(value)});
        if (batch.size() == kInitChunk) {
            store_->batch_put(batch);
            batch.clear();
        }
    }
    if (!batch.empty()) store_->batch_put(batch);

    position_.resize(config_.capacity);
    for (auto& leaf : position_) leaf = static_cast<std::uint32_t>(rng_->below(leaf_count()));
    live_.assign(config_.capacity, false);
}

PathOram::PathOram(PathOram&&) noexcept = default;
PathOram& PathOram::operator=(PathOram&&) noexcept = default;
PathOram::~PathOram() = default;

std::size_t PathOram::slot_size() const {
    return kAddressBytes + config_.block_payload + kCiphertextOverhead;
}

void PathOram::encrypt_slot(std::uint64_t address, ByteView payload, Bytes& out) {
    scratch_.assign(kAddressBytes + config_.block_payload, 0);
    for (std::size_t i = 0; i < kAddressBytes; ++i) {
        scratch_[i] = static_cast<std::uint8_t>(address >> (8 * i));
    }
    std::copy(payload.begin(), payload.end(), scratch_.begin() + kAddressBytes);
    cipher_.encrypt_append(scratch_, *rng_, out);
}

void PathOram::append_path(std::uint32_t leaf, std::vector<std::uint64_t>& buckets) const {
    std::uint64_t node = leaf_count() - 1 + leaf;
    for (;;) {
        buckets.push_back(node);
        if (node == 0) break;
        node = (node - 1) / 2;
    }
}

void PathOram::load_buckets(std::span<const std::uint64_t> buckets, std::span<const Bytes> values) {
    const auto slot = slot_size();
    Bytes plain;
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const auto& value = values[i];
        if (value.size() != slot * config_.bucket_size) {
            throw FormatError("bucket " + std::to_string(buckets[i]) + " has wrong size");
        }
        for (std::size_t z = 0; z < config_.bucket_size; ++z) {
            cipher_.decrypt_serialized(ByteView(value).subspan(z * slot, slot), plain);
            const auto address = get_u64_le(plain.data());
            if (address == kDummyAddress) continue;
            if (address >= config_.capacity) {
                throw FormatError("bucket holds out-of-range address");
            }
            const auto [it, fresh] =
                stash_.try_emplace(address, plain.begin() + kAddressBytes, plain.end());
            if (!fresh) {
                throw FormatError("block " + std::to_string(address) + " stored twice");
            }
        }
    }
}

std::vector<KeyValue> PathOram::evict(std::span<const std::uint64_t> buckets) {
    // Buckets arrive sorted by heap index, hence grouped by depth ascending.
    std::vector<std::vector<std::uint64_t>> placed(buckets.size());
    std::vector<std::unordered_map<std::uint64_t, std::size_t>> by_depth(levels_ + 1);
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        const auto d = depth_of(buckets[i]);
        by_depth[d].emplace(buckets[i] - ((std::uint64_t{1} << d) - 1), i);
    }

    std::vector<std::uint64_t> pending;
    pending.reserve(stash_.size());
    for (const auto& [address, _] : stash_) pending.push_back(address);

    for (std::size_t d = levels_ + 1; d-- > 0 && !pending.empty();) {
        if (by_depth[d].empty()) continue;
        std::size_t keep = 0;
        for (auto address : pending) {
            const auto node = std::uint64_t{position_[address]} >> (levels_ - d);
            const auto it = by_depth[d].find(node);
            if (it != by_depth[d].end() && placed[it->second].size() < config_.bucket_size) {
                placed[it->second].push_back(address);
            } else {
                pending[keep++] = address;
            }
        }
        pending.resize(keep);
    }

    std::vector<KeyValue> out;
    out.reserve(buckets.size());
    for (std::size_t i = 0; i < buckets.size(); ++i) {
        Bytes value;
        value.reserve(config_.bucket_size * slot_size());
        for (auto address : placed[i]) {
            encrypt_slot(address, stash_.at(address), value);
        }
        for (std::size_t z = placed[i].size(); z < config_.bucket_size; ++z) {
            encrypt_slot(kDummyAddress, {}, value);
        }
        out.push_back({bucket_key(buckets[i]), std::move(value)});
    }
    for (const auto& bucket : placed) {
        for (auto address : bucket) stash_.erase(address);
    }
    return out;
}

std::optional<Bytes> PathOram::access(const AccessOp& op) {
    return std::move(batch_access({&op, 1}).front());
}

std::vector<std::optional<Bytes>> PathOram::batch_access(std::span<const AccessOp> ops) {
    if (failed_) {
        throw StashOverflow("ORAM is unusable after an earlier stash overflow");
    }
    if (ops.empty()) {
        throw ParameterError("batch_access needs at least one operation");
    }
    for (const auto& op : ops) {
        if (op.address >= config_.capacity) {
            throw AddressError("address " + std::to_string(op.address) + " outside capacity " +
                               std::to_string(config_.capacity));
        }
        const bool is_write = op.kind == AccessOp::Kind::write;
        if (is_write != op.data.has_value()) {
            throw ParameterError("write operations carry data, reads do not");
        }
        if (is_write && op.data->size() > config_.block_payload) {
            throw SizeError("write of " + std::to_string(op.data->size()) +
                            " bytes exceeds block payload " +
                            std::to_string(config_.block_payload));
        }
    }

    const auto stash_before = stash_;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> old_positions;
    const auto trace_before = trace_.size();
    const auto rollback = [&] {
        stash_ = stash_before;
        for (auto it = old_positions.rbegin(); it != old_positions.rend(); ++it) {
            position_[it->first] = it->second;
        }
        trace_.resize(trace_before);
    };

    std::vector<std::uint64_t> buckets;
    buckets.reserve(ops.size() * (levels_ + 1));
    for (const auto& op : ops) {
        const auto leaf = position_[op.address];
        if (tracing_) trace_.push_back(leaf);
        append_path(leaf, buckets);
        if (config_.remap) {
            old_positions.emplace_back(op.address, leaf);
            position_[op.address] = static_cast<std::uint32_t>(rng_->below(leaf_count()));
        }
    }
    std::sort(buckets.begin(), buckets.end());
    buckets.erase(std::unique(buckets.begin(), buckets.end()), buckets.end());

    std::vector<std::uint64_t> keys(buckets.size());
    std::transform(buckets.begin(), buckets.end(), keys.begin(),
                   [this](std::uint64_t b) { return bucket_key(b); });

    std::vector<std::optional<Bytes>> results;
    std::vector<KeyValue> write_back;
    try {
        const auto values = store_->batch_get(keys);
        load_buckets(buckets, values);

        results.reserve(ops.size());
        for (const auto& op : ops) {
            if (op.kind == AccessOp::Kind::read) {
                const auto it = stash_.find(op.address);
                results.emplace_back(it != stash_.end() ? it->second
                                                        : Bytes(config_.block_payload, 0));
            } else {
                Bytes block(config_.block_payload, 0);
                std::copy(op.data->begin(), op.data->end(), block.begin());
                stash_[op.address] = std::move(block);
                live_[op.address] = true;
                results.emplace_back(std::nullopt);
            }
        }

        write_back = evict(buckets);
        store_->batch_put(write_back);
    } catch (...) {
        rollback();
        throw;
    }

    accesses_ += ops.size();
    max_stash_ = std::max(max_stash_, stash_.size());
    if (stash_.size() > config_.stash_limit) {
        failed_ = true;
        throw StashOverflow("stash holds " + std::to_string(stash_.size()) +
                            " blocks, limit " + std::to_string(config_.stash_limit));
    }
    return results;
}

std::string PathOram::check_invariant() {
    std::vector<std::uint64_t> keys(bucket_count());
    for (std::uint64_t b = 0; b < keys.size(); ++b) keys[b] = bucket_key(b);
    const auto values = store_->batch_get(keys);

    std::ostringstream problem;
    std::vector<bool> seen(config_.capacity, false);
    const auto slot = slot_size();
    Bytes plain;
    for (std::uint64_t b = 0; b < values.size(); ++b) {
        if (values[b].size() != slot * config_.bucket_size) {
            problem << "bucket " << b << " has wrong size";
            return problem.str();
        }
        for (std::size_t z = 0; z < config_.bucket_size; ++z) {
            try {
                cipher_.decrypt_serialized(ByteView(values[b]).subspan(z * slot, slot), plain);
            } catch (const Error& e) {
                problem << "bucket " << b << " slot " << z << ": " << e.what();
                return problem.str();
            }
            const auto address = get_u64_le(plain.data());
            if (address == kDummyAddress) continue;
            if (address >= config_.capacity || !live_[address]) {
                problem << "bucket " << b << " holds unexpected address " << address;
                return problem.str();
            }
            if (seen[address] || stash_.contains(address)) {
                problem << "address " << address << " stored more than once";
                return problem.str();
            }
            seen[address] = true;
            const auto d = depth_of(b);
            const auto ancestor = (std::uint64_t{position_[address]} >> (levels_ - d)) +
                                  ((std::uint64_t{1} << d) - 1);
            if (ancestor != b) {
                problem << "address " << address << " in bucket " << b
                        << " is off the path to leaf " << position_[address];
                return problem.str();
            }
        }
    }
    for (const auto& [address, _] : stash_) seen[address] = true;
    for (std::size_t a = 0; a < config_.capacity; ++a) {
        if (live_[a] && !seen[a]) {
            problem << "live address " << a << " is missing";
            return problem.str();
        }
    }
    return {};
}

} // namespace epsolute
