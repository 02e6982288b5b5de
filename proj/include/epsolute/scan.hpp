#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "epsolute/crypto.hpp"
#include "epsolute/database.hpp"
#include "epsolute/engine.hpp"
#include "epsolute/storage.hpp"

namespace epsolute {

struct ScanConfig {
    StorageSpec storage;
    // Records are spread round-robin over this many stores, one per worker.
    std::size_t workers = 4;
    // Keys per batch_get.
    std::size_t batch = 1024;
    bool clear_storage = false;
    Execution execution = Execution::parallel;
    std::optional<std::uint64_t> seed;
    std::size_t key_bits = 128;
};

// Baseline that downloads, decrypts and filters every record on every query.
class LinearScan {
  public:
    LinearScan(const std::vector<Record>& records, ScanConfig config);
    ~LinearScan();
    LinearScan(LinearScan&&) noexcept;
    LinearScan& operator=(LinearScan&&) noexcept;

    QueryResult query(const Query& q);

    std::size_t record_count() const { return count_; }
    std::size_t ciphertext_size() const { return block_payload_ + kCiphertextOverhead; }
    std::uint64_t server_bytes() const { return count_ * ciphertext_size(); }
    void set_execution(Execution e) { config_.execution = e; }

  private:
    struct Worker;

    ScanConfig config_;
    std::size_t count_ = 0;
    std::size_t key_count_ = 0;
    std::size_t record_size_ = 0;
    std::size_t block_payload_ = 0;
    std::vector<std::unique_ptr<Worker>> workers_;
};

} // namespace epsolute
