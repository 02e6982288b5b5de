#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>

namespace epsolute {

// Source of randomness for every protocol step. All randomness in the
// library flows through this interface so a run can be replayed from a seed
// and tests can substitute a stub.
//
// Satisfies UniformRandomBitGenerator, so it can drive std::shuffle and the
// <random> distributions directly.
class Rng {
  public:
    using result_type = std::uint64_t;

    virtual ~Rng() = default;

    virtual std::uint64_t next() = 0;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()() { return next(); }

    // Uniform double in the open interval (0, 1), 53 bits of precision.
    double uniform01();

    // Uniform integer in [0, bound). bound must be positive.
    std::uint64_t below(std::uint64_t bound);

    void fill(std::span<std::uint8_t> out);
};

// Deterministic generator; same seed, same stream.
class SeededRng final : public Rng {
  public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() override { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

// Seeds a SeededRng from the OS entropy pool.
std::unique_ptr<Rng> make_entropy_rng();

// Derives an independent child seed; used to give each worker its own stream
// so results do not depend on thread scheduling.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace epsolute
