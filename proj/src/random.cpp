#include "epsolute/random.hpp"

#include "epsolute/error.hpp"

namespace epsolute {

double Rng::uniform01() {
    constexpr double kScale = 1.0 / 9007199254740992.0; // 2^-53
    for (;;) {
        const auto bits = next() >> 11;
        if (bits != 0) {
            return static_cast<double>(bits) * kScale;
        }
    }
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) {
        throw ParameterError("Rng::below: bound must be positive");
    }
    // Lemire's nearly-divisionless method.
    auto x = next();
    auto m = static_cast<unsigned __int128>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        while (low < threshold) {
            x = next();
            m = static_cast<unsigned __int128>(x) * bound;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

void Rng::fill(std::span<std::uint8_t> out) {
    std::size_t i = 0;
    while (i < out.size()) {
        auto word = next();
        for (int b = 0; b < 8 && i < out.size(); ++b, ++i) {
            out[i] = static_cast<std::uint8_t>(word);
            word >>= 8;
        }
    }
}

std::unique_ptr<Rng> make_entropy_rng() {
    std::random_device device;
    const std::uint64_t seed = (static_cast<std::uint64_t>(device()) << 32) | device();
    return std::make_unique<SeededRng>(seed);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over the combined value
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace epsolute
