#pragma once

#include <cstdint>
#include <random>

namespace diffctl {

/// Seeded stream with a platform-independent uniform conversion.
///
/// std::uniform_real_distribution is implementation-defined, so uniforms are
/// built directly from the top 53 bits of the engine output. Streams for
/// independent work items come from `Rng::derive`, which mixes the parent
/// seed and the item index through std::seed_seq.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    /// Independent child stream for work item `index` (trajectory, sample, world).
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                          0x9e3779b9u};
        std::uint64_t words[2];
        std::uint32_t out[4];
        seq.generate(out, out + 4);
        words[0] = (std::uint64_t(out[0]) << 32) | out[1];
        words[1] = (std::uint64_t(out[2]) << 32) | out[3];
        return Rng(words[0] ^ (words[1] * 0xbf58476d1ce4e5b9ull));
    }

    /// Uniform in [0, 1).
    double canonical() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

    bool coin(double p = 0.5) { return canonical() < p; }

    std::uint64_t next_u64() { return engine_(); }

    std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

} // namespace diffctl
