#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace homduet {

/// xoshiro256** generator with SplitMix64 seeding.
///
/// Satisfies UniformRandomBitGenerator so it plugs into <random>
/// distributions. Substreams are derived by hashing (seed, stream id), which
/// lets per-trial sampling be reproduced independently of scheduling order.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);

    static Rng substream(std::uint64_t seed, std::uint64_t stream_id);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    double normal();

private:
    std::array<std::uint64_t, 4> state_{};
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace homduet
