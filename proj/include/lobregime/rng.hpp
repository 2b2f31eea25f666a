#pragma once

#include <cstdint>
#include <random>

namespace lobregime {

// Seedable generator with bit-identical output across platforms.
// std::mt19937_64 is fully specified by the standard; the distributions are
// implemented here because std::normal_distribution is not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 bits of mantissa.
    double uniform();

    // Standard normal, Marsaglia polar method.
    double normal();

    // Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// SplitMix64 finalizer; maps (base seed, stream index) to an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace lobregime
