#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace asdn {

/// SplitMix64 generator. The output sequence is fully specified, so seeded
/// splits and synthetic data are reproducible across platforms and
/// implementations (std:: distributions are not).
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    /// Uniform integer in [0, bound). bound must be nonzero.
    std::uint64_t below(std::uint64_t bound);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal draw (Box-Muller, one value per call).
    double normal();

private:
    std::uint64_t state_;
};

/// In-place Fisher-Yates shuffle: for i = n-1 .. 1 swap items[i] with
/// items[below(i + 1)].
void shuffle(std::span<std::size_t> items, SplitMix64& rng);

}  // namespace asdn
