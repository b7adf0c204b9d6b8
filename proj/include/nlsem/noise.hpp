#pragma once

#include <cstdint>

namespace nlsem {

/// Counter-based Gaussian stream: every draw is a pure function of
/// (seed, path, step, component), so results do not depend on the order in
/// which paths are simulated and two policies run on the same seed see the
/// same Brownian increments.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed) noexcept : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Standard normal draw.
    double normal(std::uint64_t path, std::uint64_t step, std::uint32_t component) const noexcept;
    /// Uniform draw in (0, 1].
    double uniform(std::uint64_t path, std::uint64_t step, std::uint32_t component) const noexcept;

private:
    std::uint64_t seed_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derive an independent seed for a sub-computation.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept;

} // namespace nlsem
