#include "nlsem/noise.hpp"

#include <cmath>
#include <numbers>

namespace nlsem {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

double to_unit(std::uint64_t h) noexcept {
    // 53 random bits mapped to (0, 1]
    return (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
}

std::uint64_t key(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                  std::uint32_t component) noexcept {
    std::uint64_t h = mix64(seed + kGolden);
    h = mix64(h ^ (path * kGolden + 0x632BE59BD9B4E019ULL));
    h = mix64(h ^ (step * 0xD1B54A32D192ED03ULL + component));
    return h;
}

} // namespace

std::uint64_t mix64(std::uint64_t x) noexcept {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) noexcept {
    return mix64(mix64(seed) ^ (salt * 0xA24BAED4963EE407ULL + 1));
}

double NoiseStream::uniform(std::uint64_t path, std::uint64_t step,
                            std::uint32_t component) const noexcept {
    return to_unit(key(seed_, path, step, component));
}

double NoiseStream::normal(std::uint64_t path, std::uint64_t step,
                           std::uint32_t component) const noexcept {
    const std::uint64_t h = key(seed_, path, step, component);
    const double u1 = to_unit(h);
    const double u2 = to_unit(mix64(h));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace nlsem
