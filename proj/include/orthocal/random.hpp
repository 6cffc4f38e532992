#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace orthocal {

/**
 * Seeded stream of standard normal draws.
 *
 * std::mt19937_64 is fully specified by the standard; the Gaussian transform
 * is done here (Box-Muller, both outputs used) because std::normal_distribution
 * differs between standard libraries.  Identical seeds give identical
 * sequences on every platform.
 *
 * Not thread-safe; give each worker its own stream.
 */
class GaussianStream {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64/box-muller";

    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    /// Stream for substream `index` of `seed`; independent of the base stream.
    static GaussianStream substream(std::uint64_t seed, std::uint64_t index) {
        return GaussianStream(splitmix64(seed + 0x9e3779b97f4a7c15ULL * (index + 1)));
    }

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1], u2 in [0, 1)
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    static constexpr std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace orthocal
