#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rwf {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor dimensions.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid module/run configuration (bad divisibility, out-of-range knobs, unknown keys).
struct ConfigError : Error {
    using Error::Error;
};

// Non-finite values where finiteness is contractual.
struct NumericError : Error {
    using Error::Error;
};

// Malformed checkpoint or image container.
struct FormatError : Error {
    using Error::Error;
};

// Dataset-level problems (orphan files, dimension mismatches).
struct DataError : Error {
    using Error::Error;
};

// Counter-based splitmix64 generator. Deterministic across platforms,
// cheap to seed, and replayable from (seed, counter).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // zero-mean normal with given sigma, resampled to |z| <= 2*sigma
    double trunc_normal(double sigma) {
        for (;;) {
            double z = normal();
            if (std::fabs(z) <= 2.0) return sigma * z;
        }
    }

private:
    std::uint64_t state_;
};

} // namespace rwf
