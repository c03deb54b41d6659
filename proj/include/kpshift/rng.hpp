#pragma once

#include <cstdint>
#include <random>

namespace kpshift {

// Seeded generator with a fixed bit-to-double mapping. mt19937_64 output
// is specified by the standard, so the stream is identical on every
// platform; std::uniform_real_distribution is not, hence the manual map.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t bits() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // {0, 1, ..., n-1} by rejection, bias-free
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace kpshift
