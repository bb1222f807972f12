#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sesm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic random source. mt19937_64 is fully specified by the
// standard; the distributions are hand-rolled because std:: distribution
// output is implementation-defined and would break bit-reproducibility
// across toolchains and cross-language ports.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Box-Muller (no cached spare: two uniforms per call)
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log1p(-u1)) *
               std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    // integer in [0, n), n >= 1
    std::size_t below(std::size_t n) {
        auto v = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // Independent deterministic substream for a tagged purpose.
    Rng child(std::uint64_t tag) const {
        return Rng(splitmix64(seed_ ^ splitmix64(tag)));
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

} // namespace sesm
