#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cropnet {

// splitmix64 finalizer. Bijective on u64, good avalanche.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// FNV-1a, used to key RNG streams off sample id strings.
inline constexpr std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Counter-based generator: the key names the stream, the counter walks it.
// Any (seed, id, epoch, tag) tuple maps to an independent stream, so draws
// are reproducible no matter which thread or in which order samples are
// processed.
class Rng {
public:
    explicit Rng(std::uint64_t key) : key_(key) {}

    static Rng stream(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t k = mix64(seed + 0x9E3779B97F4A7C15ULL);
        k = mix64(k ^ a);
        k = mix64(k ^ b);
        k = mix64(k ^ c);
        return Rng(k);
    }

    std::uint64_t next_u64() {
        counter_ += 0x9E3779B97F4A7C15ULL;
        return mix64(key_ ^ counter_);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Inclusive bounds. Modulo bias is ~range/2^64, irrelevant here.
    int uniform_int(int lo, int hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; the spare value is cached so consecutive draws stay cheap.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.28318530717958647692 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace cropnet
