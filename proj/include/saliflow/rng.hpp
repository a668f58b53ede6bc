#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

namespace saliflow {

// Deterministic, platform-independent random primitives. Everything that
// needs randomness in the toolkit derives from these so that results are
// reproducible across machines and independent of execution order.

// SplitMix64 step.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Stateless mix of two words; used for counter-based draws where a value
// must be a pure function of (seed, index).
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2));
    return splitmix64(s);
}

// FNV-1a over a string, for deriving per-sample seeds from ids.
inline std::uint64_t hash_string(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

// Per-sample seed: hash(global_seed, source_id). Parallel scheduling over
// samples can never change outputs because each sample's stream depends
// only on this value.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view id) {
    return mix64(global_seed, hash_string(id));
}

// Small self-contained generator (SplitMix64 stream + Box-Muller normals).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller.
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = next_double();
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace saliflow
