#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace memvae {

// Counter-based pseudo-random generator (splitmix64 finalizer over an
// incrementing counter). Every sampler takes an explicit Rng; there is no
// hidden global state, so runs are reproducible from the config seed and
// independent workers can use forked streams.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ull))) {}

    std::uint64_t next_u64() {
        return mix(key_ + 0x9E3779B97F4A7C15ull * ++counter_);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two draws.
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    std::vector<double> normal_vec(std::size_t n) {
        std::vector<double> v(n);
        for (auto& x : v) x = normal();
        return v;
    }

    // Uniform integer in [0, n). n must be >= 1.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Inverse-CDF draw from a probability vector using a single uniform.
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform01();
        double cdf = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            cdf += probs[i];
            if (u < cdf) return i;
        }
        return probs.empty() ? 0 : probs.size() - 1;
    }

    // Derived independent stream; deterministic given (this rng's key, id).
    Rng fork(std::uint64_t stream_id) const { return Rng(key_, stream_id + 1); }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace memvae
