#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace snp {

// Deterministic, platform-independent RNG (splitmix64 core). std::
// distributions are implementation-defined, which would break the
// bit-identical-across-machines guarantee, so sampling is done by hand here.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, bound) without modulo bias (rejection).
    std::uint64_t next_below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Standard normal via Box-Muller (one value per call; the pair's second
    // half is cached).
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // First n entries of a Fisher-Yates shuffle of 0..total-1.
    std::vector<std::size_t> sample_indices(std::size_t total, std::size_t n) {
        std::vector<std::size_t> idx(total);
        for (std::size_t i = 0; i < total; ++i) idx[i] = i;
        for (std::size_t i = 0; i < n && i + 1 < total; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(next_below(total - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(n);
        return idx;
    }

  private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stable per-stream seed derivation (FNV-1a over the tag, mixed with the
// base seed) so that e.g. each layer's random scores get an independent,
// reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h ^ (base + 0x9e3779b97f4a7c15ULL);
}

}  // namespace snp
