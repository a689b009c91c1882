#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <utility>
#include <vector>

namespace airfl {

// Deterministic, platform-independent generator (xoshiro256++ seeded via
// splitmix64). std::normal_distribution is implementation-defined, so all
// draws go through the hand-rolled paths below to keep runs reproducible
// across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) { seed_state(seed); }

    // Derive an independent stream keyed by (seed, ids...). Used to give
    // every (repetition, round, stage) its own reproducible stream.
    Rng(uint64_t seed, std::initializer_list<uint64_t> ids) {
        uint64_t h = seed;
        for (uint64_t id : ids) h = splitmix(h ^ (id + 0x9e3779b97f4a7c15ULL));
        seed_state(h);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller (spare cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Circularly symmetric complex Gaussian with E|z|^2 = var
    /// (real and imaginary parts each carry var/2).
    std::complex<double> cnormal(double var) {
        const double s = std::sqrt(var / 2.0);
        return {s * normal(), s * normal()};
    }

    /// Unbiased integer in [0, n).
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix(uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    void seed_state(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : s_) {
            x = splitmix(x);
            s = x;
        }
        has_spare_ = false;
    }

    uint64_t s_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace airfl
