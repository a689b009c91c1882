#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace airfl {

using Vec = std::vector<double>;
using CVec = std::vector<std::complex<double>>;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct degenerate_vector : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct no_feasible_point : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct validation_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// x dBm -> watts.
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

/// Rician factor in dB -> linear.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

inline double mean_of(const Vec& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Population standard deviation (1/D normalization).
inline double stddev_of(const Vec& v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size()));
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2sq(const Vec& v) { return dot(v, v); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// FNV-1a over raw double bits; used for draw digests.
inline uint64_t fnv1a_init() { return 1469598103934665603ULL; }

inline void fnv1a_add(uint64_t& h, double x) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(x));
    std::memcpy(&bits, &x, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffULL;
        h *= 1099511628211ULL;
    }
}

}  // namespace airfl
