#pragma once

#include <algorithm>
#include <complex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "airfl/common.hpp"
#include "airfl/netchan.hpp"
#include "airfl/rng.hpp"

namespace airfl {

// Zero-mean unit-second-moment representation of a real vector. std == 0
// marks a degenerate (constant) vector; its symbols are empty and the
// constant travels through the error-free scalar side channel.
struct NormalizedVector {
    Vec s;
    double mean = 0.0;
    double std = 0.0;
};

constexpr double kDegenerateStd = 1e-15;

inline NormalizedVector try_normalize(const Vec& v) {
    if (v.size() < 2) throw std::invalid_argument("normalize: need at least two entries");
    NormalizedVector out;
    out.mean = mean_of(v);
    out.std = stddev_of(v, out.mean);
    if (out.std <= kDegenerateStd) {
        out.std = 0.0;
        return out;
    }
    out.s.resize(v.size());
    for (size_t d = 0; d < v.size(); ++d) out.s[d] = (v[d] - out.mean) / out.std;
    return out;
}

inline NormalizedVector normalize(const Vec& v) {
    NormalizedVector out = try_normalize(v);
    if (out.std == 0.0) throw degenerate_vector("normalize: vector has (near-)zero standard deviation");
    return out;
}

struct DownlinkPlan {
    Vec p;         // transmit power per BS, watts
    Vec sigma_sq;  // noise power per device, watts
};

struct UplinkPlan {
    Vec p;         // transmit power per device, watts
    Vec c;         // receive normalizing factor per BS
    Vec sigma_sq;  // noise power per BS, watts
};

// Per-round record of what the radio stages produced. The identities
// w_hat[k] = w[home(k)] + dl_err[k] and
// K_m * g_hat[m] = sum_k g[k] + ul_err[m] hold bit-exactly.
struct RoundTrace {
    std::vector<Vec> w_hat;   // per device
    std::vector<Vec> dl_err;  // per device
    std::vector<Vec> g_hat;   // per cell
    std::vector<Vec> ul_err;  // per cell
    std::vector<NormalizedVector> model_stats;  // per cell
    std::vector<NormalizedVector> grad_stats;   // per device
    Vec p_ul_effective;            // zeroed for silent transmitters
    std::vector<bool> ul_aircomp;  // per cell; false -> mean-only fallback
};

namespace detail {

inline void check_plan_dl(const ChannelSet& cs, const DownlinkPlan& plan) {
    if (static_cast<int>(plan.p.size()) != cs.cells || static_cast<int>(plan.sigma_sq.size()) != cs.devices)
        throw std::invalid_argument("downlink plan dimensions do not match channel set");
    for (double p : plan.p)
        if (!(p >= 0.0)) throw std::invalid_argument("downlink power must be nonnegative");
}

inline void check_plan_ul(const ChannelSet& cs, const UplinkPlan& plan) {
    if (static_cast<int>(plan.p.size()) != cs.devices || static_cast<int>(plan.c.size()) != cs.cells ||
        static_cast<int>(plan.sigma_sq.size()) != cs.cells)
        throw std::invalid_argument("uplink plan dimensions do not match channel set");
    for (double p : plan.p)
        if (!(p >= 0.0)) throw std::invalid_argument("uplink power must be nonnegative");
    for (double c : plan.c)
        if (!(c > 0.0)) throw std::invalid_argument("receive normalizing factor must be positive");
}

}  // namespace detail

// Downlink reception given explicit per-cell symbol streams. Cells with
// stats[m].std == 0 are silent: their devices recover mean*1 exactly and no
// interference leaves the cell. Interference uses the actual symbols of the
// other cells; tests substitute i.i.d. draws here to validate the closed
// forms. rng == nullptr disables receiver noise. Noise draws are consumed
// for every (device, dimension) pair regardless of plan, so paired schemes
// see identical noise.
inline RoundTrace downlink_from_symbols(const std::vector<NormalizedVector>& stats,
                                        const std::vector<Vec>& models, const ChannelSet& cs,
                                        const DownlinkPlan& plan, Rng* rng) {
    detail::check_plan_dl(cs, plan);
    const int M = cs.cells;
    const int K = cs.devices;
    size_t D = 0;
    for (const auto& w : models) D = std::max(D, w.size());
    for (const auto& w : models)
        if (w.size() != D) throw std::invalid_argument("downlink: model dimensions differ across cells");

    // A cell broadcasts only when it has spread to convey and power to spend;
    // a silenced BS (p == 0) leaves its devices with the scalar-channel mean.
    std::vector<bool> transmitting(M);
    for (int m = 0; m < M; ++m) transmitting[m] = stats[m].std > 0.0 && plan.p[m] > 0.0;

    RoundTrace tr;
    tr.model_stats = stats;
    tr.w_hat.assign(K, Vec(D, 0.0));
    tr.dl_err.assign(K, Vec(D, 0.0));
    for (int k = 0; k < K; ++k) {
        const int m = cs.home(k);
        const std::complex<double> hk = cs.dl_home(k);
        const bool listening = transmitting[m];
        std::complex<double> coef{0.0, 0.0};
        if (listening) coef = std::conj(hk) * stats[m].std / (std::norm(hk) * std::sqrt(plan.p[m]));
        for (size_t d = 0; d < D; ++d) {
            std::complex<double> z{0.0, 0.0};
            if (rng) z = rng->cnormal(plan.sigma_sq[k]);
            if (!listening) {
                if (stats[m].std == 0.0) {
                    tr.w_hat[k][d] = models[m][d];  // constant model; conveyed exactly
                } else {
                    const double e = stats[m].mean - models[m][d];
                    tr.dl_err[k][d] = e;
                    tr.w_hat[k][d] = models[m][d] + e;
                }
                continue;
            }
            std::complex<double> interf{0.0, 0.0};
            for (int l = 0; l < M; ++l) {
                if (l == m || !transmitting[l]) continue;
                interf += cs.dl(k, l) * std::sqrt(plan.p[l]) * stats[l].s[d];
            }
            const double e = (coef * (interf + z)).real();
            tr.dl_err[k][d] = e;
            tr.w_hat[k][d] = models[m][d] + e;
        }
    }
    return tr;
}

/// Broadcast of the per-cell models with inter-cell interference, Rician
/// fading, and receiver noise (rng == nullptr for the noise-free mode).
inline RoundTrace downlink_disseminate(const std::vector<Vec>& models, const ChannelSet& cs,
                                       const DownlinkPlan& plan, Rng* rng) {
    std::vector<NormalizedVector> stats;
    stats.reserve(models.size());
    for (const auto& w : models) stats.push_back(try_normalize(w));
    return downlink_from_symbols(stats, models, cs, plan, rng);
}

// Concurrent uplink transmission given explicit per-device symbol streams.
// Devices with stats[k].std == 0 transmit nothing (their power is treated
// as zero). A cell where no device effectively transmits skips the air
// stage entirely and reconstructs from the reported means.
inline RoundTrace uplink_from_symbols(const std::vector<NormalizedVector>& stats,
                                      const std::vector<Vec>& gradients, const ChannelSet& cs,
                                      const UplinkPlan& plan, Rng* rng) {
    detail::check_plan_ul(cs, plan);
    const int M = cs.cells;
    const int K = cs.devices;
    size_t D = 0;
    for (const auto& g : gradients) D = std::max(D, g.size());
    for (const auto& g : gradients)
        if (g.size() != D) throw std::invalid_argument("uplink: gradient dimensions differ across devices");

    RoundTrace tr;
    tr.grad_stats = stats;
    tr.p_ul_effective.assign(K, 0.0);
    for (int k = 0; k < K; ++k)
        if (stats[k].std > 0.0) tr.p_ul_effective[k] = plan.p[k];

    tr.ul_aircomp.assign(M, false);
    for (int k = 0; k < K; ++k)
        if (tr.p_ul_effective[k] > 0.0 && stats[k].std > 0.0) tr.ul_aircomp[cs.home(k)] = true;

    tr.g_hat.assign(M, Vec(D, 0.0));
    tr.ul_err.assign(M, Vec(D, 0.0));
    for (int m = 0; m < M; ++m) {
        const auto members = [&] {
            std::vector<int> v;
            for (int k = 0; k < K; ++k)
                if (cs.home(k) == m) v.push_back(k);
            return v;
        }();
        const double km = static_cast<double>(members.size());
        const double sqrt_c = std::sqrt(plan.c[m]);

        // Transmitting devices seen by BS m: own cell through the aligned
        // magnitude, other cells through the real part of the rotated cross
        // gain. Coefficients are real because symbols are real and the
        // receiver takes Re{.}.
        std::vector<std::pair<int, double>> taps;  // (device, coefficient on its symbol)
        if (tr.ul_aircomp[m]) {
            for (int k = 0; k < K; ++k) {
                if (!(tr.p_ul_effective[k] > 0.0) || stats[k].std == 0.0) continue;
                const double amp = std::sqrt(tr.p_ul_effective[k]);
                if (cs.home(k) == m) {
                    taps.emplace_back(k, std::abs(cs.ul_home(k)) * amp / sqrt_c - stats[k].std);
                } else {
                    const std::complex<double> hh = cs.ul(k, m) * std::conj(cs.ul_home(k));
                    taps.emplace_back(k, hh.real() / std::abs(cs.ul_home(k)) * amp / sqrt_c);
                }
            }
        }
        for (size_t d = 0; d < D; ++d) {
            std::complex<double> z{0.0, 0.0};
            if (rng) z = rng->cnormal(plan.sigma_sq[m]);
            double e = 0.0;
            if (tr.ul_aircomp[m]) {
                for (const auto& [k, coef] : taps) e += coef * stats[k].s[d];
                e += z.real() / sqrt_c;
            } else {
                for (int k : members)
                    if (stats[k].std > 0.0) e -= stats[k].std * stats[k].s[d];
            }
            tr.ul_err[m][d] = e;
            double sum_g = 0.0;
            for (int k : members) sum_g += gradients[k][d];
            tr.g_hat[m][d] = (sum_g + e) / km;
        }
    }
    return tr;
}

/// Over-the-air aggregation of the per-device gradients at each home BS.
inline RoundTrace uplink_aggregate(const std::vector<Vec>& gradients, const ChannelSet& cs,
                                   const UplinkPlan& plan, Rng* rng) {
    std::vector<NormalizedVector> stats;
    stats.reserve(gradients.size());
    for (const auto& g : gradients) stats.push_back(try_normalize(g));
    return uplink_from_symbols(stats, gradients, cs, plan, rng);
}

inline Vec global_update(const Vec& w, const Vec& g_hat, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("global_update: learning rate must be positive");
    if (w.size() != g_hat.size()) throw std::invalid_argument("global_update: dimension mismatch");
    Vec out = w;
    axpy(-eta, g_hat, out);
    return out;
}

}  // namespace airfl
