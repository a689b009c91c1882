#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "airfl/common.hpp"
#include "airfl/netchan.hpp"

namespace airfl {

// Nonnegative per-cell weights summing to one; selects the boundary point
// that the cooperative design steers to.
struct GapProfile {
    Vec kappa;

    void validate() const {
        double sum = 0.0;
        for (double k : kappa) {
            if (!(k >= 0.0)) throw validation_error("profile weights must be nonnegative");
            sum += k;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw validation_error("profile weights must sum to one");
    }
};

struct GapTerms {
    Vec e_dl;   // expected downlink error energy per cell, per dimension
    Vec e_ul;   // expected uplink error energy per cell, per dimension
    Vec kcount; // K_m
    Vec eta;    // per-cell learning rate
    double L = 1.0;
};

struct GapTuple {
    Vec delta;          // kappa_m * zeta
    double zeta = 0.0;  // achieved sum of per-cell gap budgets
};

// Expected downlink error energy per cell: interference plus noise, both
// divided by the home received power, scaled by the model spread. Cells
// with nu == 0 are silent and contribute no error; an active cell with zero
// power yields an +inf sentinel (the noise term is unbounded) so optimizers
// can reject such points uniformly.
inline Vec expected_dl_error(const ChannelSet& cs, const Vec& p_dl, const Vec& nu, const Vec& sigma_sq_dl) {
    const int M = cs.cells;
    Vec e(M, 0.0);
    for (int m = 0; m < M; ++m) {
        if (nu[m] == 0.0) continue;
        if (!(p_dl[m] > 0.0)) {
            e[m] = kInf;
            continue;
        }
        double total = 0.0;
        for (int k = 0; k < cs.devices; ++k) {
            if (cs.home(k) != m) continue;
            const std::complex<double> hk = cs.dl_home(k);
            const double hk2 = std::norm(hk);
            double interf = 0.0;
            for (int l = 0; l < M; ++l) {
                if (l == m || nu[l] == 0.0) continue;
                const double re = (std::conj(hk) * cs.dl(k, l)).real();
                interf += re * re * p_dl[l];
            }
            total += interf / (hk2 * hk2 * p_dl[m]) + sigma_sq_dl[k] / (2.0 * hk2 * p_dl[m]);
        }
        e[m] = nu[m] * nu[m] * total;
    }
    return e;
}

// Expected uplink error energy per cell: misalignment, cross-cell
// interference, and receiver noise under the given normalizing factors.
inline Vec expected_ul_error(const ChannelSet& cs, const Vec& p_ul, const Vec& c, const Vec& upsilon,
                             const Vec& sigma_sq_ul) {
    const int M = cs.cells;
    for (int m = 0; m < M; ++m)
        if (!(c[m] > 0.0)) throw std::invalid_argument("expected_ul_error: c must be positive");
    Vec e(M, 0.0);
    for (int m = 0; m < M; ++m) {
        double total = sigma_sq_ul[m] / (2.0 * c[m]);
        const double sqrt_c = std::sqrt(c[m]);
        for (int k = 0; k < cs.devices; ++k) {
            if (cs.home(k) == m) {
                const double a = std::abs(cs.ul_home(k)) * std::sqrt(p_ul[k]) / sqrt_c - upsilon[k];
                total += a * a;
            } else {
                const std::complex<double> hh = cs.ul(k, m) * std::conj(cs.ul_home(k));
                const double re = hh.real();
                total += re * re * p_ul[k] / (std::norm(cs.ul_home(k)) * c[m]);
            }
        }
        e[m] = total;
    }
    return e;
}

/// Per-cell error-induced gap: L^2 E_dl / K + L eta E_ul / K^2.
inline Vec gap_tuple(const GapTerms& t) {
    const size_t M = t.e_dl.size();
    Vec gap(M, 0.0);
    for (size_t m = 0; m < M; ++m) {
        if (!(t.L > 0.0) || !(t.eta[m] > 0.0))
            throw std::invalid_argument("gap_tuple: L and eta must be positive");
        gap[m] = t.L * t.L * t.e_dl[m] / t.kcount[m] +
                 t.L * t.eta[m] * t.e_ul[m] / (t.kcount[m] * t.kcount[m]);
    }
    return gap;
}

struct BoundCheck {
    double lhs = 0.0;           // time-average squared gradient norm
    double rhs = 0.0;           // initial-gap term + error-gap term
    double initial_term = 0.0;
    double error_term = 0.0;
    bool holds() const { return lhs <= rhs; }
};

// Evaluates both sides of the convergence bound for one cell from recorded
// traces: grad_sq[t] = |grad F(w^t)|^2 for t = 0..T-1, dl_energy[t] the sum
// over the cell's devices of the realized downlink error energy in round
// t+1, ul_energy[t] the realized uplink error energy.
inline BoundCheck convergence_bound(double loss0, double loss_star, const Vec& grad_sq,
                                    const Vec& dl_energy, const Vec& ul_energy, double L, double eta,
                                    double k_count) {
    if (!(eta > 0.0) || !(eta < 1.0 / L))
        throw std::invalid_argument("convergence_bound: requires 0 < eta < 1/L");
    const double T = static_cast<double>(grad_sq.size());
    if (dl_energy.size() != grad_sq.size() || ul_energy.size() != grad_sq.size())
        throw std::invalid_argument("convergence_bound: trace lengths differ");
    BoundCheck b;
    for (double g : grad_sq) b.lhs += g;
    b.lhs /= T;
    b.initial_term = 2.0 * (loss0 - loss_star) / (eta * T);
    double err = 0.0;
    for (size_t t = 0; t < grad_sq.size(); ++t)
        err += L * L / k_count * dl_energy[t] + L * eta / (k_count * k_count) * ul_energy[t];
    b.error_term = err / T;
    b.rhs = b.initial_term + b.error_term;
    return b;
}

/// Sweeps the profile list through the cooperative design and records the
/// resulting boundary tuples (delta_m = kappa_m * zeta).
inline std::vector<GapTuple> pareto_sweep(const std::vector<GapProfile>& profiles,
                                          const std::function<double(const GapProfile&)>& solve) {
    std::vector<GapTuple> out;
    out.reserve(profiles.size());
    for (const auto& prof : profiles) {
        prof.validate();
        GapTuple tup;
        tup.zeta = solve(prof);
        tup.delta.resize(prof.kappa.size());
        for (size_t m = 0; m < prof.kappa.size(); ++m) tup.delta[m] = prof.kappa[m] * tup.zeta;
        out.push_back(std::move(tup));
    }
    return out;
}

}  // namespace airfl
