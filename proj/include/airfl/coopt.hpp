#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "airfl/common.hpp"
#include "airfl/conicfeas.hpp"
#include "airfl/gapmodel.hpp"
#include "airfl/netchan.hpp"

namespace airfl {

struct PowerPlan {
    Vec p_dl;  // watts per BS
    Vec p_ul;  // watts per device
    Vec c;     // per BS
    Vec p_dl_budget;
    Vec p_ul_budget;
};

inline int K_total(const ChannelSet& cs) { return cs.devices; }

struct DownlinkDesign {
    double zeta = 0.0;  // solver scale; multiply by L^2 for the gap budget
    Vec p;
    int iterations = 0;
};

struct UplinkDesign {
    double zeta = 0.0;  // solver scale; multiply by L for the gap budget
    Vec p;
    Vec c;
    int iterations = 0;
};

namespace detail {

// Interference and noise constants of the downlink constraints. Cells with
// nu == 0 broadcast nothing: they get no cone and inject no interference.
struct DownlinkConstants {
    std::vector<bool> active;
    Vec noise_term;                  // sum_k sigma_k^2 / (2 |h_k|^2)
    std::vector<Vec> cross_gain_sq;  // [m][l]: sum_k Re{h_k^* h_{l,k}}^2 / |h_k|^4
};

inline DownlinkConstants downlink_constants(const ChannelSet& cs, const Vec& sigma_sq_dl, const Vec& nu) {
    const int M = cs.cells;
    DownlinkConstants dc;
    dc.active.resize(M);
    dc.noise_term.assign(M, 0.0);
    dc.cross_gain_sq.assign(M, Vec(M, 0.0));
    for (int m = 0; m < M; ++m) dc.active[m] = nu[m] > 0.0;
    for (int k = 0; k < cs.devices; ++k) {
        const int m = cs.home(k);
        if (!dc.active[m]) continue;
        const std::complex<double> hk = cs.dl_home(k);
        const double hk2 = std::norm(hk);
        dc.noise_term[m] += sigma_sq_dl[k] / (2.0 * hk2);
        for (int l = 0; l < M; ++l) {
            if (l == m || !dc.active[l]) continue;
            const double re = (std::conj(hk) * cs.dl(k, l)).real();
            dc.cross_gain_sq[m][l] += re * re / (hk2 * hk2);
        }
    }
    return dc;
}

}  // namespace detail

// SOC form of the downlink feasibility subproblem at a given zeta, over
// q_m = sqrt(p_m) with box [0, sqrt(P_m)].
inline SocFeasibilityProblem assemble_downlink(const ChannelSet& cs, const Vec& sigma_sq_dl, const Vec& nu,
                                               const Vec& kappa, double zeta, const Vec& p_budget) {
    const int M = cs.cells;
    for (int m = 0; m < M; ++m)
        if (nu[m] < 0.0) throw std::invalid_argument("assemble_downlink: nu must be nonnegative");
    if (!(zeta >= 0.0)) throw std::invalid_argument("assemble_downlink: zeta must be nonnegative");
    const auto dc = detail::downlink_constants(cs, sigma_sq_dl, nu);

    SocFeasibilityProblem prob;
    prob.n = M;
    prob.lower = Eigen::VectorXd::Zero(M);
    prob.upper = Eigen::VectorXd::Zero(M);
    for (int m = 0; m < M; ++m)
        if (dc.active[m]) prob.upper[m] = std::sqrt(p_budget[m]);

    Vec kcount(M, 0.0);
    for (int k = 0; k < K_total(cs); ++k) kcount[cs.home(k)] += 1.0;

    for (int m = 0; m < M; ++m) {
        if (!dc.active[m]) continue;
        SocCone cone;
        cone.A = Eigen::MatrixXd::Zero(M + 1, M);
        cone.b = Eigen::VectorXd::Zero(M + 1);
        cone.b[0] = std::sqrt(dc.noise_term[m]);
        for (int l = 0; l < M; ++l)
            if (l != m && dc.active[l]) cone.A(l + 1, l) = std::sqrt(dc.cross_gain_sq[m][l]);
        cone.c = Eigen::VectorXd::Zero(M);
        const double kappa_dl = kappa[m] * kcount[m];
        cone.c[m] = std::sqrt(kappa_dl * zeta / (nu[m] * nu[m]));
        cone.d = 0.0;
        prob.cones.push_back(std::move(cone));
    }
    return prob;
}

/// Bisection over the downlink gap budget; returns the smallest budget for
/// which the cooperative power allocation is feasible, plus that allocation.
inline DownlinkDesign optimize_downlink(const ChannelSet& cs, const Vec& sigma_sq_dl, const Vec& nu,
                                        const Vec& kappa, const Vec& p_budget, double eps, double tol) {
    const int M = cs.cells;
    DownlinkDesign out;
    out.p.assign(M, 0.0);
    bool any_active = false;
    for (int m = 0; m < M; ++m) any_active = any_active || nu[m] > 0.0;
    if (!any_active) return out;

    auto feas = [&](double zeta) {
        return check_feasible(assemble_downlink(cs, sigma_sq_dl, nu, kappa, zeta, p_budget), tol);
    };
    const BisectionResult bis = bisect(feas, 0.0, 1.0, eps);
    out.zeta = bis.zeta_star;
    out.iterations = bis.iterations;
    for (int m = 0; m < M; ++m)
        if (nu[m] > 0.0) out.p[m] = bis.witness[m] * bis.witness[m];
    return out;
}

/// Closed-form optimal receive normalizing factor per cell at fixed uplink
/// powers. Cells where no device effectively transmits get the neutral 1.0
/// (the aggregation falls back to the scalar side channel there).
inline Vec optimal_normalizer(const ChannelSet& cs, const Vec& p_ul, const Vec& upsilon, const Vec& sigma_sq_ul) {
    const int M = cs.cells;
    Vec c(M, 1.0);
    for (int m = 0; m < M; ++m) {
        double num = sigma_sq_ul[m] / 2.0;
        double den = 0.0;
        for (int k = 0; k < cs.devices; ++k) {
            if (cs.home(k) == m) {
                const double habs = std::abs(cs.ul_home(k));
                num += habs * habs * p_ul[k];
                den += habs * std::sqrt(p_ul[k]) * upsilon[k];
            } else {
                const std::complex<double> hh = cs.ul(k, m) * std::conj(cs.ul_home(k));
                num += hh.real() * hh.real() * p_ul[k] / std::norm(cs.ul_home(k));
            }
        }
        if (den > 0.0) c[m] = (num / den) * (num / den);
    }
    return c;
}

namespace detail {

struct UplinkConstants {
    std::vector<bool> active;  // cells with some transmitting device
    Vec sum_ups_sq;            // sum of upsilon_k^2 per cell
    Vec kappa_ul;              // kappa_m K_m^2 / eta_m
};

inline UplinkConstants uplink_constants(const ChannelSet& cs, const Vec& upsilon, const Vec& kappa,
                                        const Vec& eta) {
    const int M = cs.cells;
    UplinkConstants uc;
    uc.sum_ups_sq.assign(M, 0.0);
    uc.kappa_ul.assign(M, 0.0);
    uc.active.resize(M);
    Vec kcount(M, 0.0);
    for (int k = 0; k < cs.devices; ++k) {
        uc.sum_ups_sq[cs.home(k)] += upsilon[k] * upsilon[k];
        kcount[cs.home(k)] += 1.0;
    }
    for (int m = 0; m < M; ++m) {
        if (!(eta[m] > 0.0)) throw std::invalid_argument("uplink: eta must be positive");
        uc.kappa_ul[m] = kappa[m] * kcount[m] * kcount[m] / eta[m];
        uc.active[m] = uc.sum_ups_sq[m] > 0.0;
    }
    return uc;
}

}  // namespace detail

// SOC form of the uplink feasibility subproblem at a given zeta, over
// q_k = sqrt(p_k). Cells whose misalignment margin is exhausted (Xi <= 0)
// have a vacuous constraint and contribute no cone; devices with zero
// gradient spread are pinned to zero power.
inline SocFeasibilityProblem assemble_uplink(const ChannelSet& cs, const Vec& sigma_sq_ul, const Vec& upsilon,
                                             const Vec& kappa, const Vec& eta, double zeta, const Vec& p_budget) {
    const int M = cs.cells;
    const int K = cs.devices;
    if (!(zeta >= 0.0)) throw std::invalid_argument("assemble_uplink: zeta must be nonnegative");
    const auto uc = detail::uplink_constants(cs, upsilon, kappa, eta);

    SocFeasibilityProblem prob;
    prob.n = K;
    prob.lower = Eigen::VectorXd::Zero(K);
    prob.upper = Eigen::VectorXd::Zero(K);
    for (int k = 0; k < K; ++k)
        if (upsilon[k] > 0.0) prob.upper[k] = std::sqrt(p_budget[k]);

    for (int m = 0; m < M; ++m) {
        if (!uc.active[m]) continue;
        const double margin = uc.sum_ups_sq[m] - uc.kappa_ul[m] * zeta;
        if (margin <= 0.0) continue;
        const double sq_margin = std::sqrt(margin);
        SocCone cone;
        cone.A = Eigen::MatrixXd::Zero(K + 1, K);
        cone.b = Eigen::VectorXd::Zero(K + 1);
        cone.b[0] = sq_margin * std::sqrt(sigma_sq_ul[m] / 2.0);
        cone.c = Eigen::VectorXd::Zero(K);
        for (int k = 0; k < K; ++k) {
            if (!(upsilon[k] > 0.0)) continue;
            if (cs.home(k) == m) {
                const double habs = std::abs(cs.ul_home(k));
                cone.A(k + 1, k) = sq_margin * habs;
                cone.c[k] = habs * upsilon[k];
            } else {
                const std::complex<double> hh = cs.ul(k, m) * std::conj(cs.ul_home(k));
                cone.A(k + 1, k) = sq_margin * hh.real() / std::abs(cs.ul_home(k));
            }
        }
        cone.d = 0.0;
        prob.cones.push_back(std::move(cone));
    }
    return prob;
}

/// Bisection over the uplink gap budget starting from the misalignment
/// ceiling; returns powers and the matching receive normalizing factors.
inline UplinkDesign optimize_uplink(const ChannelSet& cs, const Vec& sigma_sq_ul, const Vec& upsilon,
                                    const Vec& kappa, const Vec& eta, const Vec& p_budget, double eps,
                                    double tol) {
    const int M = cs.cells;
    const int K = cs.devices;
    const auto uc = detail::uplink_constants(cs, upsilon, kappa, eta);

    UplinkDesign out;
    out.p.assign(K, 0.0);
    out.c.assign(M, 1.0);
    double zeta_up = kInf;
    for (int m = 0; m < M; ++m)
        if (uc.active[m]) zeta_up = std::min(zeta_up, uc.sum_ups_sq[m] / uc.kappa_ul[m]);
    if (!std::isfinite(zeta_up)) return out;  // nothing to transmit anywhere

    auto feas = [&](double zeta) {
        return check_feasible(assemble_uplink(cs, sigma_sq_ul, upsilon, kappa, eta, zeta, p_budget), tol);
    };
    const BisectionResult bis = bisect(feas, 0.0, zeta_up, eps);
    out.zeta = bis.zeta_star;
    out.iterations = bis.iterations;
    for (int k = 0; k < K; ++k)
        if (upsilon[k] > 0.0) out.p[k] = bis.witness[k] * bis.witness[k];
    out.c = optimal_normalizer(cs, out.p, upsilon, sigma_sq_ul);
    return out;
}

namespace detail {

inline ChannelSet slice_cell(const ChannelSet& cs, int m, const std::vector<int>& devices) {
    ChannelSet sub;
    sub.cells = 1;
    sub.devices = static_cast<int>(devices.size());
    sub.association.assign(devices.size(), 0);
    sub.downlink.resize(devices.size());
    sub.uplink.resize(devices.size());
    for (size_t i = 0; i < devices.size(); ++i) {
        sub.downlink[i] = cs.dl(devices[i], m);
        sub.uplink[i] = cs.ul(devices[i], m);
    }
    return sub;
}

}  // namespace detail

struct SingleCellUplink {
    Vec p;  // aligned with the cell's device order
    double c = 1.0;
    double zeta = 0.0;
};

/// Worst-case interference seen by BS m when every foreign device transmits
/// at its budget with aligned phase.
inline double worst_case_interference(const ChannelSet& cs, int m, const Vec& p_ul_budget) {
    double w = 0.0;
    for (int k = 0; k < cs.devices; ++k) {
        if (cs.home(k) == m) continue;
        const std::complex<double> hh = cs.ul(k, m) * std::conj(cs.ul_home(k));
        w += hh.real() * hh.real() * p_ul_budget[k] / std::norm(cs.ul_home(k));
    }
    return w;
}

namespace detail {

inline SingleCellUplink single_cell_uplink(const ChannelSet& cs, int m, const Vec& upsilon, double sigma_sq,
                                           const Vec& p_budget, double eta_m, double eps, double tol) {
    std::vector<int> devices;
    for (int k = 0; k < cs.devices; ++k)
        if (cs.home(k) == m) devices.push_back(k);
    const ChannelSet sub = slice_cell(cs, m, devices);
    Vec ups(devices.size()), budget(devices.size());
    for (size_t i = 0; i < devices.size(); ++i) {
        ups[i] = upsilon[devices[i]];
        budget[i] = p_budget[devices[i]];
    }
    const UplinkDesign d = optimize_uplink(sub, Vec{sigma_sq}, ups, Vec{1.0}, Vec{eta_m}, budget, eps, tol);
    SingleCellUplink out;
    out.p = d.p;
    out.c = d.c[0];
    out.zeta = d.zeta;
    return out;
}

}  // namespace detail

/// Per-cell uplink design that pretends no other cell exists.
inline SingleCellUplink uplink_ignore_interference(const ChannelSet& cs, int m, const Vec& upsilon,
                                                   double sigma_sq, const Vec& p_budget, double eta_m,
                                                   double eps, double tol) {
    return detail::single_cell_uplink(cs, m, upsilon, sigma_sq, p_budget, eta_m, eps, tol);
}

/// Per-cell uplink design under the worst-case interference level, folded
/// into the effective noise floor.
inline SingleCellUplink uplink_max_interference(const ChannelSet& cs, int m, const Vec& upsilon,
                                                double sigma_sq, const Vec& p_budget, double eta_m,
                                                double eps, double tol) {
    const double w = worst_case_interference(cs, m, p_budget);
    return detail::single_cell_uplink(cs, m, upsilon, sigma_sq + 2.0 * w, p_budget, eta_m, eps, tol);
}

/// Full-power baseline: powers pinned at the budgets, receive normalizing
/// factors chosen optimally for those powers.
inline PowerPlan baseline_full_power(const ChannelSet& cs, const Vec& p_dl_budget, const Vec& p_ul_budget,
                                     const Vec& upsilon, const Vec& sigma_sq_ul) {
    PowerPlan plan;
    plan.p_dl = p_dl_budget;
    plan.p_dl_budget = p_dl_budget;
    plan.p_ul_budget = p_ul_budget;
    plan.p_ul.assign(p_ul_budget.size(), 0.0);
    for (size_t k = 0; k < p_ul_budget.size(); ++k)
        if (upsilon[k] > 0.0) plan.p_ul[k] = p_ul_budget[k];
    plan.c = optimal_normalizer(cs, plan.p_ul, upsilon, sigma_sq_ul);
    return plan;
}

}  // namespace airfl
