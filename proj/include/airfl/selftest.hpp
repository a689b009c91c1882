#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "airfl/airphy.hpp"
#include "airfl/common.hpp"
#include "airfl/conicfeas.hpp"
#include "airfl/coopt.hpp"
#include "airfl/fedlearn.hpp"
#include "airfl/gapmodel.hpp"
#include "airfl/netchan.hpp"
#include "airfl/rng.hpp"

namespace airfl {
namespace selftest_detail {

struct RandomWorld {
    ChannelSet cs;
    Vec nu, upsilon;
    Vec sigma_sq_dl, sigma_sq_ul;
    Vec p_dl, p_ul, c;
};

inline RandomWorld random_two_cell(Rng& rng) {
    GeometryConfig geo;
    geo.bs_positions = {{0.0, 0.0}, {40.0, 0.0}};
    geo.devices_per_cell = {2, 3};
    geo.radius_min = 1.0;
    geo.radius_max = 20.0;
    const Topology topo = sample_topology(geo, rng);
    ChannelParams chp;
    RandomWorld w;
    w.cs = realize_round(topo, chp, rng);
    const int K = w.cs.devices;
    const int M = w.cs.cells;
    w.nu = {rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)};
    w.upsilon.resize(K);
    for (double& u : w.upsilon) u = rng.uniform(0.1, 1.0);
    w.sigma_sq_dl.assign(K, 1e-8);
    w.sigma_sq_ul.assign(M, 1e-8);
    w.p_dl = {rng.uniform(0.5, 10.0), rng.uniform(0.5, 10.0)};
    w.p_ul.resize(K);
    for (double& p : w.p_ul) p = rng.uniform(0.01, 1.0);
    w.c = optimal_normalizer(w.cs, w.p_ul, w.upsilon, w.sigma_sq_ul);
    return w;
}

// Monte Carlo estimate of the per-cell error energies with i.i.d. standard
// normal symbols, through the same receive pipeline the simulator uses.
inline std::pair<Vec, Vec> mc_error_energies(const RandomWorld& w, int draws, Rng& rng) {
    const int M = w.cs.cells;
    const int K = w.cs.devices;
    const size_t D = static_cast<size_t>(draws);

    std::vector<NormalizedVector> mstats(M);
    std::vector<Vec> models(M, Vec(D, 0.0));
    for (int m = 0; m < M; ++m) {
        mstats[m].std = w.nu[m];
        mstats[m].mean = 0.0;
        mstats[m].s.resize(D);
        for (size_t d = 0; d < D; ++d) mstats[m].s[d] = rng.normal();
        for (size_t d = 0; d < D; ++d) models[m][d] = w.nu[m] * mstats[m].s[d];
    }
    DownlinkPlan dplan{w.p_dl, w.sigma_sq_dl};
    const RoundTrace dtr = downlink_from_symbols(mstats, models, w.cs, dplan, &rng);
    Vec e_dl(M, 0.0);
    for (int k = 0; k < K; ++k) e_dl[w.cs.home(k)] += l2sq(dtr.dl_err[k]) / static_cast<double>(D);

    std::vector<NormalizedVector> gstats(K);
    std::vector<Vec> grads(K, Vec(D, 0.0));
    for (int k = 0; k < K; ++k) {
        gstats[k].std = w.upsilon[k];
        gstats[k].mean = 0.0;
        gstats[k].s.resize(D);
        for (size_t d = 0; d < D; ++d) gstats[k].s[d] = rng.normal();
        for (size_t d = 0; d < D; ++d) grads[k][d] = w.upsilon[k] * gstats[k].s[d];
    }
    UplinkPlan uplan{w.p_ul, w.c, w.sigma_sq_ul};
    const RoundTrace utr = uplink_from_symbols(gstats, grads, w.cs, uplan, &rng);
    Vec e_ul(M, 0.0);
    for (int m = 0; m < M; ++m) e_ul[m] = l2sq(utr.ul_err[m]) / static_cast<double>(D);
    return {e_dl, e_ul};
}

inline SocFeasibilityProblem random_soc_2d(Rng& rng) {
    SocFeasibilityProblem prob;
    prob.n = 2;
    prob.lower = Eigen::Vector2d(0.0, 0.0);
    prob.upper = Eigen::Vector2d(1.0, 1.0);
    const int cones = 1 + static_cast<int>(rng.below(3));
    for (int j = 0; j < cones; ++j) {
        SocCone cone;
        const int rows = 2 + static_cast<int>(rng.below(2));
        cone.A.resize(rows, 2);
        cone.b.resize(rows);
        for (int r = 0; r < rows; ++r) {
            cone.A(r, 0) = rng.uniform(-1.0, 1.0);
            cone.A(r, 1) = rng.uniform(-1.0, 1.0);
            cone.b[r] = rng.uniform(-0.5, 0.5);
        }
        cone.c = Eigen::Vector2d(rng.uniform(-0.5, 1.5), rng.uniform(-0.5, 1.5));
        cone.d = rng.uniform(-0.3, 1.0);
        prob.cones.push_back(std::move(cone));
    }
    return prob;
}

inline double grid_min_violation(const SocFeasibilityProblem& prob, int steps) {
    double best = kInf;
    Eigen::VectorXd x(2);
    for (int i = 0; i <= steps; ++i) {
        x[0] = prob.lower[0] + (prob.upper[0] - prob.lower[0]) * i / steps;
        for (int j = 0; j <= steps; ++j) {
            x[1] = prob.lower[1] + (prob.upper[1] - prob.lower[1]) * j / steps;
            best = std::min(best, max_violation(prob, x));
        }
    }
    return best;
}

inline double ul_objective_at_c(const RandomWorld& w, int m, double c) {
    Vec cs_c = w.c;
    cs_c[m] = c;
    return expected_ul_error(w.cs, w.p_ul, cs_c, w.upsilon, w.sigma_sq_ul)[m];
}

}  // namespace selftest_detail

/// Runs the embedded oracle suite and prints one line per check. Returns
/// true when everything passes.
inline bool selftest(std::ostream& out) {
    using namespace selftest_detail;
    bool all_ok = true;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        out << (ok ? "PASS  " : "FAIL  ") << std::left << std::setw(34) << name << detail << "\n";
        all_ok = all_ok && ok;
    };

    {  // closed forms vs Monte Carlo
        Rng rng(2024);
        double worst = 0.0;
        for (int inst = 0; inst < 3; ++inst) {
            const RandomWorld w = random_two_cell(rng);
            const auto [mc_dl, mc_ul] = mc_error_energies(w, 100000, rng);
            const Vec cf_dl = expected_dl_error(w.cs, w.p_dl, w.nu, w.sigma_sq_dl);
            const Vec cf_ul = expected_ul_error(w.cs, w.p_ul, w.c, w.upsilon, w.sigma_sq_ul);
            for (int m = 0; m < 2; ++m) {
                worst = std::max(worst, std::abs(mc_dl[m] - cf_dl[m]) / cf_dl[m]);
                worst = std::max(worst, std::abs(mc_ul[m] - cf_ul[m]) / cf_ul[m]);
            }
        }
        report("error-energy closed forms vs MC", worst < 0.02,
               "max relative deviation " + std::to_string(worst));
    }

    {  // cone feasibility vs exhaustive grid
        Rng rng(77);
        int checked = 0, agreed = 0;
        bool witnesses_ok = true;
        while (checked < 30) {
            const SocFeasibilityProblem prob = random_soc_2d(rng);
            const double margin = grid_min_violation(prob, 400);
            if (std::abs(margin) < 5e-3) continue;  // not margin-clear at grid resolution
            ++checked;
            const FeasibilityVerdict v = check_feasible(prob, 1e-9);
            if (v.feasible == (margin < 0.0)) ++agreed;
            if (v.feasible && max_violation(prob, v.x) > 1e-9) witnesses_ok = false;
        }
        report("cone feasibility vs grid oracle", agreed == checked && witnesses_ok,
               std::to_string(agreed) + "/" + std::to_string(checked) + " agreements");
    }

    {  // closed-form receive normalizer vs log grid
        Rng rng(555);
        double worst = 0.0;
        for (int inst = 0; inst < 10; ++inst) {
            const RandomWorld w = random_two_cell(rng);
            for (int m = 0; m < 2; ++m) {
                const double e_star = ul_objective_at_c(w, m, w.c[m]);
                double best_grid = kInf;
                for (int i = 0; i < 100000; ++i) {
                    const double c = w.c[m] * std::pow(10.0, -6.0 + 12.0 * i / 99999.0);
                    best_grid = std::min(best_grid, ul_objective_at_c(w, m, c));
                }
                worst = std::max(worst, (e_star - best_grid) / std::max(best_grid, 1e-300));
            }
        }
        report("receive normalizer vs grid search", worst < 1e-6,
               "max relative excess " + std::to_string(worst));
    }

    {  // analytic gradients vs central differences
        Rng rng(99);
        double worst = 0.0;
        for (int classes : {2, 3}) {
            for (int feats : {1, 5, 20}) {
                Dataset ds = make_blobs(classes, feats, 24, 1.0, 1.0, rng);
                Vec w(static_cast<size_t>(model_dim(ds)), 0.0);
                for (double& x : w) x = 0.3 * rng.normal();
                const Vec g = softmax_grad(w, ds);
                const double h = 1e-6;
                for (size_t i = 0; i < w.size(); ++i) {
                    Vec wp = w, wm = w;
                    wp[i] += h;
                    wm[i] -= h;
                    const double fd = (softmax_loss(wp, ds) - softmax_loss(wm, ds)) / (2.0 * h);
                    worst = std::max(worst, std::abs(fd - g[i]) / std::max(1.0, std::abs(g[i])));
                }
            }
        }
        report("softmax gradient vs central diff", worst < 1e-5,
               "max relative error " + std::to_string(worst));
    }

    out << (all_ok ? "selftest: all checks passed\n" : "selftest: FAILURES detected\n");
    return all_ok;
}

}  // namespace airfl
