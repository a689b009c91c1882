#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "airfl/common.hpp"

namespace airfl {

/// One constraint ||A x + b|| <= c' x + d.
struct SocCone {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::VectorXd c;
    double d = 0.0;
};

struct SocFeasibilityProblem {
    std::vector<SocCone> cones;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    int n = 0;
};

struct FeasibilityVerdict {
    bool feasible = false;
    Eigen::VectorXd x;      // witness (best point found)
    double slack = -kInf;   // max cone violation at x
};

inline double cone_violation(const SocCone& cone, const Eigen::VectorXd& x) {
    return (cone.A * x + cone.b).norm() - cone.c.dot(x) - cone.d;
}

inline double max_violation(const SocFeasibilityProblem& prob, const Eigen::VectorXd& x) {
    double v = -kInf;
    for (const auto& cone : prob.cones) v = std::max(v, cone_violation(cone, x));
    return v;
}

namespace detail {

inline void validate_problem(const SocFeasibilityProblem& prob) {
    if (prob.n < 0 || prob.lower.size() != prob.n || prob.upper.size() != prob.n)
        throw std::invalid_argument("soc: box bounds must match variable count");
    for (int i = 0; i < prob.n; ++i) {
        if (!std::isfinite(prob.lower[i]) || !std::isfinite(prob.upper[i]))
            throw std::invalid_argument("soc: box bounds must be finite");
        if (prob.lower[i] > prob.upper[i]) throw std::invalid_argument("soc: lower bound exceeds upper bound");
    }
    for (const auto& cone : prob.cones) {
        if (cone.A.cols() != prob.n || cone.c.size() != prob.n || cone.b.size() != cone.A.rows())
            throw std::invalid_argument("soc: cone dimensions inconsistent with variable count");
        if (!cone.A.allFinite() || !cone.b.allFinite() || !cone.c.allFinite() || !std::isfinite(cone.d))
            throw std::invalid_argument("soc: cone data must be finite");
    }
}

// Reduced phase-I program over the free coordinates plus the slack s:
// minimize s subject to ||A x + b|| <= c' x + d + s and the open box.
struct PhaseOne {
    struct Cone {
        Eigen::MatrixXd A;
        Eigen::VectorXd b;
        Eigen::VectorXd a;  // [c; 1] in (x, s) coordinates
        double d = 0.0;
        Eigen::MatrixXd AtA;
    };
    std::vector<Cone> cones;
    Eigen::VectorXd lo, hi;  // free coordinates only
    int nf = 0;

    double slack_u(const Cone& cn, const Eigen::VectorXd& z) const {
        return cn.a.dot(z) + cn.d;  // c'x + d + s
    }

    bool strictly_feasible(const Eigen::VectorXd& z) const {
        for (int i = 0; i < nf; ++i)
            if (!(z[i] > lo[i]) || !(z[i] < hi[i])) return false;
        for (const auto& cn : cones) {
            const double u = slack_u(cn, z);
            if (!(u > 0.0)) return false;
            const double f = u * u - (cn.A * z.head(nf) + cn.b).squaredNorm();
            if (!(f > 0.0)) return false;
        }
        return true;
    }

    double barrier(double t, const Eigen::VectorXd& z) const {
        double phi = t * z[nf];
        for (const auto& cn : cones) {
            const double u = slack_u(cn, z);
            const double f = u * u - (cn.A * z.head(nf) + cn.b).squaredNorm();
            phi -= std::log(f);
        }
        for (int i = 0; i < nf; ++i) phi -= std::log(z[i] - lo[i]) + std::log(hi[i] - z[i]);
        return phi;
    }

    void grad_hess(double t, const Eigen::VectorXd& z, Eigen::VectorXd& g, Eigen::MatrixXd& H) const {
        const int nz = nf + 1;
        g.setZero(nz);
        H.setZero(nz, nz);
        g[nf] = t;
        for (const auto& cn : cones) {
            const Eigen::VectorXd w = cn.A * z.head(nf) + cn.b;
            const double u = slack_u(cn, z);
            const double f = u * u - w.squaredNorm();
            Eigen::VectorXd df = 2.0 * u * cn.a;
            df.head(nf) -= 2.0 * cn.A.transpose() * w;
            g -= df / f;
            H += df * df.transpose() / (f * f) - 2.0 * cn.a * cn.a.transpose() / f;
            H.topLeftCorner(nf, nf) += 2.0 * cn.AtA / f;
        }
        for (int i = 0; i < nf; ++i) {
            const double dl = z[i] - lo[i];
            const double dh = hi[i] - z[i];
            g[i] += -1.0 / dl + 1.0 / dh;
            H(i, i) += 1.0 / (dl * dl) + 1.0 / (dh * dh);
        }
    }
};

}  // namespace detail

// Phase-I feasibility detection: minimizes the maximum cone violation over
// the box with a log-barrier interior-point method, then decides by the
// true violation of the witness. Deterministic; Feasible verdicts are
// self-certifying through the returned witness.
inline FeasibilityVerdict check_feasible(const SocFeasibilityProblem& prob, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("check_feasible: tol must be positive");
    detail::validate_problem(prob);

    Eigen::VectorXd x(prob.n);
    std::vector<int> free_idx;
    for (int i = 0; i < prob.n; ++i) {
        if (prob.upper[i] - prob.lower[i] > 0.0) {
            free_idx.push_back(i);
            x[i] = 0.5 * (prob.lower[i] + prob.upper[i]);
        } else {
            x[i] = prob.lower[i];
        }
    }

    FeasibilityVerdict verdict;
    if (prob.cones.empty()) {
        verdict.feasible = true;
        verdict.x = x;
        verdict.slack = -kInf;
        return verdict;
    }

    const int nf = static_cast<int>(free_idx.size());
    if (nf == 0) {
        verdict.slack = max_violation(prob, x);
        verdict.feasible = verdict.slack <= tol;
        verdict.x = x;
        return verdict;
    }

    detail::PhaseOne ph;
    ph.nf = nf;
    ph.lo.resize(nf);
    ph.hi.resize(nf);
    for (int i = 0; i < nf; ++i) {
        ph.lo[i] = prob.lower[free_idx[i]];
        ph.hi[i] = prob.upper[free_idx[i]];
    }
    for (const auto& cone : prob.cones) {
        detail::PhaseOne::Cone cn;
        cn.A.resize(cone.A.rows(), nf);
        for (int i = 0; i < nf; ++i) cn.A.col(i) = cone.A.col(free_idx[i]);
        cn.b = cone.b;
        cn.a.setZero(nf + 1);
        for (int i = 0; i < nf; ++i) cn.a[i] = cone.c[free_idx[i]];
        cn.a[nf] = 1.0;
        cn.d = cone.d;
        // Fold the fixed coordinates into the constants.
        for (int i = 0; i < prob.n; ++i) {
            bool is_free = false;
            for (int j : free_idx)
                if (j == i) is_free = true;
            if (is_free) continue;
            cn.b += cone.A.col(i) * x[i];
            cn.d += cone.c[i] * x[i];
        }
        cn.AtA = cn.A.transpose() * cn.A;
        ph.cones.push_back(std::move(cn));
    }

    const int nz = nf + 1;
    Eigen::VectorXd z(nz);
    for (int i = 0; i < nf; ++i) z[i] = 0.5 * (ph.lo[i] + ph.hi[i]);
    double worst = -kInf;
    for (const auto& cn : ph.cones) {
        const double viol = (cn.A * z.head(nf) + cn.b).norm() - (cn.a.head(nf).dot(z.head(nf)) + cn.d);
        worst = std::max(worst, viol);
    }
    z[nf] = worst + 1.0;

    auto assemble = [&](const Eigen::VectorXd& zz) {
        Eigen::VectorXd full = x;
        for (int i = 0; i < nf; ++i) full[free_idx[i]] = zz[i];
        return full;
    };

    const double bar_nu = 2.0 * static_cast<double>(ph.cones.size()) + 2.0 * nf;
    const double gap_target = 0.25 * tol;
    Eigen::VectorXd g;
    Eigen::MatrixXd H;
    double t = 1.0;
    bool done = false;
    while (!done) {
        for (int it = 0; it < 80; ++it) {
            ph.grad_hess(t, z, g, H);
            Eigen::LLT<Eigen::MatrixXd> llt(H);
            Eigen::VectorXd dz;
            if (llt.info() == Eigen::Success) {
                dz = llt.solve(-g);
            } else {
                Eigen::MatrixXd Hr = H;
                const double ridge = 1e-12 * (1.0 + H.trace() / nz);
                Hr.diagonal().array() += ridge;
                dz = Hr.ldlt().solve(-g);
            }
            const double lambda_sq = -g.dot(dz);
            if (!(lambda_sq > 2e-9)) break;
            double alpha = 1.0;
            while (alpha > 1e-18 && !ph.strictly_feasible(z + alpha * dz)) alpha *= 0.5;
            const double phi0 = ph.barrier(t, z);
            while (alpha > 1e-18 && ph.barrier(t, z + alpha * dz) > phi0 + 0.25 * alpha * g.dot(dz))
                alpha *= 0.5;
            if (alpha <= 1e-18) break;
            z += alpha * dz;
        }
        // Early exit once the iterate is a certificate.
        if (max_violation(prob, assemble(z)) <= 0.0) break;
        if (bar_nu / t <= gap_target) done = true;
        t *= 20.0;
    }

    verdict.x = assemble(z);
    verdict.slack = max_violation(prob, verdict.x);
    verdict.feasible = verdict.slack <= tol;
    return verdict;
}

struct BisectionResult {
    double zeta_star = 0.0;
    Eigen::VectorXd witness;
    double witness_zeta = 0.0;
    bool has_witness = false;
    int iterations = 0;
    double low = 0.0;
    double up = 0.0;
};

// Monotone bisection over a nondecreasing feasibility predicate. If the
// initial upper end is infeasible the bracket is grown (upper end doubled,
// at most 60 times) before giving up.
template <typename Feas>
BisectionResult bisect(Feas&& feas, double low, double up, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("bisect: eps must be positive");
    if (!(up >= low)) throw std::invalid_argument("bisect: empty bracket");

    BisectionResult res;
    FeasibilityVerdict v_up = feas(up);
    int growth = 0;
    while (!v_up.feasible) {
        if (++growth > 60) throw no_feasible_point("bisect: no feasible point after bracket growth");
        low = up;
        up = (up == 0.0) ? eps : 2.0 * up;
        v_up = feas(up);
    }
    res.witness = v_up.x;
    res.witness_zeta = up;
    res.has_witness = true;

    while (up - low > eps) {
        ++res.iterations;
        const double mid = 0.5 * (up + low);
        FeasibilityVerdict v = feas(mid);
        if (v.feasible) {
            up = mid;
            res.witness = v.x;
            res.witness_zeta = mid;
        } else {
            low = mid;
        }
    }
    res.zeta_star = 0.5 * (up + low);
    res.low = low;
    res.up = up;
    return res;
}

}  // namespace airfl
