#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfl/airphy.hpp"
#include "airfl/common.hpp"
#include "airfl/coopt.hpp"
#include "airfl/gapmodel.hpp"
#include "airfl/netchan.hpp"
#include "airfl/rng.hpp"

namespace airfl {

// Labeled samples for one cell's task. Features include a trailing
// constant-1 bias entry; labels are 1..classes.
struct Dataset {
    std::vector<Vec> features;
    std::vector<int> labels;
    int classes = 0;
    int feat_dim = 0;
};

struct Shard {
    std::vector<Vec> features;
    std::vector<int> labels;
    int owner = 0;
};

// Multinomial logistic model: w = [w_1; ...; w_C] laid out class-major,
// each block of length feat_dim, so D = classes * feat_dim.

inline int model_dim(const Dataset& ds) { return ds.classes * ds.feat_dim; }

namespace detail {

inline void softmax_probs(const Vec& w, const Vec& u, int classes, int feat_dim, Vec& probs) {
    probs.assign(classes, 0.0);
    double maxlogit = -kInf;
    for (int c = 0; c < classes; ++c) {
        double logit = 0.0;
        const double* wc = w.data() + static_cast<size_t>(c) * feat_dim;
        for (int f = 0; f < feat_dim; ++f) logit += wc[f] * u[f];
        probs[c] = logit;
        maxlogit = std::max(maxlogit, logit);
    }
    double denom = 0.0;
    for (int c = 0; c < classes; ++c) {
        probs[c] = std::exp(probs[c] - maxlogit);
        denom += probs[c];
    }
    for (int c = 0; c < classes; ++c) probs[c] /= denom;
}

inline void check_labels(const std::vector<int>& labels, int classes) {
    for (int v : labels)
        if (v < 1 || v > classes) throw std::invalid_argument("label out of range");
}

}  // namespace detail

/// Mean cross-entropy of the softmax model over the batch.
inline double softmax_loss(const Vec& w, const std::vector<Vec>& features, const std::vector<int>& labels,
                           int classes, int feat_dim) {
    detail::check_labels(labels, classes);
    Vec probs;
    double loss = 0.0;
    for (size_t i = 0; i < features.size(); ++i) {
        detail::softmax_probs(w, features[i], classes, feat_dim, probs);
        loss -= std::log(std::max(probs[labels[i] - 1], 1e-300));
    }
    return loss / static_cast<double>(features.size());
}

/// Mean gradient over the batch; per-class blocks (p_c - 1{v=c}) u.
inline Vec softmax_grad(const Vec& w, const std::vector<Vec>& features, const std::vector<int>& labels,
                        int classes, int feat_dim) {
    detail::check_labels(labels, classes);
    Vec g(static_cast<size_t>(classes) * feat_dim, 0.0);
    Vec probs;
    for (size_t i = 0; i < features.size(); ++i) {
        detail::softmax_probs(w, features[i], classes, feat_dim, probs);
        for (int c = 0; c < classes; ++c) {
            const double coef = probs[c] - (labels[i] == c + 1 ? 1.0 : 0.0);
            double* gc = g.data() + static_cast<size_t>(c) * feat_dim;
            for (int f = 0; f < feat_dim; ++f) gc[f] += coef * features[i][f];
        }
    }
    const double inv = 1.0 / static_cast<double>(features.size());
    for (double& x : g) x *= inv;
    return g;
}

inline double softmax_loss(const Vec& w, const Dataset& ds) {
    return softmax_loss(w, ds.features, ds.labels, ds.classes, ds.feat_dim);
}

inline Vec softmax_grad(const Vec& w, const Dataset& ds) {
    return softmax_grad(w, ds.features, ds.labels, ds.classes, ds.feat_dim);
}

/// Full-batch gradient on the device shard, or a uniform without-replacement
/// mini-batch when batch_size > 0.
inline Vec local_gradient(const Shard& shard, const Vec& w_hat, int classes, int feat_dim,
                          int batch_size = 0, Rng* rng = nullptr) {
    for (double x : w_hat)
        if (!std::isfinite(x)) throw std::invalid_argument("local_gradient: model must be finite");
    if (batch_size <= 0 || batch_size == static_cast<int>(shard.features.size()))
        return softmax_grad(w_hat, shard.features, shard.labels, classes, feat_dim);
    if (batch_size > static_cast<int>(shard.features.size()))
        throw std::invalid_argument("local_gradient: batch exceeds shard size");
    if (!rng) throw std::invalid_argument("local_gradient: mini-batch sampling needs an rng");
    std::vector<int> idx(shard.features.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < batch_size; ++i) {
        const int j = i + static_cast<int>(rng->below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    std::vector<Vec> feats(batch_size);
    std::vector<int> labels(batch_size);
    for (int i = 0; i < batch_size; ++i) {
        feats[i] = shard.features[idx[i]];
        labels[i] = shard.labels[idx[i]];
    }
    return softmax_grad(w_hat, feats, labels, classes, feat_dim);
}

// Label-sorted contiguous shards: sort, truncate the remainder, cut into K
// equal pieces, hand them to devices in a random order without replacement.
// This is what makes the local datasets non-i.i.d.
inline std::vector<Shard> shard_dataset(const Dataset& ds, int k_devices, Rng& rng) {
    const int n = static_cast<int>(ds.features.size());
    if (n < k_devices) throw std::invalid_argument("shard_dataset: dataset smaller than device count");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ds.labels[a] < ds.labels[b]; });
    const int per = n / k_devices;
    std::vector<int> assignment(k_devices);
    std::iota(assignment.begin(), assignment.end(), 0);
    rng.shuffle(assignment);
    std::vector<Shard> shards(k_devices);
    for (int dev = 0; dev < k_devices; ++dev) {
        Shard& sh = shards[dev];
        sh.owner = dev;
        const int start = assignment[dev] * per;
        for (int i = start; i < start + per; ++i) {
            sh.features.push_back(ds.features[order[i]]);
            sh.labels.push_back(ds.labels[order[i]]);
        }
    }
    return shards;
}

inline std::pair<double, double> evaluate(const Vec& w, const Dataset& ds) {
    if (ds.features.empty()) throw std::invalid_argument("evaluate: empty test set");
    const double loss = softmax_loss(w, ds);
    Vec probs;
    int correct = 0;
    for (size_t i = 0; i < ds.features.size(); ++i) {
        detail::softmax_probs(w, ds.features[i], ds.classes, ds.feat_dim, probs);
        int best = 0;
        for (int c = 1; c < ds.classes; ++c)
            if (probs[c] > probs[best]) best = c;
        if (best + 1 == ds.labels[i]) ++correct;
    }
    return {loss, static_cast<double>(correct) / static_cast<double>(ds.features.size())};
}

/// Smoothness constant of the softmax cross-entropy loss over the dataset:
/// max_i ||u_i||^2 / 2.
inline double compute_smoothness(const Dataset& ds) {
    double best = 0.0;
    for (const auto& u : ds.features) best = std::max(best, l2sq(u));
    return best / 2.0;
}

/// Gaussian-blob classification task: class means on a sphere of the given
/// radius, isotropic spread, constant-1 bias feature appended.
inline Dataset make_blobs(int classes, int raw_features, int n, double radius, double spread, Rng& rng) {
    Dataset ds;
    ds.classes = classes;
    ds.feat_dim = raw_features + 1;
    std::vector<Vec> means(classes, Vec(raw_features, 0.0));
    for (int c = 0; c < classes; ++c) {
        double norm_sq = 0.0;
        for (int f = 0; f < raw_features; ++f) {
            means[c][f] = rng.normal();
            norm_sq += means[c][f] * means[c][f];
        }
        const double scale = radius / std::max(std::sqrt(norm_sq), 1e-12);
        for (double& x : means[c]) x *= scale;
    }
    for (int i = 0; i < n; ++i) {
        const int c = i % classes;
        Vec u(ds.feat_dim, 1.0);
        for (int f = 0; f < raw_features; ++f) u[f] = means[c][f] + spread * rng.normal();
        ds.features.push_back(std::move(u));
        ds.labels.push_back(c + 1);
    }
    return ds;
}

// ---- IDX file ingestion (big-endian magic 0x803 images / 0x801 labels) ----

namespace detail {

inline uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4)) throw validation_error("idx: truncated header in " + path);
    return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) | uint32_t(buf[3]);
}

}  // namespace detail

inline std::vector<Vec> read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("idx: cannot open " + path);
    if (detail::read_be32(in, path) != 0x00000803u) throw validation_error("idx: bad image magic in " + path);
    const uint32_t n = detail::read_be32(in, path);
    const uint32_t rows = detail::read_be32(in, path);
    const uint32_t cols = detail::read_be32(in, path);
    const size_t dim = static_cast<size_t>(rows) * cols;
    std::vector<Vec> out(n, Vec(dim, 0.0));
    std::vector<unsigned char> buf(dim);
    for (uint32_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim)))
            throw validation_error("idx: truncated image data in " + path);
        for (size_t j = 0; j < dim; ++j) out[i][j] = buf[j] / 255.0;
    }
    return out;
}

inline std::vector<int> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("idx: cannot open " + path);
    if (detail::read_be32(in, path) != 0x00000801u) throw validation_error("idx: bad label magic in " + path);
    const uint32_t n = detail::read_be32(in, path);
    std::vector<int> out(n, 0);
    std::vector<unsigned char> buf(n);
    if (n > 0 && !in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
        throw validation_error("idx: truncated label data in " + path);
    for (uint32_t i = 0; i < n; ++i) out[i] = buf[i];
    return out;
}

/// Loads an IDX image/label pair, keeps labels in [label_lo, label_hi],
/// remaps them to 1..C, scales pixels to [0,1] and appends the bias entry.
inline Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path, int label_lo,
                                int label_hi) {
    if (label_lo > label_hi) throw validation_error("idx: empty label range");
    const auto images = read_idx_images(images_path);
    const auto labels = read_idx_labels(labels_path);
    if (images.size() != labels.size()) throw validation_error("idx: image/label count mismatch");
    Dataset ds;
    ds.classes = label_hi - label_lo + 1;
    ds.feat_dim = images.empty() ? 0 : static_cast<int>(images[0].size()) + 1;
    for (size_t i = 0; i < images.size(); ++i) {
        if (labels[i] < label_lo || labels[i] > label_hi) continue;
        Vec u = images[i];
        u.push_back(1.0);
        ds.features.push_back(std::move(u));
        ds.labels.push_back(labels[i] - label_lo + 1);
    }
    return ds;
}

// ---- Round orchestration ----

enum class DlMode { Free, Opt, Full };
enum class UlMode { Free, Opt, Full, IgnInter, MaxInter };

struct Scheme {
    DlMode dl = DlMode::Free;
    UlMode ul = UlMode::Free;
    std::string name;
};

inline Scheme parse_scheme(const std::string& name) {
    Scheme s;
    s.name = name;
    bool dl_set = false, ul_set = false;
    size_t pos = 0;
    while (pos <= name.size()) {
        size_t amp = name.find('&', pos);
        if (amp == std::string::npos) amp = name.size();
        std::string tok = name.substr(pos, amp - pos);
        const auto strip = [](std::string t) {
            const size_t a = t.find_first_not_of(" \t");
            const size_t b = t.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
        };
        tok = strip(tok);
        if (tok == "Benchmark") {
            if (dl_set || ul_set) throw validation_error("scheme: Benchmark cannot be combined: " + name);
            dl_set = ul_set = true;
        } else if (tok == "DL-Free" || tok == "DL-Opt" || tok == "DL-Full") {
            if (dl_set) throw validation_error("scheme: downlink given twice: " + name);
            dl_set = true;
            s.dl = tok == "DL-Opt" ? DlMode::Opt : (tok == "DL-Full" ? DlMode::Full : DlMode::Free);
        } else if (tok == "UL-Free" || tok == "UL-Opt" || tok == "UL-Full" || tok == "UL-IgnInter" ||
                   tok == "UL-MaxInter") {
            if (ul_set) throw validation_error("scheme: uplink given twice: " + name);
            ul_set = true;
            s.ul = tok == "UL-Opt"        ? UlMode::Opt
                   : tok == "UL-Full"     ? UlMode::Full
                   : tok == "UL-IgnInter" ? UlMode::IgnInter
                   : tok == "UL-MaxInter" ? UlMode::MaxInter
                                          : UlMode::Free;
        } else {
            throw validation_error("scheme: unknown token '" + tok + "' in: " + name);
        }
        pos = amp + 1;
        if (amp == name.size()) break;
    }
    return s;
}

struct World {
    Topology topo;
    ChannelParams chp;
    Vec p_dl_budget;  // watts per BS
    Vec p_ul_budget;  // watts per device
    Vec sigma_sq_dl;  // watts per device
    Vec sigma_sq_ul;  // watts per BS
    Vec kappa;
    Vec eta;  // per cell
    double L = 1.0;
    double eps_dl = 1e-9;
    double eps_ul = 1e-9;
    double tol = 1e-9;
    int batch_size = 0;
    std::vector<std::vector<Shard>> shards;  // per cell, per device
    std::vector<Dataset> train_pool;         // per cell
    std::vector<Dataset> test_pool;          // per cell
};

struct RoundRecord {
    int round = 0;
    uint64_t chan_digest = 0;
    Vec train_loss, test_acc;
    Vec zeta0_dl, zeta0_ul;  // L-scaled budgets; zero for non-optimized halves
    Vec e_dl, e_ul, gap;     // closed-form per-dimension energies and gaps
    Vec grad_sq;             // |grad F(w before update)|^2
    Vec dl_err_energy, ul_err_energy;  // realized error energies
};

struct FlState {
    std::vector<Vec> w;
    int round = 0;
    std::vector<RoundRecord> history;
};

struct RoundRng {
    Rng channel;
    Rng dl_noise;
    Rng ul_noise;
    Rng batch;
};

inline FlState init_state(const World& world) {
    FlState st;
    const int M = world.topo.cells;
    st.w.assign(M, Vec(static_cast<size_t>(model_dim(world.train_pool[0])), 0.0));
    return st;
}

// One training round: realize channels, pick downlink powers, disseminate,
// compute local gradients, pick uplink powers and normalizers, aggregate,
// update. Schemes differ only in the power-selection stages, so paired runs
// see identical channel/noise/data draws.
inline void run_round(FlState& state, const Scheme& scheme, const World& world, RoundRng& rng) {
    const int M = world.topo.cells;
    const int K = world.topo.total_devices();
    const int classes = world.train_pool[0].classes;
    const int feat_dim = world.train_pool[0].feat_dim;
    state.round += 1;

    RoundRecord rec;
    rec.round = state.round;
    rec.train_loss.assign(M, 0.0);
    rec.test_acc.assign(M, 0.0);
    rec.zeta0_dl.assign(M, 0.0);
    rec.zeta0_ul.assign(M, 0.0);
    rec.e_dl.assign(M, 0.0);
    rec.e_ul.assign(M, 0.0);
    rec.gap.assign(M, 0.0);
    rec.grad_sq.assign(M, 0.0);
    rec.dl_err_energy.assign(M, 0.0);
    rec.ul_err_energy.assign(M, 0.0);

    const ChannelSet cs = realize_round(world.topo, world.chp, rng.channel);
    rec.chan_digest = channel_digest(cs);

    // True global gradient at the current model, for the bound check.
    for (int m = 0; m < M; ++m)
        rec.grad_sq[m] = l2sq(softmax_grad(state.w[m], world.train_pool[m]));

    // Stage 1: downlink model dissemination.
    std::vector<Vec> w_hat(K);
    if (scheme.dl == DlMode::Free) {
        for (int k = 0; k < K; ++k) w_hat[k] = state.w[cs.home(k)];
    } else {
        std::vector<NormalizedVector> stats;
        stats.reserve(M);
        Vec nu(M, 0.0);
        for (int m = 0; m < M; ++m) {
            stats.push_back(try_normalize(state.w[m]));
            nu[m] = stats.back().std;
        }
        DownlinkPlan plan;
        plan.sigma_sq = world.sigma_sq_dl;
        if (scheme.dl == DlMode::Opt) {
            const DownlinkDesign d =
                optimize_downlink(cs, world.sigma_sq_dl, nu, world.kappa, world.p_dl_budget, world.eps_dl, world.tol);
            plan.p = d.p;
            for (int m = 0; m < M; ++m) rec.zeta0_dl[m] = world.L * world.L * d.zeta;
        } else {
            plan.p = world.p_dl_budget;
            for (int m = 0; m < M; ++m)
                if (!(nu[m] > 0.0)) plan.p[m] = 0.0;
        }
        const RoundTrace tr = downlink_from_symbols(stats, state.w, cs, plan, &rng.dl_noise);
        for (int k = 0; k < K; ++k) {
            w_hat[k] = tr.w_hat[k];
            rec.dl_err_energy[cs.home(k)] += l2sq(tr.dl_err[k]);
        }
        rec.e_dl = expected_dl_error(cs, plan.p, nu, world.sigma_sq_dl);
    }

    // Stage 2: local gradients at the received models.
    std::vector<Vec> grads(K);
    for (int m = 0; m < M; ++m) {
        const auto devices = world.topo.cell_devices(m);
        for (size_t i = 0; i < devices.size(); ++i) {
            const int k = devices[i];
            grads[k] = local_gradient(world.shards[m][i], w_hat[k], classes, feat_dim, world.batch_size,
                                      &rng.batch);
        }
    }

    // Stage 3: uplink gradient aggregation.
    std::vector<Vec> g_hat(M);
    if (scheme.ul == UlMode::Free) {
        for (int m = 0; m < M; ++m) {
            const auto devices = world.topo.cell_devices(m);
            Vec sum(grads[devices[0]].size(), 0.0);
            for (int k : devices) axpy(1.0, grads[k], sum);
            for (double& x : sum) x /= static_cast<double>(devices.size());
            g_hat[m] = std::move(sum);
        }
    } else {
        std::vector<NormalizedVector> gstats;
        gstats.reserve(K);
        Vec upsilon(K, 0.0);
        for (int k = 0; k < K; ++k) {
            gstats.push_back(try_normalize(grads[k]));
            upsilon[k] = gstats.back().std;
        }
        UplinkPlan plan;
        plan.sigma_sq = world.sigma_sq_ul;
        plan.p.assign(K, 0.0);
        plan.c.assign(M, 1.0);
        switch (scheme.ul) {
            case UlMode::Opt: {
                const UplinkDesign d = optimize_uplink(cs, world.sigma_sq_ul, upsilon, world.kappa, world.eta,
                                                       world.p_ul_budget, world.eps_ul, world.tol);
                plan.p = d.p;
                plan.c = d.c;
                for (int m = 0; m < M; ++m) rec.zeta0_ul[m] = world.L * d.zeta;
                break;
            }
            case UlMode::Full: {
                const PowerPlan full = baseline_full_power(cs, world.p_dl_budget, world.p_ul_budget, upsilon,
                                                           world.sigma_sq_ul);
                plan.p = full.p_ul;
                plan.c = full.c;
                break;
            }
            case UlMode::IgnInter:
            case UlMode::MaxInter: {
                for (int m = 0; m < M; ++m) {
                    const SingleCellUplink d =
                        scheme.ul == UlMode::IgnInter
                            ? uplink_ignore_interference(cs, m, upsilon, world.sigma_sq_ul[m],
                                                         world.p_ul_budget, world.eta[m], world.eps_ul,
                                                         world.tol)
                            : uplink_max_interference(cs, m, upsilon, world.sigma_sq_ul[m], world.p_ul_budget,
                                                      world.eta[m], world.eps_ul, world.tol);
                    const auto devices = world.topo.cell_devices(m);
                    for (size_t i = 0; i < devices.size(); ++i) plan.p[devices[i]] = d.p[i];
                    plan.c[m] = d.c;
                    rec.zeta0_ul[m] = world.L * d.zeta;
                }
                break;
            }
            case UlMode::Free:
                break;
        }
        const RoundTrace tr = uplink_from_symbols(gstats, grads, cs, plan, &rng.ul_noise);
        g_hat = tr.g_hat;
        const Vec e_formula = expected_ul_error(cs, tr.p_ul_effective, plan.c, upsilon, world.sigma_sq_ul);
        for (int m = 0; m < M; ++m) {
            rec.ul_err_energy[m] = l2sq(tr.ul_err[m]);
            if (tr.ul_aircomp[m]) {
                rec.e_ul[m] = e_formula[m];
            } else {
                double sum_ups_sq = 0.0;
                for (int k = 0; k < K; ++k)
                    if (cs.home(k) == m) sum_ups_sq += upsilon[k] * upsilon[k];
                rec.e_ul[m] = sum_ups_sq;
            }
        }
    }

    // Stage 4: global model update, then metrics.
    for (int m = 0; m < M; ++m) state.w[m] = global_update(state.w[m], g_hat[m], world.eta[m]);

    GapTerms terms;
    terms.e_dl = rec.e_dl;
    terms.e_ul = rec.e_ul;
    terms.eta = world.eta;
    terms.L = world.L;
    terms.kcount.assign(M, 0.0);
    for (int k = 0; k < K; ++k) terms.kcount[cs.home(k)] += 1.0;
    rec.gap = gap_tuple(terms);

    for (int m = 0; m < M; ++m) {
        rec.train_loss[m] = softmax_loss(state.w[m], world.train_pool[m]);
        rec.test_acc[m] = evaluate(state.w[m], world.test_pool[m]).second;
    }
    state.history.push_back(std::move(rec));
}

}  // namespace airfl
