#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "airfl/airphy.hpp"
#include "airfl/netchan.hpp"

using namespace airfl;

namespace {

Topology two_cell_topology(int k1, int k2, uint64_t seed) {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}, {40.0, 0.0}};
    cfg.devices_per_cell = {k1, k2};
    Rng rng(seed);
    return sample_topology(cfg, rng);
}

Topology one_cell_topology(int k, uint64_t seed) {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}};
    cfg.devices_per_cell = {k};
    Rng rng(seed);
    return sample_topology(cfg, rng);
}

Vec random_vec(size_t n, Rng& rng, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = scale * rng.normal();
    return v;
}

}  // namespace

TEST_CASE("normalize handles the already-normalized pair") {
    const NormalizedVector nv = normalize({1.0, -1.0});
    CHECK(nv.mean == 0.0);
    CHECK(nv.std == 1.0);
    CHECK(nv.s[0] == 1.0);
    CHECK(nv.s[1] == -1.0);
}

TEST_CASE("normalize rejects constant vectors") {
    CHECK_THROWS_AS(normalize({3.0, 3.0, 3.0}), degenerate_vector);
    CHECK(try_normalize({3.0, 3.0, 3.0}).std == 0.0);
}

TEST_CASE("normalize rejects short vectors") {
    CHECK_THROWS_AS(normalize({1.0}), std::invalid_argument);
}

TEST_CASE("normalization round-trips and has unit statistics") {
    Rng rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const Vec v = random_vec(100, rng, rng.uniform(0.1, 10.0));
        const NormalizedVector nv = normalize(v);
        double mean_s = 0.0, second = 0.0, worst = 0.0;
        for (size_t d = 0; d < v.size(); ++d) {
            mean_s += nv.s[d];
            second += nv.s[d] * nv.s[d];
            const double back = nv.std * nv.s[d] + nv.mean;
            worst = std::max(worst, std::abs(back - v[d]) / std::max(1.0, std::abs(v[d])));
        }
        CHECK(std::abs(mean_s / v.size()) < 1e-9);
        CHECK(std::abs(second / v.size() - 1.0) < 1e-9);
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("single-cell noise-free downlink is exact") {
    const Topology solo = one_cell_topology(3, 32);
    ChannelParams params;
    Rng chan_rng(33);
    const ChannelSet cs = realize_round(solo, params, chan_rng);
    Rng data_rng(34);
    const std::vector<Vec> models = {random_vec(32, data_rng)};
    DownlinkPlan plan{{2.0}, Vec(3, 0.0)};
    Rng noise_rng(35);
    const RoundTrace tr = downlink_disseminate(models, cs, plan, &noise_rng);
    for (int k = 0; k < 3; ++k)
        for (size_t d = 0; d < 32; ++d) CHECK(tr.w_hat[k][d] == doctest::Approx(models[0][d]).epsilon(1e-14));
}

TEST_CASE("silenced BS leaves its own cell with pure signal loss") {
    const Topology topo = two_cell_topology(2, 2, 41);
    ChannelParams params;
    Rng chan_rng(42);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    Rng data_rng(43);
    const std::vector<Vec> models = {random_vec(16, data_rng), random_vec(16, data_rng)};
    DownlinkPlan plan{{1.5, 0.0}, Vec(4, 0.0)};
    const RoundTrace tr = downlink_disseminate(models, cs, plan, nullptr);
    // cell-1 devices: no interference (BS 2 silent), no noise -> exact
    for (int k = 0; k < 2; ++k)
        for (size_t d = 0; d < 16; ++d) CHECK(tr.w_hat[k][d] == doctest::Approx(models[0][d]).epsilon(1e-14));
    // cell-2 devices: nothing broadcast, only the scalar mean arrives
    const double mean1 = mean_of(models[1]);
    for (int k = 2; k < 4; ++k) {
        double err_energy = 0.0;
        for (size_t d = 0; d < 16; ++d) {
            CHECK(tr.w_hat[k][d] == doctest::Approx(mean1).epsilon(1e-12));
            err_energy += tr.dl_err[k][d] * tr.dl_err[k][d];
        }
        CHECK(err_energy > 0.0);
    }
}

TEST_CASE("downlink and uplink traces satisfy the reconstruction identities bit-exactly") {
    const Topology topo = two_cell_topology(3, 2, 51);
    ChannelParams params;
    Rng chan_rng(52);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    Rng data_rng(53);
    const std::vector<Vec> models = {random_vec(48, data_rng), random_vec(48, data_rng)};
    DownlinkPlan dplan{{1.0, 0.7}, Vec(5, 1e-6)};
    Rng dl_noise(54);
    const RoundTrace dtr = downlink_disseminate(models, cs, dplan, &dl_noise);
    for (int k = 0; k < 5; ++k) {
        const int m = cs.home(k);
        for (size_t d = 0; d < 48; ++d) {
            const double recon = models[m][d] + dtr.dl_err[k][d];
            CHECK(dtr.w_hat[k][d] == recon);  // bitwise
        }
    }

    std::vector<Vec> grads;
    for (int k = 0; k < 5; ++k) grads.push_back(random_vec(48, data_rng, 0.3));
    UplinkPlan uplan{Vec(5, 0.05), {1e4, 2e4}, Vec(2, 1e-6)};
    Rng ul_noise(55);
    const RoundTrace utr = uplink_aggregate(grads, cs, uplan, &ul_noise);
    for (int m = 0; m < 2; ++m) {
        const auto devices = topo.cell_devices(m);
        for (size_t d = 0; d < 48; ++d) {
            double sum = 0.0;
            for (int k : devices) sum += grads[k][d];
            const double recon = (sum + utr.ul_err[m][d]) / static_cast<double>(devices.size());
            CHECK(utr.g_hat[m][d] == recon);  // bitwise
        }
    }
}

TEST_CASE("perfectly aligned single device aggregates exactly") {
    const Topology topo = one_cell_topology(1, 61);
    ChannelParams params;
    Rng chan_rng(62);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    Rng data_rng(63);
    const std::vector<Vec> grads = {random_vec(64, data_rng)};
    const NormalizedVector nv = normalize(grads[0]);
    const double h = std::abs(cs.ul_home(0));
    const double p = 0.2;
    const double c = h * h * p / (nv.std * nv.std);  // |h| sqrt(p) = sqrt(c) upsilon
    UplinkPlan plan{{p}, {c}, {0.0}};
    const RoundTrace tr = uplink_aggregate(grads, cs, plan, nullptr);
    for (size_t d = 0; d < 64; ++d) CHECK(tr.g_hat[0][d] == doctest::Approx(grads[0][d]).epsilon(1e-12));
}

TEST_CASE("all-degenerate cell falls back to the scalar side channel") {
    const Topology topo = one_cell_topology(3, 71);
    ChannelParams params;
    Rng chan_rng(72);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    const std::vector<Vec> grads = {Vec(8, 2.0), Vec(8, -1.0), Vec(8, 0.5)};
    UplinkPlan plan{Vec(3, 0.1), {1.0}, {1e-8}};
    Rng noise(73);
    const RoundTrace tr = uplink_aggregate(grads, cs, plan, &noise);
    CHECK_FALSE(tr.ul_aircomp[0]);
    for (size_t d = 0; d < 8; ++d) CHECK(tr.g_hat[0][d] == doctest::Approx(0.5).epsilon(1e-14));
    for (double p : tr.p_ul_effective) CHECK(p == 0.0);
}

TEST_CASE("errors are unbiased over symbol and noise draws") {
    const Topology topo = two_cell_topology(2, 2, 81);
    ChannelParams params;
    Rng chan_rng(82);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    const size_t draws = 100000;
    Rng sym_rng(83);

    std::vector<NormalizedVector> stats(2);
    std::vector<Vec> models(2, Vec(draws, 0.0));
    for (int m = 0; m < 2; ++m) {
        stats[m].std = 1.0;
        stats[m].s = random_vec(draws, sym_rng);
        for (size_t d = 0; d < draws; ++d) models[m][d] = stats[m].s[d];
    }
    DownlinkPlan dplan{{1.0, 1.0}, Vec(4, 1e-6)};
    const RoundTrace tr = downlink_from_symbols(stats, models, cs, dplan, &sym_rng);
    for (int k = 0; k < 4; ++k) {
        double mean_e = 0.0, var_e = 0.0;
        for (size_t d = 0; d < draws; ++d) mean_e += tr.dl_err[k][d];
        mean_e /= draws;
        for (size_t d = 0; d < draws; ++d)
            var_e += (tr.dl_err[k][d] - mean_e) * (tr.dl_err[k][d] - mean_e);
        const double se = std::sqrt(var_e / draws / draws);
        CHECK(std::abs(mean_e) < 3.0 * se + 1e-12);
    }
}

TEST_CASE("uplink plan validation rejects nonpositive normalizers") {
    const Topology topo = one_cell_topology(2, 91);
    ChannelParams params;
    Rng chan_rng(92);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    Rng data_rng(93);
    const std::vector<Vec> grads = {random_vec(8, data_rng), random_vec(8, data_rng)};
    UplinkPlan plan{Vec(2, 0.1), {0.0}, {1e-8}};
    CHECK_THROWS_AS(uplink_aggregate(grads, cs, plan, nullptr), std::invalid_argument);
}

TEST_CASE("dimension mismatches are rejected") {
    const Topology topo = two_cell_topology(1, 1, 94);
    ChannelParams params;
    Rng chan_rng(95);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    const std::vector<Vec> models = {Vec(8, 1.0), Vec(10, 1.0)};
    DownlinkPlan plan{{1.0, 1.0}, Vec(2, 0.0)};
    CHECK_THROWS_AS(downlink_disseminate(models, cs, plan, nullptr), std::invalid_argument);
}

TEST_CASE("global update is a plain descent step") {
    CHECK(global_update({1.0, 2.0}, {0.0, 0.0}, 0.1) == Vec{1.0, 2.0});
    const Vec w = global_update(Vec(4, 0.0), Vec(4, 1.0), 0.1);
    for (double x : w) CHECK(x == doctest::Approx(-0.1));
    CHECK_THROWS_AS(global_update({1.0}, {1.0}, 0.0), std::invalid_argument);
}
