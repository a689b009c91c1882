#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>

#include "airfl/netchan.hpp"

using namespace airfl;

namespace {

GeometryConfig four_cell_config() {
    GeometryConfig cfg;
    const double y = 20.0 * std::sqrt(3.0);
    cfg.bs_positions = {{0.0, 0.0}, {40.0, 0.0}, {20.0, y}, {20.0, -y}};
    cfg.devices_per_cell = {10, 10, 10, 10};
    cfg.radius_min = 1.0;
    cfg.radius_max = 20.0;
    return cfg;
}

double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

TEST_CASE("four-cell topology keeps every device within its cell radius") {
    Rng rng(1);
    const Topology topo = sample_topology(four_cell_config(), rng);
    REQUIRE(topo.total_devices() == 40);
    REQUIRE(topo.cells == 4);
    for (int k = 0; k < 40; ++k) {
        const double d = dist(topo.device_positions[k], topo.bs_positions[topo.association[k]]);
        CHECK(d >= 1.0 - 1e-12);
        CHECK(d <= 20.0 + 1e-12);
    }
    // association partitions the devices
    std::vector<int> count(4, 0);
    for (int k = 0; k < 40; ++k) ++count[topo.association[k]];
    for (int c : count) CHECK(c == 10);
}

TEST_CASE("degenerate annulus pins the device distance") {
    GeometryConfig cfg;
    cfg.bs_positions = {{3.0, -2.0}};
    cfg.devices_per_cell = {1};
    cfg.radius_min = 5.0;
    cfg.radius_max = 5.0;
    Rng rng(2);
    const Topology topo = sample_topology(cfg, rng);
    CHECK(dist(topo.device_positions[0], topo.bs_positions[0]) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("invalid radius ranges are rejected") {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}};
    cfg.devices_per_cell = {1};
    cfg.radius_min = 0.0;
    cfg.radius_max = 1.0;
    Rng rng(3);
    CHECK_THROWS_AS(sample_topology(cfg, rng), std::invalid_argument);
    cfg.radius_min = 2.0;
    CHECK_THROWS_AS(sample_topology(cfg, rng), std::invalid_argument);
}

TEST_CASE("device placement is uniform in area") {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}};
    cfg.devices_per_cell = {10000};
    cfg.radius_min = 1e-12;
    cfg.radius_max = 1.0;
    Rng rng(4);
    const Topology topo = sample_topology(cfg, rng);
    int inside = 0;
    for (const auto& p : topo.device_positions)
        if (std::hypot(p[0], p[1]) <= 0.5) ++inside;
    CHECK(std::abs(inside / 10000.0 - 0.25) < 0.02);

    // KS-style check: squared radius should be uniform on [0, 1].
    std::vector<double> r_sq;
    for (const auto& p : topo.device_positions) r_sq.push_back(p[0] * p[0] + p[1] * p[1]);
    std::sort(r_sq.begin(), r_sq.end());
    double ks = 0.0;
    for (size_t i = 0; i < r_sq.size(); ++i)
        ks = std::max(ks, std::abs(r_sq[i] - (i + 0.5) / r_sq.size()));
    CHECK(ks < 0.02);
}

TEST_CASE("pure LoS channel at unit distance is one") {
    ChannelParams params;
    params.alpha = 2.5;
    params.beta = 1e12;
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto h = sample_channel(1.0, params, rng);
        CHECK(std::abs(h - std::complex<double>(1.0, 0.0)) < 1e-5);
    }
}

TEST_CASE("Rayleigh second moment follows the pathloss law") {
    ChannelParams params;
    params.alpha = 2.5;
    params.beta = 0.0;
    Rng rng(6);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) sum += std::norm(sample_channel(4.0, params, rng));
    const double expected = std::pow(4.0, -2.5);
    CHECK(std::abs(sum / n - expected) / expected < 0.03);
}

TEST_CASE("5 dB Rician factor produces the documented mixing weights") {
    ChannelParams params;
    params.alpha = 2.5;
    params.beta = std::pow(10.0, 0.5);
    Rng rng(7);
    const int n = 200000;
    std::complex<double> mean{0.0, 0.0};
    double power = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto h = sample_channel(1.0, params, rng);
        mean += h;
        power += std::norm(h);
    }
    mean /= static_cast<double>(n);
    // E[h] = sqrt(beta/(1+beta)); Var = 1/(1+beta).
    CHECK(std::abs(mean.real() - 0.8717) < 0.005);
    CHECK(std::abs(mean.imag()) < 0.005);
    const double var = power / n - std::norm(mean);
    CHECK(std::abs(var - 0.4901 * 0.4901) < 0.005);
}

TEST_CASE("nonpositive distance is rejected") {
    ChannelParams params;
    Rng rng(8);
    CHECK_THROWS_AS(sample_channel(0.0, params, rng), std::invalid_argument);
    CHECK_THROWS_AS(sample_channel(-1.0, params, rng), std::invalid_argument);
}

TEST_CASE("doubling the distance scales the energy by 2^-alpha") {
    ChannelParams params;
    params.alpha = 2.5;
    params.beta = std::pow(10.0, 0.5);
    Rng rng(9);
    const int n = 100000;
    double e1 = 0.0, e2 = 0.0;
    for (int i = 0; i < n; ++i) e1 += std::norm(sample_channel(3.0, params, rng));
    for (int i = 0; i < n; ++i) e2 += std::norm(sample_channel(6.0, params, rng));
    CHECK(std::abs((e2 / e1) - std::pow(2.0, -2.5)) / std::pow(2.0, -2.5) < 0.05);
}

TEST_CASE("round realizations are deterministic given (seed, round)") {
    Rng topo_rng(10);
    GeometryConfig cfg = four_cell_config();
    const Topology topo = sample_topology(cfg, topo_rng);
    ChannelParams params;
    Rng r1(99, {7, 3}), r2(99, {7, 3});
    const ChannelSet a = realize_round(topo, params, r1);
    const ChannelSet b = realize_round(topo, params, r2);
    REQUIRE(a.downlink.size() == b.downlink.size());
    for (size_t i = 0; i < a.downlink.size(); ++i) CHECK(a.downlink[i] == b.downlink[i]);
    for (size_t i = 0; i < a.uplink.size(); ++i) CHECK(a.uplink[i] == b.uplink[i]);
    CHECK(channel_digest(a) == channel_digest(b));
}

TEST_CASE("gains are uncorrelated across rounds") {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}, {40.0, 0.0}};
    cfg.devices_per_cell = {1, 1};
    Rng topo_rng(11);
    const Topology topo = sample_topology(cfg, topo_rng);
    ChannelParams params;
    const int n = 10000;
    std::vector<double> x(n + 1);
    for (int t = 0; t <= n; ++t) {
        Rng rng(5, {static_cast<uint64_t>(t)});
        x[t] = realize_round(topo, params, rng).dl(0, 0).real();
    }
    double mx = 0.0;
    for (int t = 0; t <= n; ++t) mx += x[t];
    mx /= (n + 1);
    double num = 0.0, den = 0.0;
    for (int t = 0; t < n; ++t) num += (x[t] - mx) * (x[t + 1] - mx);
    for (int t = 0; t <= n; ++t) den += (x[t] - mx) * (x[t] - mx);
    CHECK(std::abs(num / den) < 0.05);
}

TEST_CASE("two cells with one device each yield four gains per block") {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}, {40.0, 0.0}};
    cfg.devices_per_cell = {1, 1};
    Rng rng(12);
    const Topology topo = sample_topology(cfg, rng);
    ChannelParams params;
    const ChannelSet cs = realize_round(topo, params, rng);
    CHECK(cs.downlink.size() == 4);  // 2 home + 2 cross
    CHECK(cs.uplink.size() == 4);
    for (const auto& h : cs.downlink) CHECK(std::isfinite(std::abs(h)));
    CHECK(std::abs(cs.dl_home(0)) > 0.0);
    CHECK(std::abs(cs.ul_home(1)) > 0.0);
}

TEST_CASE("shared blocks reuse the downlink draws for the uplink") {
    GeometryConfig cfg;
    cfg.bs_positions = {{0.0, 0.0}, {40.0, 0.0}};
    cfg.devices_per_cell = {2, 2};
    Rng rng(13);
    const Topology topo = sample_topology(cfg, rng);
    ChannelParams params;
    params.shared_blocks = true;
    Rng chan_rng(14);
    const ChannelSet cs = realize_round(topo, params, chan_rng);
    for (size_t i = 0; i < cs.downlink.size(); ++i) CHECK(cs.downlink[i] == cs.uplink[i]);
}
