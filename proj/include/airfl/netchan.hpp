#pragma once

#include <array>
#include <complex>
#include <stdexcept>
#include <vector>

#include "airfl/common.hpp"
#include "airfl/rng.hpp"

namespace airfl {

struct GeometryConfig {
    std::vector<std::array<double, 2>> bs_positions;  // meters
    std::vector<int> devices_per_cell;                // K_m
    double radius_min = 1.0;                          // meters
    double radius_max = 20.0;
};

struct Topology {
    std::vector<std::array<double, 2>> bs_positions;
    std::vector<std::array<double, 2>> device_positions;
    std::vector<int> association;  // device -> cell
    int cells = 0;                 // M
    std::vector<int> devices_per_cell;
    double radius_min = 0.0;
    double radius_max = 0.0;

    int total_devices() const { return static_cast<int>(device_positions.size()); }

    /// Global indices of the devices in cell m, in ascending order.
    std::vector<int> cell_devices(int m) const {
        std::vector<int> out;
        for (int k = 0; k < total_devices(); ++k)
            if (association[k] == m) out.push_back(k);
        return out;
    }
};

struct ChannelParams {
    double alpha = 2.5;        // pathloss exponent
    double beta = 3.16227766;  // Rician factor, linear
    bool shared_blocks = false;
};

// One round of complex gains, row-major (device, bs). downlink[k*M+m] is the
// gain from BS m to device k during the downlink block; uplink[k*M+m] the
// gain from device k to BS m during the uplink block.
struct ChannelSet {
    int cells = 0;
    int devices = 0;
    std::vector<int> association;
    CVec downlink;
    CVec uplink;

    std::complex<double> dl(int k, int m) const { return downlink[static_cast<size_t>(k) * cells + m]; }
    std::complex<double> ul(int k, int m) const { return uplink[static_cast<size_t>(k) * cells + m]; }
    std::complex<double> dl_home(int k) const { return dl(k, association[k]); }
    std::complex<double> ul_home(int k) const { return ul(k, association[k]); }
    int home(int k) const { return association[k]; }
};

inline Topology sample_topology(const GeometryConfig& cfg, Rng& rng) {
    if (!(cfg.radius_min > 0.0) || cfg.radius_min > cfg.radius_max)
        throw std::invalid_argument("sample_topology: radius range must satisfy 0 < min <= max");
    if (cfg.bs_positions.empty()) throw std::invalid_argument("sample_topology: need at least one BS");
    if (cfg.devices_per_cell.size() != cfg.bs_positions.size())
        throw std::invalid_argument("sample_topology: devices_per_cell size must match BS count");
    for (int k : cfg.devices_per_cell)
        if (k < 1) throw std::invalid_argument("sample_topology: every cell needs at least one device");

    Topology topo;
    topo.bs_positions = cfg.bs_positions;
    topo.devices_per_cell = cfg.devices_per_cell;
    topo.cells = static_cast<int>(cfg.bs_positions.size());
    topo.radius_min = cfg.radius_min;
    topo.radius_max = cfg.radius_max;
    const double r0sq = cfg.radius_min * cfg.radius_min;
    const double r1sq = cfg.radius_max * cfg.radius_max;
    for (int m = 0; m < topo.cells; ++m) {
        for (int i = 0; i < cfg.devices_per_cell[m]; ++i) {
            // Uniform over the annulus: area-uniform radius, uniform angle.
            const double r = std::sqrt(r0sq + (r1sq - r0sq) * rng.uniform01());
            const double phi = rng.uniform(0.0, 6.283185307179586476925286766559);
            topo.device_positions.push_back({cfg.bs_positions[m][0] + r * std::cos(phi),
                                             cfg.bs_positions[m][1] + r * std::sin(phi)});
            topo.association.push_back(m);
        }
    }
    return topo;
}

/// Rician fading with pathloss: h = d^{-alpha/2} (sqrt(beta/(1+beta)) h_LoS
/// + sqrt(1/(1+beta)) h_NLoS), h_LoS fixed to 1, h_NLoS ~ CN(0, 1).
inline std::complex<double> sample_channel(double distance, const ChannelParams& params, Rng& rng) {
    if (!(distance > 0.0)) throw std::invalid_argument("sample_channel: distance must be positive");
    const double pl = std::pow(distance, -params.alpha / 2.0);
    const double w_los = std::sqrt(params.beta / (1.0 + params.beta));
    const double w_nlos = std::sqrt(1.0 / (1.0 + params.beta));
    const std::complex<double> h_los{1.0, 0.0};
    return pl * (w_los * h_los + w_nlos * rng.cnormal(1.0));
}

namespace detail {
inline double link_distance(const Topology& topo, int k, int m) {
    const double dx = topo.device_positions[k][0] - topo.bs_positions[m][0];
    const double dy = topo.device_positions[k][1] - topo.bs_positions[m][1];
    return std::sqrt(dx * dx + dy * dy);
}
}  // namespace detail

// Independent gains for every (device, BS) pair, one draw set per block.
// Home links are redrawn if their magnitude underflows 1e-30 (they are
// divided by during de-normalization and phase alignment).
inline ChannelSet realize_round(const Topology& topo, const ChannelParams& params, Rng& rng) {
    ChannelSet cs;
    cs.cells = topo.cells;
    cs.devices = topo.total_devices();
    cs.association = topo.association;
    cs.downlink.resize(static_cast<size_t>(cs.devices) * cs.cells);
    cs.uplink.resize(static_cast<size_t>(cs.devices) * cs.cells);
    auto draw_block = [&](CVec& block) {
        for (int k = 0; k < cs.devices; ++k) {
            for (int m = 0; m < cs.cells; ++m) {
                const double d = detail::link_distance(topo, k, m);
                std::complex<double> h = sample_channel(d, params, rng);
                if (m == topo.association[k])
                    while (std::abs(h) < 1e-30) h = sample_channel(d, params, rng);
                block[static_cast<size_t>(k) * cs.cells + m] = h;
            }
        }
    };
    draw_block(cs.downlink);
    if (params.shared_blocks)
        cs.uplink = cs.downlink;
    else
        draw_block(cs.uplink);
    return cs;
}

inline uint64_t channel_digest(const ChannelSet& cs) {
    uint64_t h = fnv1a_init();
    for (const auto& z : cs.downlink) {
        fnv1a_add(h, z.real());
        fnv1a_add(h, z.imag());
    }
    for (const auto& z : cs.uplink) {
        fnv1a_add(h, z.real());
        fnv1a_add(h, z.imag());
    }
    return h;
}

}  // namespace airfl
