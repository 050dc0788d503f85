#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "comppn/model.hpp"
#include "comppn/rng.hpp"

namespace comppn {

/// Samples one block of correlated Wiener phase trajectories.
///
/// Initial phases: receiver ~ N(0, sigma2_init); the two transmit initial
/// phases are jointly Gaussian, each with variance sigma2_init and covariance
/// rho * sigma2_init. Innovations: zeta_t2 = rho * z1 + sqrt(1 - rho^2) * z2
/// so that each marginal variance is exactly sigma2_zeta and
/// Cov(zeta_t1, zeta_t2) = rho * sigma2_zeta. At rho = 1 the two paths are
/// identical sample by sample.
inline PhaseTrajectories sample_trajectories(const PnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    rng::Stream stream(seed);

    const double s0 = std::sqrt(cfg.sigma2_init);
    const double sz = std::sqrt(cfg.sigma2_zeta);
    const double c = cfg.rho;
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));

    const double g_t1 = stream.next_gaussian();
    const double g_t2 = stream.next_gaussian();
    const double g_r = stream.next_gaussian();
    double phi_t1 = s0 * g_t1;
    double phi_t2 = s0 * (c * g_t1 + s * g_t2);
    double phi_r = s0 * g_r;

    PhaseTrajectories traj;
    traj.phi1.resize(cfg.n);
    traj.phi2.resize(cfg.n);
    traj.phi1[0] = phi_t1 + phi_r;
    traj.phi2[0] = phi_t2 + phi_r;
    for (int i = 1; i < cfg.n; ++i) {
        const double z1 = stream.next_gaussian();
        const double z2 = stream.next_gaussian();
        const double zr = stream.next_gaussian();
        phi_t1 += sz * z1;
        phi_t2 += sz * (c * z1 + s * z2);
        phi_r += sz * zr;
        traj.phi1[i] = phi_t1 + phi_r;
        traj.phi2[i] = phi_t2 + phi_r;
    }
    return traj;
}

/// y_n = s_n (h1 e^{j phi1_n} + h2 e^{j phi2_n}) + w_n with w_n ~ CN(0, sigma2_w).
inline ReceivedBlock simulate_block(const PhaseTrajectories& traj, const std::vector<cplx>& symbols,
                                    cplx h1, cplx h2, double sigma2_w, std::uint64_t noise_seed) {
    const std::size_t n = traj.phi1.size();
    if (symbols.size() != n || traj.phi2.size() != n)
        throw config_error("simulate_block: trajectory and symbol lengths differ");
    rng::Stream stream(noise_seed);
    const double sw = std::sqrt(sigma2_w / 2.0);

    ReceivedBlock block;
    block.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const cplx mean = symbols[i] * (h1 * std::polar(1.0, traj.phi1[i]) + h2 * std::polar(1.0, traj.phi2[i]));
        block.y[i] = mean + cplx(sw * stream.next_gaussian(), sw * stream.next_gaussian());
    }
    block.symbols = symbols;
    block.phases = traj;
    return block;
}

}  // namespace comppn
