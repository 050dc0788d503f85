#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "comppn/constellation.hpp"
#include "comppn/errors.hpp"

namespace comppn {

/// Wiener phase-noise configuration for one block.
///
/// sigma2_zeta  per-step innovation variance of one oscillator [rad^2]
/// rho          synchronization factor between the two transmit LOs, in [0,1]
/// sigma2_init  variance of each initial phase [rad^2]
/// n            block length in symbols
struct PnConfig {
    double sigma2_zeta = 1e-3;
    double rho = 0.0;
    double sigma2_init = 1e4;
    int n = 100;

    void validate() const {
        if (!(sigma2_zeta >= 0.0)) throw config_error("sigma2_zeta must be >= 0");
        if (!(rho >= 0.0 && rho <= 1.0)) throw config_error("rho must lie in [0, 1]");
        if (!(sigma2_init > 0.0)) throw config_error("sigma2_init must be > 0");
        if (n < 1) throw config_error("n must be >= 1");
    }
};

/// AWGN channel with quasi-static known gains (default unity).
/// SNR is defined as E_s / sigma2_w, i.e. average transmit-symbol energy over
/// the complex noise variance.
struct ChannelConfig {
    double snr_db = 15.0;
    cplx h1{1.0, 0.0};
    cplx h2{1.0, 0.0};

    double sigma2_w(double avg_energy = 1.0) const {
        const double s2 = avg_energy * std::pow(10.0, -snr_db / 10.0);
        if (!(s2 > 0.0)) throw config_error("snr_db yields non-positive noise variance");
        return s2;
    }
};

/// Unwrapped phase paths seen by the receiver, phi_i[n] = transmit PN i +
/// receiver PN, one value per symbol.
struct PhaseTrajectories {
    std::vector<double> phi1;
    std::vector<double> phi2;
};

/// One observed block. Symbols are present in data-aided scenarios, phases
/// when the block was simulated.
struct ReceivedBlock {
    std::vector<cplx> y;
    std::optional<std::vector<cplx>> symbols;
    std::optional<PhaseTrajectories> phases;

    std::size_t size() const { return y.size(); }
};

}  // namespace comppn
