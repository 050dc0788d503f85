#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "comppn/bcrb.hpp"
#include "comppn/errors.hpp"
#include "comppn/rng.hpp"

namespace comppn {

/// Inputs for the residual-amplitude analysis of one symbol: the variance of
/// the half-difference of the two phase-estimation errors, the symbol
/// magnitude and the receiver noise variance.
struct AmplitudeModel {
    double sigma2_eps_tilde = 0.0;
    double symbol_mag = 1.0;
    double sigma2_w = 1e-3;
};

struct AmplitudeStats {
    double mean;            // 2|s| - sigma2_eps |s|   (E[q] = 1)
    double error_variance;  // 2 sigma2_eps^2 |s|^2 + sigma2_w / 2
};

/// Moments of the small-error amplitude approximation
///   |y| ~ 2|s| - sigma2_eps q |s| + Re{w'},   q ~ chi^2_1.
inline AmplitudeStats amplitude_stats(const AmplitudeModel& m) {
    if (!(m.sigma2_eps_tilde >= 0.0)) throw config_error("sigma2_eps_tilde must be >= 0");
    AmplitudeStats s;
    s.mean = 2.0 * m.symbol_mag - m.sigma2_eps_tilde * m.symbol_mag;
    s.error_variance =
        2.0 * m.sigma2_eps_tilde * m.sigma2_eps_tilde * m.symbol_mag * m.symbol_mag + m.sigma2_w / 2.0;
    return s;
}

/// One draw from the approximate amplitude distribution above.
inline double sample_amplitude_approx(const AmplitudeModel& m, rng::Stream& stream) {
    const double z = stream.next_gaussian();
    const double q = z * z;  // chi^2_1
    const double wr = std::sqrt(m.sigma2_w / 2.0) * stream.next_gaussian();
    return 2.0 * m.symbol_mag - m.sigma2_eps_tilde * q * m.symbol_mag + wr;
}

/// One draw from the exact amplitude
///   |y| = sqrt((2|s| cos(eps) + Re w')^2 + (Im w')^2),  eps ~ N(0, sigma2_eps).
inline double sample_amplitude_exact(const AmplitudeModel& m, rng::Stream& stream) {
    const double eps = std::sqrt(m.sigma2_eps_tilde) * stream.next_gaussian();
    const double sw = std::sqrt(m.sigma2_w / 2.0);
    const double wr = sw * stream.next_gaussian();
    const double wi = sw * stream.next_gaussian();
    return std::hypot(2.0 * m.symbol_mag * std::cos(eps) + wr, wi);
}

/// Row of the approximation-error table: relative error of the mean amplitude
/// under the high-SNR step (a) alone, the small-error step (b) alone, and the
/// combined chain, all measured against the exact amplitude by Monte Carlo.
struct ApproxError {
    double snr_db;
    double sigma2_eps_tilde;
    double err_a;
    double err_b;
    double err_combined;
};

inline std::vector<ApproxError> validate_approximations(std::span<const double> sigma2_eps_grid,
                                                        std::span<const double> snr_grid, long mc,
                                                        std::uint64_t seed) {
    if (sigma2_eps_grid.empty() || snr_grid.empty())
        throw config_error("validate_approximations: grids must be nonempty");
    if (mc < 1) throw config_error("validate_approximations: mc must be >= 1");

    std::vector<ApproxError> table;
    std::uint64_t stream_index = 0;
    for (double snr_db : snr_grid) {
        for (double s2e : sigma2_eps_grid) {
            AmplitudeModel m;
            m.sigma2_eps_tilde = s2e;
            m.symbol_mag = 1.0;
            m.sigma2_w = std::pow(10.0, -snr_db / 10.0);
            const double sw = std::sqrt(m.sigma2_w / 2.0);

            rng::Stream stream = rng::derive_stream(seed, stream_index++);
            util::Kahan exact, only_a, only_b, combined;
            for (long i = 0; i < mc; ++i) {
                const double eps = std::sqrt(s2e) * stream.next_gaussian();
                const double wr = sw * stream.next_gaussian();
                const double wi = sw * stream.next_gaussian();
                const double ce = std::cos(eps);
                const double track = 2.0 * m.symbol_mag * ce + wr;
                exact.add(std::hypot(track, wi));
                only_a.add(track);
                const double small = 2.0 * m.symbol_mag * (1.0 - 0.5 * eps * eps) + wr;
                only_b.add(std::hypot(small, wi));
                combined.add(small);
            }
            const double inv = 1.0 / static_cast<double>(mc);
            const double e = exact.sum * inv;
            table.push_back({snr_db, s2e, std::abs(only_a.sum * inv - e) / e,
                             std::abs(only_b.sum * inv - e) / e, std::abs(combined.sum * inv - e) / e});
        }
    }
    return table;
}

/// Per-symbol sigma2_eps_tilde from the inverse BIM:
///   (var(eps1) + var(eps2) - 2 Cov(eps1, eps2)) / 4.
inline Eigen::VectorXd eps_tilde_from_bound(const BimResult& bim) {
    Eigen::VectorXd out(bim.n);
    for (int i = 0; i < bim.n; ++i)
        out(i) = 0.25 * (bim.mse_phi1(i) + bim.mse_phi2(i) - 2.0 * bim.cross_cov(i));
    return out;
}

}  // namespace comppn
