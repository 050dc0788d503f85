#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "comppn/errors.hpp"
#include "comppn/model.hpp"

namespace comppn {

inline constexpr double kRhoDegenerate = 1e-6;  // general path requires rho <= 1 - kRhoDegenerate

/// Gaussian prior of the stacked phase vector [phi1_1..N, phi2_1..N].
///
/// The covariance factors exactly as C = A (x) K with
///   A = [[2, 1+rho], [1+rho, 2]],
///   K_{l,k} = sigma2_init + sigma2_zeta * min(l-1, k-1),
/// so the precision is A^{-1} (x) K^{-1} with K^{-1} tridiagonal (Gauss-Markov
/// structure). For rho = 1 the two paths coincide and the reduced N x N model
/// for the single common phase is used instead (covariance 2K, i.e. initial
/// variance 2*sigma2_init and step variance 2*sigma2_zeta).
class PriorModel {
public:
    Eigen::MatrixXd cov;        // 2N x 2N (general) or N x N (reduced)
    Eigen::MatrixXd precision;  // exact inverse of cov

    bool reduced = false;
    double rho = 0.0;
    double sigma2_zeta = 0.0;
    double sigma2_init = 0.0;
    int n = 0;

    // Structured pieces used by the O(N) solvers.
    Eigen::Matrix2d a;
    Eigen::Matrix2d a_inv;
    Eigen::VectorXd kinv_diag;  // tridiagonal K^{-1}: diagonal
    double kinv_off = 0.0;      // tridiagonal K^{-1}: constant off-diagonal
};

namespace detail {

// Random-walk covariance K_{l,k} = s0 + sz * min(l-1, k-1), 1-based l,k.
inline Eigen::MatrixXd walk_covariance(int n, double s0, double sz) {
    Eigen::MatrixXd k(n, n);
    for (int l = 0; l < n; ++l)
        for (int m = 0; m < n; ++m) k(l, m) = s0 + sz * static_cast<double>(std::min(l, m));
    return k;
}

// Exact tridiagonal inverse of the random-walk covariance. Requires sz > 0
// for n >= 2; for n == 1 the inverse is simply 1/s0.
inline void walk_precision(int n, double s0, double sz, Eigen::VectorXd& diag, double& off) {
    diag.resize(n);
    if (n == 1) {
        diag(0) = 1.0 / s0;
        off = 0.0;
        return;
    }
    if (!(sz > 0.0))
        throw config_error("sigma2_zeta must be > 0 for n >= 2 (the prior precision is undefined "
                           "for a degenerate random walk; use a small positive value)");
    const double inv_sz = 1.0 / sz;
    diag(0) = 1.0 / s0 + inv_sz;
    for (int i = 1; i + 1 < n; ++i) diag(i) = 2.0 * inv_sz;
    diag(n - 1) = inv_sz;
    off = -inv_sz;
}

inline Eigen::MatrixXd dense_tridiag(const Eigen::VectorXd& diag, double off) {
    const int n = static_cast<int>(diag.size());
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        m(i, i) = diag(i);
        if (i + 1 < n) {
            m(i, i + 1) = off;
            m(i + 1, i) = off;
        }
    }
    return m;
}

}  // namespace detail

/// Builds C and its exact structured inverse for rho <= 1 - 1e-6.
inline PriorModel build_covariance(const PnConfig& cfg) {
    cfg.validate();
    // Slack of a few ulps so a textual "0.999999" is accepted as the boundary.
    if (1.0 - cfg.rho < kRhoDegenerate * (1.0 - 1e-9))
        throw config_error("rho > 1 - 1e-6: the joint prior is (numerically) singular; "
                           "use reduced_model_rho1 for the fully synchronized case");

    PriorModel prior;
    prior.reduced = false;
    prior.rho = cfg.rho;
    prior.sigma2_zeta = cfg.sigma2_zeta;
    prior.sigma2_init = cfg.sigma2_init;
    prior.n = cfg.n;

    prior.a << 2.0, 1.0 + cfg.rho, 1.0 + cfg.rho, 2.0;
    const double det = (1.0 - cfg.rho) * (3.0 + cfg.rho);
    prior.a_inv << 2.0 / det, -(1.0 + cfg.rho) / det, -(1.0 + cfg.rho) / det, 2.0 / det;

    const Eigen::MatrixXd k = detail::walk_covariance(cfg.n, cfg.sigma2_init, cfg.sigma2_zeta);
    detail::walk_precision(cfg.n, cfg.sigma2_init, cfg.sigma2_zeta, prior.kinv_diag, prior.kinv_off);
    const Eigen::MatrixXd kinv = detail::dense_tridiag(prior.kinv_diag, prior.kinv_off);

    const int n = cfg.n;
    prior.cov.resize(2 * n, 2 * n);
    prior.precision.resize(2 * n, 2 * n);
    for (int br = 0; br < 2; ++br)
        for (int bc = 0; bc < 2; ++bc) {
            prior.cov.block(br * n, bc * n, n, n) = prior.a(br, bc) * k;
            prior.precision.block(br * n, bc * n, n, n) = prior.a_inv(br, bc) * kinv;
        }
    return prior;
}

/// Exact model for rho = 1: the two phase paths coincide, leaving one Wiener
/// process with initial variance 2*sigma2_init and step variance
/// 2*sigma2_zeta. The received useful signal becomes 2 * s_n * e^{j phi_n},
/// which the bound engine accounts for with the combined-amplitude Fisher
/// term.
inline PriorModel reduced_model_rho1(const PnConfig& cfg) {
    cfg.validate();
    if (cfg.rho != 1.0) throw config_error("reduced_model_rho1 requires rho == 1");

    PriorModel prior;
    prior.reduced = true;
    prior.rho = 1.0;
    prior.sigma2_zeta = cfg.sigma2_zeta;
    prior.sigma2_init = cfg.sigma2_init;
    prior.n = cfg.n;
    prior.a = Eigen::Matrix2d::Identity();
    prior.a_inv = Eigen::Matrix2d::Identity();

    const double s0 = 2.0 * cfg.sigma2_init;
    const double sz = 2.0 * cfg.sigma2_zeta;
    prior.cov = detail::walk_covariance(cfg.n, s0, sz);
    detail::walk_precision(cfg.n, s0, sz, prior.kinv_diag, prior.kinv_off);
    prior.precision = detail::dense_tridiag(prior.kinv_diag, prior.kinv_off);
    return prior;
}

}  // namespace comppn
