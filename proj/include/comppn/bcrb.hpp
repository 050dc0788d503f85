#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <string>

#include "comppn/errors.hpp"
#include "comppn/fisher.hpp"
#include "comppn/prior.hpp"

namespace comppn {

/// Bayesian information matrix B = E_phi[F(phi)] + C^{-1}, its inverse, and
/// the per-symbol quantities read off the inverse.
///
/// For the reduced rho = 1 model the matrix is N x N; both phases coincide,
/// so mse_phi1 == mse_phi2 == cross_cov and sigma2_eps_tilde is exactly zero.
struct BimResult {
    Eigen::MatrixXd bim;
    Eigen::MatrixXd bim_inv;
    Eigen::VectorXd mse_phi1;           // [B^{-1}]_{n,n}
    Eigen::VectorXd mse_phi2;           // [B^{-1}]_{N+n,N+n}
    Eigen::VectorXd cross_cov;          // [B^{-1}]_{n,N+n}
    Eigen::VectorXd sigma2_eps_tilde;   // (mse1 + mse2 - 2 cross) / 4
    FisherBlocks::Mode mode = FisherBlocks::Mode::mbcrb;
    bool reduced = false;
    int n = 0;
};

namespace detail {

inline void throw_not_pd(const Eigen::MatrixXd& b) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::EigenvaluesOnly);
    throw numeric_error("Bayesian information matrix is not positive definite (smallest eigenvalue " +
                        std::to_string(es.eigenvalues().minCoeff()) + ")");
}

}  // namespace detail

inline BimResult assemble_bim(const FisherBlocks& fisher, const PriorModel& prior) {
    if (fisher.reduced != prior.reduced)
        throw config_error("assemble_bim: Fisher term and prior disagree on the rho = 1 reduction");

    const int n = prior.n;
    BimResult r;
    r.mode = fisher.mode;
    r.reduced = prior.reduced;
    r.n = n;

    if (!prior.reduced) {
        r.bim = prior.precision;
        switch (fisher.mode) {
            case FisherBlocks::Mode::da:
                if (fisher.gamma_da.size() != n)
                    throw config_error("assemble_bim: DA Fisher length differs from prior block length");
                r.bim.diagonal().head(n) += fisher.gamma_da;
                r.bim.diagonal().tail(n) += fisher.gamma_da;
                break;
            case FisherBlocks::Mode::mbcrb:
                r.bim.diagonal().array() += fisher.gamma11;
                break;
            case FisherBlocks::Mode::nda:
                r.bim.diagonal().array() += fisher.gamma11;
                r.bim.block(0, n, n, n).diagonal().array() += fisher.gamma12;
                r.bim.block(n, 0, n, n).diagonal().array() += fisher.gamma12;
                break;
        }
    } else {
        r.bim = prior.precision;
        if (fisher.mode == FisherBlocks::Mode::da) {
            if (fisher.gamma_da.size() != n)
                throw config_error("assemble_bim: DA Fisher length differs from prior block length");
            r.bim.diagonal() += fisher.gamma_da;
        } else {
            r.bim.diagonal().array() += fisher.gamma11;
        }
    }

    Eigen::LLT<Eigen::MatrixXd> llt(r.bim);
    if (llt.info() != Eigen::Success) detail::throw_not_pd(r.bim);
    r.bim_inv = llt.solve(Eigen::MatrixXd::Identity(r.bim.rows(), r.bim.cols()));
    r.bim_inv = ((r.bim_inv + r.bim_inv.transpose()) * 0.5).eval();

    r.mse_phi1.resize(n);
    r.mse_phi2.resize(n);
    r.cross_cov.resize(n);
    r.sigma2_eps_tilde.resize(n);
    if (!prior.reduced) {
        for (int i = 0; i < n; ++i) {
            r.mse_phi1(i) = r.bim_inv(i, i);
            r.mse_phi2(i) = r.bim_inv(n + i, n + i);
            r.cross_cov(i) = r.bim_inv(i, n + i);
            // Quadratic form v^T B^{-1} v / 4 with v = e_i - e_{N+i}, evaluated
            // through the Cholesky factor so the result is nonnegative by
            // construction.
            Eigen::VectorXd v = Eigen::VectorXd::Zero(2 * n);
            v(i) = 1.0;
            v(n + i) = -1.0;
            const Eigen::VectorXd w = llt.matrixL().solve(v);
            r.sigma2_eps_tilde(i) = 0.25 * w.squaredNorm();
        }
    } else {
        for (int i = 0; i < n; ++i) {
            r.mse_phi1(i) = r.bim_inv(i, i);
            r.mse_phi2(i) = r.bim_inv(i, i);
            r.cross_cov(i) = r.bim_inv(i, i);
            r.sigma2_eps_tilde(i) = 0.0;
        }
    }
    return r;
}

/// First-order propagation of the NDA Monte-Carlo standard errors to the
/// per-symbol bound: the bound is re-assembled with gamma11 and gamma12 each
/// shifted by one standard error and the deviations are combined in
/// quadrature. Zero for DA/MBCRB.
inline Eigen::VectorXd bound_stderr(const FisherBlocks& fisher, const PriorModel& prior,
                                    const BimResult& base) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(prior.n);
    if (fisher.mode != FisherBlocks::Mode::nda) return out;
    if (fisher.stderr11 == 0.0 && fisher.stderr12 == 0.0) return out;

    FisherBlocks f11 = fisher;
    f11.gamma11 += fisher.stderr11;
    const Eigen::VectorXd d11 = assemble_bim(f11, prior).mse_phi1 - base.mse_phi1;
    Eigen::VectorXd d12 = Eigen::VectorXd::Zero(prior.n);
    if (!fisher.reduced) {
        FisherBlocks f12 = fisher;
        f12.gamma12 += fisher.stderr12;
        d12 = assemble_bim(f12, prior).mse_phi1 - base.mse_phi1;
    }
    for (int i = 0; i < prior.n; ++i) out(i) = std::hypot(d11(i), d12(i));
    return out;
}

}  // namespace comppn
