#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <vector>

#include "comppn/constellation.hpp"
#include "comppn/errors.hpp"

namespace comppn {

enum class LikMode { da, nda };

/// Per-sample inputs for the likelihood of y_n given the two phases.
/// DA evaluation requires `symbol`; NDA evaluation requires `constellation`.
struct SampleLikelihoodContext {
    cplx y;
    double sigma2_w = 1.0;
    cplx h1{1.0, 0.0};
    cplx h2{1.0, 0.0};
    const Constellation* constellation = nullptr;
    std::optional<cplx> symbol;
};

struct PhaseDerivs {
    Eigen::Vector2d grad;
    Eigen::Matrix2d hess;
};

namespace detail {

// Value and phase-derivatives of log f(y | phi1, phi2, s) for one symbol.
// With u_i = s h_i e^{j phi_i} and r = y - u_1 - u_2:
//   L      = -log(pi s2w) - |r|^2 / s2w
//   dL/dphi_i      = -(2/s2w) Im{conj(r) u_i}
//   d2L/dphi_i^2   = -(2/s2w) (|u_i|^2 + Re{conj(r) u_i})
//   d2L/dphi1dphi2 = -(2/s2w) Re{conj(u_2) u_1}
struct SymbolTerms {
    double loglik;
    double g1, g2;
    double h11, h12, h22;
};

inline SymbolTerms symbol_terms(cplx y, cplx s, cplx e1, cplx e2, double sigma2_w) {
    const cplx u1 = s * e1;
    const cplx u2 = s * e2;
    const cplx r = y - u1 - u2;
    const double inv = 2.0 / sigma2_w;
    SymbolTerms t;
    t.loglik = -std::log(std::numbers::pi * sigma2_w) - std::norm(r) / sigma2_w;
    const cplx ru1 = std::conj(r) * u1;
    const cplx ru2 = std::conj(r) * u2;
    t.g1 = -inv * ru1.imag();
    t.g2 = -inv * ru2.imag();
    t.h11 = -inv * (std::norm(u1) + ru1.real());
    t.h22 = -inv * (std::norm(u2) + ru2.real());
    t.h12 = -inv * (std::conj(u2) * u1).real();
    return t;
}

// Log-likelihood and derivatives of the uniform symbol mixture,
//   log f(y|phi1,phi2) = log (1/M) sum_s exp(L_s),
// combined in the log domain with a max shift. The quotient-rule form
//   H = sum p_s (H_s + g_s g_s^T) - g g^T,  g = sum p_s g_s,  p_s = softmax(L_s)
// is the derivative of the per-symbol sums of f_n and its partials.
struct MixtureTerms {
    double loglik;
    double g1, g2;
    double h11, h12, h22;
};

inline MixtureTerms mixture_terms(cplx y, const std::vector<cplx>& symbols, cplx e1, cplx e2,
                                  double sigma2_w) {
    const std::size_t m = symbols.size();
    thread_local std::vector<SymbolTerms> terms;
    terms.clear();
    terms.reserve(m);
    double lmax = -std::numeric_limits<double>::infinity();
    for (const cplx& s : symbols) {
        terms.push_back(symbol_terms(y, s, e1, e2, sigma2_w));
        lmax = std::max(lmax, terms.back().loglik);
    }
    double wsum = 0.0;
    double g1 = 0.0, g2 = 0.0, q11 = 0.0, q12 = 0.0, q22 = 0.0;
    for (const SymbolTerms& t : terms) {
        const double w = std::exp(t.loglik - lmax);
        wsum += w;
        g1 += w * t.g1;
        g2 += w * t.g2;
        q11 += w * (t.h11 + t.g1 * t.g1);
        q12 += w * (t.h12 + t.g1 * t.g2);
        q22 += w * (t.h22 + t.g2 * t.g2);
    }
    const double inv = 1.0 / wsum;
    MixtureTerms out;
    out.loglik = lmax + std::log(wsum) - std::log(static_cast<double>(m));
    out.g1 = g1 * inv;
    out.g2 = g2 * inv;
    out.h11 = q11 * inv - out.g1 * out.g1;
    out.h12 = q12 * inv - out.g1 * out.g2;
    out.h22 = q22 * inv - out.g2 * out.g2;
    return out;
}

}  // namespace detail

inline double loglik_da(const SampleLikelihoodContext& ctx, double phi1, double phi2) {
    if (!ctx.symbol) throw config_error("loglik_da requires a known symbol");
    return detail::symbol_terms(ctx.y, *ctx.symbol, ctx.h1 * std::polar(1.0, phi1),
                                ctx.h2 * std::polar(1.0, phi2), ctx.sigma2_w)
        .loglik;
}

inline double loglik_nda(const SampleLikelihoodContext& ctx, double phi1, double phi2) {
    if (ctx.constellation == nullptr) throw config_error("loglik_nda requires a constellation");
    return detail::mixture_terms(ctx.y, ctx.constellation->symbols(), ctx.h1 * std::polar(1.0, phi1),
                                 ctx.h2 * std::polar(1.0, phi2), ctx.sigma2_w)
        .loglik;
}

/// Analytic gradient and Hessian of the chosen log-likelihood with respect to
/// (phi1, phi2). The returned Hessian is exactly symmetric.
inline PhaseDerivs loglik_derivs(const SampleLikelihoodContext& ctx, double phi1, double phi2,
                                 LikMode mode) {
    const cplx e1 = ctx.h1 * std::polar(1.0, phi1);
    const cplx e2 = ctx.h2 * std::polar(1.0, phi2);
    PhaseDerivs d;
    if (mode == LikMode::da) {
        if (!ctx.symbol) throw config_error("loglik_derivs(da) requires a known symbol");
        const auto t = detail::symbol_terms(ctx.y, *ctx.symbol, e1, e2, ctx.sigma2_w);
        d.grad << t.g1, t.g2;
        d.hess << t.h11, t.h12, t.h12, t.h22;
    } else {
        if (ctx.constellation == nullptr) throw config_error("loglik_derivs(nda) requires a constellation");
        const auto t = detail::mixture_terms(ctx.y, ctx.constellation->symbols(), e1, e2, ctx.sigma2_w);
        d.grad << t.g1, t.g2;
        d.hess << t.h11, t.h12, t.h12, t.h22;
    }
    return d;
}

}  // namespace comppn
