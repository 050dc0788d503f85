#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "comppn/constellation.hpp"
#include "comppn/errors.hpp"
#include "comppn/likelihood.hpp"
#include "comppn/rng.hpp"
#include "comppn/util.hpp"

namespace comppn {

/// Fisher term E_phi[F(phi)] of the Bayesian information matrix.
///
/// DA and MBCRB are block-diagonal: blockdiag(Gamma, Gamma) with Gamma
/// diagonal. The NDA term is [[g11 I, g12 I], [g12 I, g11 I]]; g11 and g12
/// have no closed form and are estimated by Monte Carlo. `reduced` marks the
/// combined-amplitude variant consumed together with the rho = 1 prior.
struct FisherBlocks {
    enum class Mode { da, mbcrb, nda };

    Mode mode = Mode::mbcrb;
    bool reduced = false;
    Eigen::VectorXd gamma_da;   // DA only: per-symbol diagonal of Gamma
    double gamma11 = 0.0;       // NDA/MBCRB scalar (gamma22 == gamma11)
    double gamma12 = 0.0;       // NDA cross term (gamma21 == gamma12), 0 for MBCRB
    double stderr11 = 0.0;      // NDA Monte-Carlo standard errors
    double stderr12 = 0.0;

    struct McMeta {
        std::uint64_t seed = 0;
        int delta_grid = 0;
        long samples_per_point = 0;
    } meta;
};

inline const char* to_string(FisherBlocks::Mode m) {
    switch (m) {
        case FisherBlocks::Mode::da: return "da";
        case FisherBlocks::Mode::mbcrb: return "mbcrb";
        case FisherBlocks::Mode::nda: return "nda";
    }
    return "?";
}

/// DA: [Gamma]_{n,n} = 2 |s_n|^2 / sigma2_w.
inline FisherBlocks fisher_da(std::span<const cplx> symbols, double sigma2_w) {
    if (!(sigma2_w > 0.0)) throw config_error("fisher_da: sigma2_w must be > 0");
    FisherBlocks f;
    f.mode = FisherBlocks::Mode::da;
    f.gamma_da.resize(static_cast<Eigen::Index>(symbols.size()));
    for (std::size_t i = 0; i < symbols.size(); ++i)
        f.gamma_da(static_cast<Eigen::Index>(i)) = 2.0 * std::norm(symbols[i]) / sigma2_w;
    return f;
}

/// MBCRB: [Gamma]_{n,n} = 2 E_s / sigma2_w.
inline FisherBlocks fisher_mbcrb(const Constellation& c, double sigma2_w) {
    if (!(sigma2_w > 0.0)) throw config_error("fisher_mbcrb: sigma2_w must be > 0");
    FisherBlocks f;
    f.mode = FisherBlocks::Mode::mbcrb;
    f.gamma11 = 2.0 * c.avg_energy() / sigma2_w;
    f.gamma12 = 0.0;
    return f;
}

namespace detail {

struct McAccumulator {
    util::Kahan sum11, sum12, sq11, sq12;
    long count = 0;

    void add(double x11, double x12) {
        sum11.add(x11);
        sum12.add(x12);
        sq11.add(x11 * x11);
        sq12.add(x12 * x12);
        ++count;
    }
};

struct McPointResult {
    double mean11 = 0.0, mean12 = 0.0;
    double var11 = 0.0, var12 = 0.0;  // sample variances
    long count = 0;
};

inline McPointResult finish(const McAccumulator& acc) {
    McPointResult r;
    r.count = acc.count;
    const double m = static_cast<double>(acc.count);
    r.mean11 = acc.sum11.sum / m;
    r.mean12 = acc.sum12.sum / m;
    if (acc.count > 1) {
        r.var11 = std::max(0.0, (acc.sq11.sum - m * r.mean11 * r.mean11) / (m - 1.0));
        r.var12 = std::max(0.0, (acc.sq12.sum - m * r.mean12 * r.mean12) / (m - 1.0));
    }
    return r;
}

inline constexpr long kMcChunk = 8192;

}  // namespace detail

/// NDA gammas by Monte Carlo. The expectation over the phase prior reduces to
/// a 1-D average over the phase difference Delta (common-rotation invariance
/// of the likelihood plus the high-variance prior, which makes Delta
/// effectively uniform). For each midpoint Delta on a uniform grid over
/// [0, 2pi) we draw s uniformly from the alphabet, draw
/// y ~ CN(s (e^{j Delta/2} + e^{-j Delta/2}), sigma2_w), and average the
/// analytic mixture Hessian at (Delta/2, -Delta/2). Swap symmetry is applied
/// per sample, so gamma11 == gamma22 holds exactly by construction.
inline FisherBlocks fisher_nda(const Constellation& c, double sigma2_w, long mc_per_point,
                               int delta_grid, std::uint64_t seed, int threads = 1) {
    if (!(sigma2_w > 0.0)) throw config_error("fisher_nda: sigma2_w must be > 0");
    if (mc_per_point < 1) throw config_error("fisher_nda: mc_per_point must be >= 1");
    if (delta_grid < 1) throw config_error("fisher_nda: delta_grid must be >= 1");

    const std::vector<cplx>& symbols = c.symbols();
    const double sw = std::sqrt(sigma2_w / 2.0);
    std::vector<detail::McPointResult> per_point(static_cast<std::size_t>(delta_grid));

    util::parallel_for(static_cast<std::size_t>(delta_grid), threads, [&](std::size_t g) {
        const double delta =
            2.0 * std::numbers::pi * (static_cast<double>(g) + 0.5) / static_cast<double>(delta_grid);
        const cplx e1 = std::polar(1.0, delta / 2.0);
        const cplx e2 = std::polar(1.0, -delta / 2.0);
        // Per-symbol means for this grid point.
        std::vector<cplx> means(symbols.size());
        for (std::size_t k = 0; k < symbols.size(); ++k) means[k] = symbols[k] * (e1 + e2);

        detail::McAccumulator acc;
        const long chunks = (mc_per_point + detail::kMcChunk - 1) / detail::kMcChunk;
        for (long chunk = 0; chunk < chunks; ++chunk) {
            rng::Stream stream = rng::derive_stream(
                seed, (static_cast<std::uint64_t>(g) << 32) | static_cast<std::uint64_t>(chunk));
            const long lo = chunk * detail::kMcChunk;
            const long hi = std::min(mc_per_point, lo + detail::kMcChunk);
            for (long i = lo; i < hi; ++i) {
                const std::size_t k = stream.next_index(symbols.size());
                const cplx y = means[k] + cplx(sw * stream.next_gaussian(), sw * stream.next_gaussian());
                const auto t = detail::mixture_terms(y, symbols, e1, e2, sigma2_w);
                const double x11 = -0.5 * (t.h11 + t.h22);
                const double x12 = -t.h12;
                if (!std::isfinite(x11) || !std::isfinite(x12))
                    throw numeric_error("fisher_nda: non-finite Hessian sample at grid point " +
                                        std::to_string(g) + ", sample " + std::to_string(i));
                acc.add(x11, x12);
            }
        }
        per_point[g] = detail::finish(acc);
    });

    FisherBlocks f;
    f.mode = FisherBlocks::Mode::nda;
    f.meta = {seed, delta_grid, mc_per_point};
    util::Kahan m11, m12;
    double var_of_mean11 = 0.0, var_of_mean12 = 0.0;
    for (const auto& p : per_point) {
        m11.add(p.mean11);
        m12.add(p.mean12);
        var_of_mean11 += p.var11 / static_cast<double>(p.count);
        var_of_mean12 += p.var12 / static_cast<double>(p.count);
    }
    const double g = static_cast<double>(delta_grid);
    f.gamma11 = m11.sum / g;
    f.gamma12 = m12.sum / g;
    f.stderr11 = std::sqrt(var_of_mean11) / g;
    f.stderr12 = std::sqrt(var_of_mean12) / g;
    return f;
}

/// Combined-amplitude Fisher terms for the rho = 1 model, where the useful
/// signal is 2 s_n e^{j phi_n}.
inline FisherBlocks fisher_da_reduced(std::span<const cplx> symbols, double sigma2_w) {
    FisherBlocks f = fisher_da(symbols, sigma2_w);
    f.gamma_da *= 4.0;  // |2 s_n|^2 = 4 |s_n|^2
    f.reduced = true;
    return f;
}

inline FisherBlocks fisher_mbcrb_reduced(const Constellation& c, double sigma2_w) {
    FisherBlocks f = fisher_mbcrb(c, sigma2_w);
    f.gamma11 *= 4.0;
    f.reduced = true;
    return f;
}

/// rho = 1 NDA Fisher: E[-d^2/dphi^2 log (1/M) sum_s f(y | phi, s)] for the
/// single common phase with per-symbol mean 2 s. Rotation invariance lets the
/// expectation be taken at phi = 0.
inline FisherBlocks fisher_nda_reduced(const Constellation& c, double sigma2_w, long samples,
                                       std::uint64_t seed, int threads = 1) {
    if (!(sigma2_w > 0.0)) throw config_error("fisher_nda_reduced: sigma2_w must be > 0");
    if (samples < 1) throw config_error("fisher_nda_reduced: samples must be >= 1");

    const std::vector<cplx>& symbols = c.symbols();
    std::vector<cplx> means(symbols.size());
    for (std::size_t k = 0; k < symbols.size(); ++k) means[k] = 2.0 * symbols[k];
    const double sw = std::sqrt(sigma2_w / 2.0);
    const double inv = 2.0 / sigma2_w;
    const double log_norm = -std::log(std::numbers::pi * sigma2_w);

    const long chunks = (samples + detail::kMcChunk - 1) / detail::kMcChunk;
    std::vector<detail::McPointResult> partial(static_cast<std::size_t>(chunks));

    util::parallel_for(static_cast<std::size_t>(chunks), threads, [&](std::size_t chunk) {
        rng::Stream stream = rng::derive_stream(seed, static_cast<std::uint64_t>(chunk));
        const long lo = static_cast<long>(chunk) * detail::kMcChunk;
        const long hi = std::min(samples, lo + detail::kMcChunk);
        detail::McAccumulator acc;
        std::vector<double> logw(symbols.size()), gs(symbols.size()), hs(symbols.size());
        for (long i = lo; i < hi; ++i) {
            const std::size_t k = stream.next_index(symbols.size());
            const cplx y = means[k] + cplx(sw * stream.next_gaussian(), sw * stream.next_gaussian());
            double lmax = -std::numeric_limits<double>::infinity();
            for (std::size_t s = 0; s < means.size(); ++s) {
                const cplx u = means[s];  // phi = 0
                const cplx r = y - u;
                const cplx ru = std::conj(r) * u;
                logw[s] = log_norm - std::norm(r) / sigma2_w;
                gs[s] = -inv * ru.imag();
                hs[s] = -inv * (std::norm(u) + ru.real());
                lmax = std::max(lmax, logw[s]);
            }
            double wsum = 0.0, gsum = 0.0, qsum = 0.0;
            for (std::size_t s = 0; s < means.size(); ++s) {
                const double w = std::exp(logw[s] - lmax);
                wsum += w;
                gsum += w * gs[s];
                qsum += w * (hs[s] + gs[s] * gs[s]);
            }
            const double gbar = gsum / wsum;
            const double h = qsum / wsum - gbar * gbar;
            if (!std::isfinite(h))
                throw numeric_error("fisher_nda_reduced: non-finite Hessian sample " + std::to_string(i));
            acc.add(-h, 0.0);
        }
        partial[chunk] = detail::finish(acc);
    });

    util::Kahan total, totsq;
    long count = 0;
    for (const auto& p : partial) {
        total.add(p.mean11 * static_cast<double>(p.count));
        totsq.add((p.var11 * static_cast<double>(p.count - 1)) +
                  p.mean11 * p.mean11 * static_cast<double>(p.count));
        count += p.count;
    }
    FisherBlocks f;
    f.mode = FisherBlocks::Mode::nda;
    f.reduced = true;
    f.meta = {seed, 1, samples};
    const double m = static_cast<double>(count);
    f.gamma11 = total.sum / m;
    const double var = std::max(0.0, (totsq.sum - m * f.gamma11 * f.gamma11) / (m - 1.0));
    f.stderr11 = std::sqrt(var / m);
    f.gamma12 = 0.0;
    f.stderr12 = 0.0;
    return f;
}

}  // namespace comppn
