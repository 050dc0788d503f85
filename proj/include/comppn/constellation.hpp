#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <utility>
#include <vector>

#include "comppn/errors.hpp"
#include "comppn/rng.hpp"

namespace comppn {

using cplx = std::complex<double>;

/// Finite symbol alphabet. Built-in alphabets are normalized to unit average
/// energy; custom symbol lists pass through unnormalized.
class Constellation {
public:
    Constellation(std::vector<cplx> symbols, std::string name)
        : symbols_(std::move(symbols)), name_(std::move(name)) {
        if (symbols_.empty()) throw config_error("constellation '" + name_ + "' is empty");
        double e = 0.0;
        for (const cplx& s : symbols_) e += std::norm(s);
        avg_energy_ = e / static_cast<double>(symbols_.size());
        if (!std::isfinite(avg_energy_) || avg_energy_ <= 0.0)
            throw config_error("constellation '" + name_ + "' has non-positive or non-finite energy");
    }

    static Constellation bpsk() { return Constellation({{1.0, 0.0}, {-1.0, 0.0}}, "BPSK"); }

    static Constellation qpsk() {
        const double a = 1.0 / std::sqrt(2.0);
        return Constellation({{a, a}, {-a, a}, {-a, -a}, {a, -a}}, "QPSK");
    }

    static Constellation qam16() {
        std::vector<cplx> pts;
        const double scale = 1.0 / std::sqrt(10.0);
        for (double re : {-3.0, -1.0, 1.0, 3.0})
            for (double im : {-3.0, -1.0, 1.0, 3.0}) pts.emplace_back(re * scale, im * scale);
        return Constellation(std::move(pts), "16QAM");
    }

    const std::vector<cplx>& symbols() const { return symbols_; }
    std::size_t order() const { return symbols_.size(); }
    double avg_energy() const { return avg_energy_; }
    const std::string& name() const { return name_; }

private:
    std::vector<cplx> symbols_;
    std::string name_;
    double avg_energy_ = 0.0;
};

inline Constellation make_constellation(const std::string& name) {
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "qpsk") return Constellation::qpsk();
    if (lower == "16qam" || lower == "qam16") return Constellation::qam16();
    if (lower == "bpsk") return Constellation::bpsk();
    throw config_error("unknown constellation '" + name + "' (expected qpsk, 16qam or bpsk)");
}

/// n i.i.d. uniform draws from the alphabet; deterministic given the seed.
inline std::vector<cplx> draw_symbols(const Constellation& c, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw config_error("draw_symbols: n must be >= 1");
    rng::Stream stream(seed);
    std::vector<cplx> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(c.symbols()[stream.next_index(c.order())]);
    return out;
}

}  // namespace comppn
