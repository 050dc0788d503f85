#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comppn/amplitude.hpp"
#include "comppn/bcrb.hpp"
#include "comppn/constellation.hpp"
#include "comppn/errors.hpp"
#include "comppn/fisher.hpp"
#include "comppn/map_estimator.hpp"
#include "comppn/prior.hpp"
#include "comppn/version.hpp"

namespace comppn {

/// Declarative sweep description. Exactly one of snr_db / rho / sigma2_zeta
/// may carry a grid (comma list or start:step:stop); the others are scalars.
/// rho == 1 rows are evaluated with the exact reduced single-phase model;
/// values in (1 - 1e-6, 1) are rejected.
struct ExperimentSpec {
    std::vector<FisherBlocks::Mode> modes{FisherBlocks::Mode::nda};
    std::string constellation = "qpsk";
    int n = 100;

    std::vector<double> snr_db{15.0};
    std::vector<double> rho{0.0};
    std::vector<double> sigma2_zeta{1e-3};
    double sigma2_init = 1e4;

    bool report_all = false;
    int symbol_index = 50;  // 1-based, used when report_all == false

    long nda_mc = 200000;   // Monte-Carlo samples per delta grid point
    int nda_delta_grid = 64;
    bool estimator = false;
    int estimator_trials = 500;
    std::uint64_t seed = 1;

    void validate() const;
    std::string sweep_name() const;
    const std::vector<double>& sweep_values() const;
    std::string to_text() const;

    static ExperimentSpec parse(const std::string& text);
    static ExperimentSpec parse_file(const std::filesystem::path& file);
};

struct SweepRow {
    std::string sweep_name;
    double sweep_value = 0.0;
    FisherBlocks::Mode mode = FisherBlocks::Mode::nda;
    std::string constellation;
    int n = 0;
    int symbol_index = 0;
    double bound = 0.0;
    double bound_stderr = 0.0;
    double sigma2_eps_tilde = 0.0;
    std::optional<double> empirical;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline double parse_double(const std::string& value, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw config_error("");
        return v;
    } catch (...) {
        throw config_error("field '" + key + "': cannot parse number '" + value + "'");
    }
}

inline std::vector<double> parse_grid(const std::string& value, const std::string& key) {
    std::vector<double> out;
    if (value.find(':') != std::string::npos) {
        std::stringstream ss(value);
        std::string a, b, c;
        if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
            throw config_error("field '" + key + "': expected start:step:stop");
        const double start = parse_double(trim(a), key);
        const double step = parse_double(trim(b), key);
        const double stop = parse_double(trim(c), key);
        if (!(step > 0.0) || stop < start)
            throw config_error("field '" + key + "': bad range " + value);
        const long count = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;
        for (long i = 0; i < count; ++i) out.push_back(start + step * static_cast<double>(i));
        return out;
    }
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), key));
    if (out.empty()) throw config_error("field '" + key + "': empty value");
    return out;
}

inline std::string format_grid(const std::vector<double>& values) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g", values[i]);
        if (i) out += ",";
        out += buf;
    }
    return out;
}

}  // namespace detail

inline void ExperimentSpec::validate() const {
    if (modes.empty()) throw config_error("field 'mode': at least one mode required");
    if (n < 1) throw config_error("field 'n': must be >= 1");
    make_constellation(constellation);  // throws on unknown name
    int grids = 0;
    for (const auto* g : {&snr_db, &rho, &sigma2_zeta}) {
        if (g->empty()) throw config_error("grid fields must be nonempty");
        if (g->size() > 1) ++grids;
    }
    if (grids > 1)
        throw config_error("at most one of snr_db / rho / sigma2_zeta may be a grid");
    for (double v : snr_db)
        if (v < -10.0 || v > 50.0) throw config_error("field 'snr_db': values must lie in [-10, 50]");
    for (double v : rho) {
        if (v < 0.0 || v > 1.0) throw config_error("field 'rho': values must lie in [0, 1]");
        if (v < 1.0 && 1.0 - v < kRhoDegenerate * (1.0 - 1e-9))
            throw config_error("field 'rho': values in (1 - 1e-6, 1) are not representable; "
                               "use 1 - 1e-6 or exactly 1");
    }
    for (double v : sigma2_zeta)
        if (!(v >= 0.0)) throw config_error("field 'sigma2_zeta': must be >= 0");
    if (!(sigma2_init > 0.0)) throw config_error("field 'sigma2_init': must be > 0");
    if (!report_all && (symbol_index < 1 || symbol_index > n))
        throw config_error("field 'report': symbol index out of range 1..n");
    if (nda_mc < 1) throw config_error("field 'nda_mc': must be >= 1");
    if (nda_delta_grid < 1) throw config_error("field 'nda_delta_grid': must be >= 1");
    if (estimator_trials < 1) throw config_error("field 'estimator_trials': must be >= 1");
}

inline std::string ExperimentSpec::sweep_name() const {
    if (rho.size() > 1) return "rho";
    if (sigma2_zeta.size() > 1) return "sigma2_zeta";
    return "snr_db";
}

inline const std::vector<double>& ExperimentSpec::sweep_values() const {
    if (rho.size() > 1) return rho;
    if (sigma2_zeta.size() > 1) return sigma2_zeta;
    return snr_db;
}

inline ExperimentSpec ExperimentSpec::parse(const std::string& text) {
    ExperimentSpec spec;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw config_error("expected key = value, got '" + line + "'");
        const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (value.empty()) throw config_error("field '" + key + "': empty value");

        if (key == "mode") {
            spec.modes.clear();
            std::stringstream ms(value);
            std::string item;
            while (std::getline(ms, item, ',')) {
                const std::string m = detail::lower(detail::trim(item));
                if (m == "da") spec.modes.push_back(FisherBlocks::Mode::da);
                else if (m == "mbcrb") spec.modes.push_back(FisherBlocks::Mode::mbcrb);
                else if (m == "nda") spec.modes.push_back(FisherBlocks::Mode::nda);
                else throw config_error("field 'mode': unknown mode '" + m + "'");
            }
        } else if (key == "constellation") {
            spec.constellation = detail::lower(value);
        } else if (key == "n") {
            spec.n = static_cast<int>(detail::parse_double(value, key));
        } else if (key == "snr_db") {
            spec.snr_db = detail::parse_grid(value, key);
        } else if (key == "rho") {
            spec.rho = detail::parse_grid(value, key);
        } else if (key == "sigma2_zeta") {
            spec.sigma2_zeta = detail::parse_grid(value, key);
        } else if (key == "sigma2_init") {
            spec.sigma2_init = detail::parse_double(value, key);
        } else if (key == "report") {
            const std::string v = detail::lower(value);
            if (v == "all") {
                spec.report_all = true;
            } else if (v.rfind("symbol:", 0) == 0) {
                spec.report_all = false;
                spec.symbol_index = static_cast<int>(detail::parse_double(v.substr(7), key));
            } else {
                throw config_error("field 'report': expected 'all' or 'symbol:<k>'");
            }
        } else if (key == "nda_mc") {
            spec.nda_mc = static_cast<long>(detail::parse_double(value, key));
        } else if (key == "nda_delta_grid") {
            spec.nda_delta_grid = static_cast<int>(detail::parse_double(value, key));
        } else if (key == "estimator") {
            const std::string v = detail::lower(value);
            if (v == "on") spec.estimator = true;
            else if (v == "off") spec.estimator = false;
            else throw config_error("field 'estimator': expected on or off");
        } else if (key == "estimator_trials") {
            spec.estimator_trials = static_cast<int>(detail::parse_double(value, key));
        } else if (key == "seed") {
            spec.seed = static_cast<std::uint64_t>(detail::parse_double(value, key));
        } else {
            throw config_error("unknown field '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

inline ExperimentSpec ExperimentSpec::parse_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw config_error("cannot open spec file " + file.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

inline std::string ExperimentSpec::to_text() const {
    std::string modes_str;
    for (std::size_t i = 0; i < modes.size(); ++i) {
        if (i) modes_str += ",";
        modes_str += to_string(modes[i]);
    }
    std::ostringstream out;
    out << "mode = " << modes_str << "\n"
        << "constellation = " << constellation << "\n"
        << "n = " << n << "\n"
        << "snr_db = " << detail::format_grid(snr_db) << "\n"
        << "rho = " << detail::format_grid(rho) << "\n"
        << "sigma2_zeta = " << detail::format_grid(sigma2_zeta) << "\n"
        << "sigma2_init = " << detail::format_grid({sigma2_init}) << "\n"
        << "report = " << (report_all ? std::string("all") : "symbol:" + std::to_string(symbol_index))
        << "\n"
        << "nda_mc = " << nda_mc << "\n"
        << "nda_delta_grid = " << nda_delta_grid << "\n"
        << "estimator = " << (estimator ? "on" : "off") << "\n"
        << "estimator_trials = " << estimator_trials << "\n"
        << "seed = " << seed << "\n";
    return out.str();
}

/// Memoizes NDA gamma estimates across sweep points (they depend only on the
/// constellation, noise variance, budget and seed, not on the prior).
class GammaCache {
public:
    const FisherBlocks& nda(const Constellation& c, double sigma2_w, long mc, int grid,
                            std::uint64_t seed, int threads, bool reduced) {
        char key[160];
        std::snprintf(key, sizeof key, "%s|%.17g|%ld|%d|%llu|%d", c.name().c_str(), sigma2_w, mc,
                      grid, static_cast<unsigned long long>(seed), reduced ? 1 : 0);
        auto it = entries_.find(key);
        if (it != entries_.end()) return it->second;
        FisherBlocks f = reduced
                             ? fisher_nda_reduced(c, sigma2_w, mc * static_cast<long>(grid), seed, threads)
                             : fisher_nda(c, sigma2_w, mc, grid, seed, threads);
        return entries_.emplace(key, std::move(f)).first->second;
    }

private:
    std::map<std::string, FisherBlocks> entries_;
};

/// Evaluates the whole sweep. Deterministic for a fixed (spec, seed)
/// regardless of thread count.
inline std::vector<SweepRow> run_sweep(const ExperimentSpec& spec, int threads = 1,
                                       GammaCache* cache = nullptr) {
    spec.validate();
    const Constellation constellation = make_constellation(spec.constellation);
    GammaCache local_cache;
    GammaCache& gammas = cache != nullptr ? *cache : local_cache;

    // One pilot block per run for the DA mode (redrawn per run, not per row).
    const std::vector<cplx> pilots =
        draw_symbols(constellation, static_cast<std::size_t>(spec.n),
                     rng::derive_stream(spec.seed, 0xDAULL).next_u64());

    const std::string sweep = spec.sweep_name();
    std::vector<SweepRow> rows;

    for (std::size_t vi = 0; vi < spec.sweep_values().size(); ++vi) {
        const double value = spec.sweep_values()[vi];
        PnConfig pn;
        pn.n = spec.n;
        pn.sigma2_init = spec.sigma2_init;
        pn.rho = sweep == "rho" ? value : spec.rho.front();
        pn.sigma2_zeta = sweep == "sigma2_zeta" ? value : spec.sigma2_zeta.front();
        const double snr_db = sweep == "snr_db" ? value : spec.snr_db.front();
        const double sigma2_w = ChannelConfig{snr_db}.sigma2_w(constellation.avg_energy());
        const bool reduced = pn.rho == 1.0;
        const PriorModel prior = reduced ? reduced_model_rho1(pn) : build_covariance(pn);

        for (FisherBlocks::Mode mode : spec.modes) {
            FisherBlocks fisher;
            switch (mode) {
                case FisherBlocks::Mode::da:
                    fisher = reduced ? fisher_da_reduced(pilots, sigma2_w) : fisher_da(pilots, sigma2_w);
                    break;
                case FisherBlocks::Mode::mbcrb:
                    fisher = reduced ? fisher_mbcrb_reduced(constellation, sigma2_w)
                                     : fisher_mbcrb(constellation, sigma2_w);
                    break;
                case FisherBlocks::Mode::nda:
                    fisher = gammas.nda(constellation, sigma2_w, spec.nda_mc, spec.nda_delta_grid,
                                        spec.seed, threads, reduced);
                    break;
            }
            const BimResult bim = assemble_bim(fisher, prior);
            const Eigen::VectorXd stderrs = bound_stderr(fisher, prior, bim);
            const Eigen::VectorXd eps = eps_tilde_from_bound(bim);

            std::optional<HarnessResult> harness;
            if (spec.estimator && mode == FisherBlocks::Mode::da && !reduced) {
                HarnessConfig hc;
                hc.pn = pn;
                hc.snr_db = snr_db;
                hc.constellation = constellation;
                hc.symbol_index = spec.report_all ? (spec.n + 1) / 2 : spec.symbol_index;
                hc.trials = spec.estimator_trials;
                hc.seed = rng::derive_stream(spec.seed, 0xE57ULL + vi).next_u64();
                hc.threads = threads;
                harness = mse_harness(hc);
            }

            auto emit = [&](int symbol_1based) {
                SweepRow row;
                row.sweep_name = sweep;
                row.sweep_value = value;
                row.mode = mode;
                row.constellation = constellation.name();
                row.n = spec.n;
                row.symbol_index = symbol_1based;
                row.bound = bim.mse_phi1(symbol_1based - 1);
                row.bound_stderr = stderrs(symbol_1based - 1);
                row.sigma2_eps_tilde = eps(symbol_1based - 1);
                if (harness) row.empirical = harness->per_symbol_mse(symbol_1based - 1);
                row.seed = spec.seed;
                rows.push_back(std::move(row));
            };
            if (spec.report_all)
                for (int s = 1; s <= spec.n; ++s) emit(s);
            else
                emit(spec.symbol_index);
        }
    }
    return rows;
}

inline const char* kCsvHeader =
    "sweep_var_name,sweep_value,mode,constellation,n,symbol_index,bound_rad2,"
    "bound_stderr_rad2,sigma2_eps_tilde_rad2,empirical_mse_rad2,seed";

/// CSV per the documented schema; bound columns use scientific notation with
/// 15 significant digits so files are bit-stable across runs.
inline std::string to_csv(const std::vector<SweepRow>& rows) {
    std::string out = kCsvHeader;
    out += "\n";
    char buf[512];
    for (const SweepRow& row : rows) {
        char empirical[40] = "";
        if (row.empirical) std::snprintf(empirical, sizeof empirical, "%.14e", *row.empirical);
        std::snprintf(buf, sizeof buf, "%s,%.10g,%s,%s,%d,%d,%.14e,%.14e,%.14e,%s,%llu\n",
                      row.sweep_name.c_str(), row.sweep_value, to_string(row.mode),
                      row.constellation.c_str(), row.n, row.symbol_index, row.bound,
                      row.bound_stderr, row.sigma2_eps_tilde, empirical,
                      static_cast<unsigned long long>(row.seed));
        out += buf;
    }
    return out;
}

struct RunOutput {
    std::filesystem::path csv;
    std::filesystem::path manifest;
};

/// Runs one spec and writes `<stem>.csv` plus `<stem>.manifest.json` into
/// out_dir. The manifest echoes the resolved configuration so runs are
/// self-describing.
inline RunOutput run_to_files(const ExperimentSpec& spec, const std::string& stem,
                              const std::filesystem::path& out_dir, int threads = 1,
                              GammaCache* cache = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<SweepRow> rows = run_sweep(spec, threads, cache);
    const double wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::filesystem::create_directories(out_dir);
    RunOutput out;
    out.csv = out_dir / (stem + ".csv");
    out.manifest = out_dir / (stem + ".manifest.json");

    std::ofstream csv(out.csv);
    if (!csv) throw config_error("cannot write " + out.csv.string());
    csv << to_csv(rows);

    nlohmann::json manifest;
    manifest["tool"] = "comppn";
    manifest["version"] = kVersion;
    manifest["wall_time_s"] = wall_s;
    manifest["rows"] = rows.size();
    manifest["output"] = out.csv.filename().string();
    nlohmann::json cfg;
    std::string modes_str;
    for (std::size_t i = 0; i < spec.modes.size(); ++i)
        modes_str += std::string(i ? "," : "") + to_string(spec.modes[i]);
    cfg["mode"] = modes_str;
    cfg["constellation"] = spec.constellation;
    cfg["n"] = spec.n;
    cfg["snr_db"] = spec.snr_db;
    cfg["rho"] = spec.rho;
    cfg["sigma2_zeta"] = spec.sigma2_zeta;
    cfg["sigma2_init"] = spec.sigma2_init;
    cfg["report"] = spec.report_all ? "all" : "symbol:" + std::to_string(spec.symbol_index);
    cfg["nda_mc"] = spec.nda_mc;
    cfg["nda_delta_grid"] = spec.nda_delta_grid;
    cfg["estimator"] = spec.estimator ? "on" : "off";
    cfg["estimator_trials"] = spec.estimator_trials;
    cfg["seed"] = spec.seed;
    manifest["config"] = cfg;

    std::ofstream mf(out.manifest);
    if (!mf) throw config_error("cannot write " + out.manifest.string());
    mf << manifest.dump(2) << "\n";
    return out;
}

/// Figure-reproduction presets. Each preset expands to one spec per output
/// file; the spec text is also written next to the CSV so every run can be
/// repeated with `run`.
inline std::vector<std::pair<std::string, ExperimentSpec>> preset_specs(const std::string& name,
                                                                        std::uint64_t seed_base) {
    std::vector<std::pair<std::string, ExperimentSpec>> out;
    auto base = [&](std::uint64_t offset) {
        ExperimentSpec s;
        s.modes = {FisherBlocks::Mode::nda, FisherBlocks::Mode::mbcrb};
        s.sigma2_init = 1e4;
        s.seed = seed_base + offset;
        return s;
    };
    const std::vector<double> rho_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                                       0.6, 0.7, 0.8, 0.9, 1.0 - 1e-6, 1.0};

    if (name == "fig2") {
        std::uint64_t off = 0;
        for (int n : {20, 100})
            for (const char* c : {"qpsk", "16qam"}) {
                ExperimentSpec s = base(off++);
                s.constellation = c;
                s.n = n;
                s.snr_db = {5.0};
                s.rho = {0.5};
                s.sigma2_zeta = {1e-3};
                s.report_all = true;
                out.emplace_back("fig2_n" + std::to_string(n) + "_" + c, s);
            }
    } else if (name == "fig3") {
        std::uint64_t off = 0;
        for (const char* c : {"qpsk", "16qam"}) {
            ExperimentSpec s = base(off++);
            s.constellation = c;
            s.n = 100;
            s.snr_db = {};
            for (double v = 0.0; v <= 30.0 + 1e-9; v += 3.0) s.snr_db.push_back(v);
            s.rho = {0.1};
            s.sigma2_zeta = {1e-3};
            s.report_all = false;
            s.symbol_index = 50;
            out.emplace_back(std::string("fig3_") + c, s);
        }
    } else if (name == "fig4" || name == "fig5") {
        std::uint64_t off = name == "fig5" ? 8 : 0;
        for (const char* sz : {"1e-3", "1e-2"}) {
            ExperimentSpec s = base(off++);
            s.constellation = "qpsk";
            s.n = 100;
            s.snr_db = {15.0};
            s.rho = rho_grid;
            s.sigma2_zeta = {sz == std::string("1e-3") ? 1e-3 : 1e-2};
            s.report_all = false;
            s.symbol_index = 50;
            out.emplace_back(name + "_sz" + sz, s);
        }
    } else {
        throw config_error("unknown preset '" + name + "' (expected fig2, fig3, fig4 or fig5)");
    }
    return out;
}

}  // namespace comppn
