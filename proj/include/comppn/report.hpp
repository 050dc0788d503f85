#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "comppn/errors.hpp"
#include "comppn/experiment.hpp"

namespace comppn::report {

struct CsvRow {
    std::string sweep_name;
    double sweep_value = 0.0;
    std::string mode;
    std::string constellation;
    int n = 0;
    int symbol_index = 0;
    double bound = 0.0;
    double bound_stderr = 0.0;
    double sigma2_eps_tilde = 0.0;
    std::optional<double> empirical;
};

struct CsvFile {
    std::filesystem::path path;
    std::vector<CsvRow> rows;
    std::optional<double> sigma2_zeta;  // from the sibling manifest, if present
};

inline CsvFile load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open CSV " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw config_error("empty CSV " + path.string());
    if (!header.empty() && header.back() == '\r') header.pop_back();

    std::vector<std::string> expected;
    {
        std::stringstream ss(kCsvHeader);
        std::string col;
        while (std::getline(ss, col, ',')) expected.push_back(col);
    }
    std::vector<std::string> got;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ',')) got.push_back(col);
    }
    for (const std::string& col : expected)
        if (std::find(got.begin(), got.end(), col) == got.end())
            throw config_error("CSV " + path.string() + ": missing column '" + col + "'");
    if (got != expected)
        throw config_error("CSV " + path.string() + ": column order must match the schema header");

    CsvFile file;
    file.path = path;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        while (cells.size() < expected.size()) cells.push_back("");
        CsvRow row;
        row.sweep_name = cells[0];
        row.sweep_value = std::stod(cells[1]);
        row.mode = cells[2];
        row.constellation = cells[3];
        row.n = std::stoi(cells[4]);
        row.symbol_index = std::stoi(cells[5]);
        row.bound = std::stod(cells[6]);
        row.bound_stderr = std::stod(cells[7]);
        row.sigma2_eps_tilde = std::stod(cells[8]);
        if (!cells[9].empty()) row.empirical = std::stod(cells[9]);
        file.rows.push_back(std::move(row));
    }
    if (file.rows.empty()) throw config_error("CSV " + path.string() + " has no data rows");

    std::filesystem::path manifest = path;
    manifest.replace_extension();
    manifest += ".manifest.json";
    if (std::filesystem::exists(manifest)) {
        try {
            std::ifstream mf(manifest);
            nlohmann::json j;
            mf >> j;
            const auto& sz = j.at("config").at("sigma2_zeta");
            if (sz.is_array() && sz.size() == 1) file.sigma2_zeta = sz[0].get<double>();
        } catch (...) {
            // manifest is advisory for labeling only
        }
    }
    return file;
}

namespace detail {

inline bool symbol_sweep(const CsvFile& f) {
    double lo = f.rows.front().sweep_value, hi = lo;
    for (const auto& r : f.rows) {
        lo = std::min(lo, r.sweep_value);
        hi = std::max(hi, r.sweep_value);
    }
    return lo == hi;  // single sweep point: plot against the symbol index
}

inline std::string sanitize(std::string s) {
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
    return s;
}

}  // namespace detail

/// Text summary: per file the sweep range plus, for rho sweeps, the
/// synchronization improvement 10 log10(bound(rho_min) / bound(rho_max&lt;1))
/// and the matching sigma2_eps_tilde collapse ratio.
inline std::string summarize(const std::vector<CsvFile>& files) {
    std::ostringstream out;
    char buf[256];
    for (const CsvFile& f : files) {
        out << f.path.filename().string() << ": " << f.rows.size() << " rows, sweep "
            << f.rows.front().sweep_name;
        double lo = f.rows.front().sweep_value, hi = lo;
        for (const auto& r : f.rows) {
            lo = std::min(lo, r.sweep_value);
            hi = std::max(hi, r.sweep_value);
        }
        std::snprintf(buf, sizeof buf, " in [%g, %g]\n", lo, hi);
        out << buf;

        if (f.rows.front().sweep_name == "rho" && !detail::symbol_sweep(f)) {
            std::string label = f.path.stem().string();
            if (f.sigma2_zeta) {
                std::snprintf(buf, sizeof buf, "sigma2_zeta=%g", *f.sigma2_zeta);
                label = buf;
            }
            std::map<std::string, std::map<double, const CsvRow*>> by_mode;
            for (const auto& r : f.rows) by_mode[r.mode][r.sweep_value] = &r;
            for (const auto& [mode, series] : by_mode) {
                const CsvRow* first = series.begin()->second;
                const CsvRow* last_below_one = nullptr;
                for (const auto& [v, row] : series)
                    if (v < 1.0) last_below_one = row;
                if (last_below_one == nullptr || last_below_one == first) continue;
                const double imp = 10.0 * std::log10(first->bound / last_below_one->bound);
                std::snprintf(buf, sizeof buf, "  improvement(%s, %s) = %.2f dB\n", label.c_str(),
                              mode.c_str(), imp);
                out << buf;
                if (first->sigma2_eps_tilde > 0.0) {
                    std::snprintf(buf, sizeof buf,
                                  "  sigma2_eps_tilde ratio rho_max/rho_min (%s, %s) = %.4f\n",
                                  label.c_str(), mode.c_str(),
                                  last_below_one->sigma2_eps_tilde / first->sigma2_eps_tilde);
                    out << buf;
                }
            }
        }
    }
    return out.str();
}

/// Gnuplot script with inline data blocks: one PNG per CSV (bound vs sweep
/// value or vs symbol index), plus a sigma2_eps_tilde panel for rho sweeps.
/// Empirical series are added only where the column is populated.
inline std::string plot_script(const std::vector<CsvFile>& files) {
    std::ostringstream out;
    out << "# gnuplot script generated by comppn report\n"
        << "set terminal pngcairo size 900,600\n"
        << "set grid\n"
        << "set logscale y\n\n";
    char buf[256];

    for (const CsvFile& f : files) {
        const bool by_symbol = detail::symbol_sweep(f);
        const std::string stem = detail::sanitize(f.path.stem().string());

        std::map<std::string, std::vector<const CsvRow*>> by_mode;
        for (const auto& r : f.rows) by_mode[r.mode].push_back(&r);

        std::vector<std::pair<std::string, bool>> series;  // (block name, has empirical)
        for (const auto& [mode, rows] : by_mode) {
            const std::string block = "$" + stem + "_" + detail::sanitize(mode);
            out << block << " << EOD\n";
            bool any_empirical = false;
            for (const CsvRow* r : rows) {
                const double x = by_symbol ? static_cast<double>(r->symbol_index) : r->sweep_value;
                if (r->empirical) {
                    any_empirical = true;
                    std::snprintf(buf, sizeof buf, "%.10g %.14e %.14e %.14e\n", x, r->bound,
                                  r->sigma2_eps_tilde, *r->empirical);
                } else {
                    std::snprintf(buf, sizeof buf, "%.10g %.14e %.14e\n", x, r->bound,
                                  r->sigma2_eps_tilde);
                }
                out << buf;
            }
            out << "EOD\n";
            series.emplace_back(block, any_empirical);
        }

        out << "set output '" << f.path.stem().string() << "_bound.png'\n"
            << "set xlabel '" << (by_symbol ? "symbol index" : f.rows.front().sweep_name) << "'\n"
            << "set ylabel 'MSE bound [rad^2]'\n"
            << "plot ";
        bool first = true;
        std::size_t idx = 0;
        for (const auto& [mode, rows] : by_mode) {
            if (!first) out << ", ";
            out << series[idx].first << " using 1:2 with linespoints title '" << mode << "'";
            if (series[idx].second)
                out << ", " << series[idx].first << " using 1:4 with points pt 7 title '" << mode
                    << " empirical'";
            first = false;
            ++idx;
        }
        out << "\n\n";

        if (!by_symbol && f.rows.front().sweep_name == "rho") {
            out << "set output '" << f.path.stem().string() << "_eps.png'\n"
                << "set xlabel 'rho'\n"
                << "set ylabel 'sigma2_eps_tilde [rad^2]'\n"
                << "plot ";
            first = true;
            idx = 0;
            for (const auto& [mode, rows] : by_mode) {
                if (!first) out << ", ";
                out << series[idx].first << " using 1:3 with linespoints title '" << mode << "'";
                first = false;
                ++idx;
            }
            out << "\n\n";
        }
    }
    return out.str();
}

}  // namespace comppn::report
