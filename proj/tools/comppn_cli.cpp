// Command-line front end: declarative experiment runs, figure presets and
// report generation. Exit codes: 0 success, 2 configuration error,
// 3 numerical error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "comppn/experiment.hpp"
#include "comppn/report.hpp"
#include "comppn/version.hpp"

namespace {

struct CommonFlags {
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int threads = 0;
    std::string estimator;   // "", "on", "off"
    double mc_scale = 1.0;   // scales Monte-Carlo budgets (testing hook)
};

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void apply_overrides(comppn::ExperimentSpec& spec, const CommonFlags& flags) {
    if (flags.seed) spec.seed = *flags.seed;
    if (flags.estimator == "on") spec.estimator = true;
    if (flags.estimator == "off") spec.estimator = false;
    if (flags.mc_scale != 1.0) {
        spec.nda_mc = std::max<long>(1000, static_cast<long>(spec.nda_mc * flags.mc_scale));
        spec.estimator_trials =
            std::max(10, static_cast<int>(spec.estimator_trials * flags.mc_scale));
    }
}

int run_one(const comppn::ExperimentSpec& spec, const std::string& stem, const CommonFlags& flags,
            comppn::GammaCache& cache) {
    const auto out = comppn::run_to_files(spec, stem, flags.out_dir, resolve_threads(flags.threads),
                                          &cache);
    std::cout << "wrote " << out.csv.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian bounds for oscillator phase noise in two-transmitter CoMP downlinks"};
    app.set_version_flag("--version", std::string("comppn ") + comppn::kVersion);
    app.require_subcommand(1);

    CommonFlags flags;
    std::string spec_path;
    std::string preset_name;
    std::vector<std::string> csv_paths;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", flags.seed, "Override the spec seed");
        cmd->add_option("--out-dir", flags.out_dir, "Output directory (default .)");
        cmd->add_option("--threads", flags.threads, "Worker threads (default: hardware)");
        cmd->add_option("--estimator", flags.estimator, "Override estimator on|off")
            ->check(CLI::IsMember({"on", "off"}));
        cmd->add_option("--mc-scale", flags.mc_scale,
                        "Scale Monte-Carlo budgets (quick-look/testing hook)");
    };

    CLI::App* run = app.add_subcommand("run", "Run one experiment spec file");
    run->add_option("spec", spec_path, "Flat key = value spec file")->required();
    add_common(run);

    CLI::App* preset = app.add_subcommand("preset", "Run a figure-reproduction preset");
    preset->add_option("name", preset_name, "fig2 | fig3 | fig4 | fig5")->required();
    add_common(preset);

    CLI::App* report = app.add_subcommand("report", "Summarize CSVs and emit a gnuplot script");
    report->add_option("csv", csv_paths, "CSV files produced by run/preset")->required();
    report->add_option("--out-dir", flags.out_dir, "Output directory (default .)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        app.exit(e);
        return 2;
    }

    try {
        comppn::GammaCache cache;
        if (run->parsed()) {
            comppn::ExperimentSpec spec = comppn::ExperimentSpec::parse_file(spec_path);
            apply_overrides(spec, flags);
            const std::string stem = std::filesystem::path(spec_path).stem().string();
            return run_one(spec, stem, flags, cache);
        }
        if (preset->parsed()) {
            const std::uint64_t seed_base = flags.seed.value_or(20001);
            for (auto& [stem, spec] : comppn::preset_specs(preset_name, seed_base)) {
                CommonFlags f = flags;
                f.seed.reset();  // preset seeds already derive from seed_base
                apply_overrides(spec, f);
                std::filesystem::create_directories(flags.out_dir);
                std::ofstream spec_file(std::filesystem::path(flags.out_dir) / (stem + ".spec"));
                spec_file << spec.to_text();
                run_one(spec, stem, flags, cache);
            }
            return 0;
        }
        if (report->parsed()) {
            std::vector<comppn::report::CsvFile> files;
            for (const std::string& p : csv_paths) files.push_back(comppn::report::load_csv(p));
            const std::string summary = comppn::report::summarize(files);
            std::filesystem::create_directories(flags.out_dir);
            {
                std::ofstream gp(std::filesystem::path(flags.out_dir) / "plots.gp");
                gp << comppn::report::plot_script(files);
            }
            {
                std::ofstream txt(std::filesystem::path(flags.out_dir) / "summary.txt");
                txt << summary;
            }
            std::cout << summary;
            std::cout << "wrote " << (std::filesystem::path(flags.out_dir) / "plots.gp").string()
                      << "\n";
            return 0;
        }
    } catch (const comppn::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const comppn::numeric_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
