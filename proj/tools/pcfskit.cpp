// pcfskit: simulate | correlate | analyze | spectrum
//
// Exit codes: 0 success, 2 usage error, 3 data or format error, 4 numeric
// failure. PCFSKIT_LOG sets the log level (trace, debug, info, warn, error,
// off; default warn); log lines go to stderr.

#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "pcfs/commands.hpp"
#include "pcfs/config.hpp"
#include "pcfs/errors.hpp"

namespace {

using namespace pcfs;

std::vector<double> parse_list(const std::string& text, const char* flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
        }
    }
    if (out.empty()) throw UsageError(std::string(flag) + " is empty");
    return out;
}

void setup_logging() {
    auto logger = spdlog::stderr_logger_mt("pcfskit");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("PCFSKIT_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string(env) != "off")
            spdlog::warn("PCFSKIT_LOG='{}' not recognised; keeping warn", env);
        else
            spdlog::set_level(level);
    }
}

void print_files(const std::vector<fs::path>& files) {
    for (const auto& f : files) std::cout << f.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"pcfskit: simulation and analysis for photon correlation Fourier spectroscopy"};
    app.require_subcommand(1);

    std::string config_path, out_dir, delta_list, tau_list;
    std::optional<std::uint64_t> seed;
    std::optional<double> duration, tau_min, tau_max;
    std::optional<int> bins_per_decade;
    unsigned workers = 0;

    auto* sim = app.add_subcommand("simulate", "simulate click streams (PCFS) or fringe scans (FTS)");
    sim->add_option("--config", config_path, "INI config or a manifest.json to reproduce")->check(CLI::ExistingFile);
    sim->add_option("--out", out_dir, "output directory")->required();
    sim->add_option("--seed", seed, "root seed (overrides the config)");
    sim->add_option("--delta-list", delta_list, "comma-separated delays in ns (overrides the config)");
    sim->add_option("--duration", duration, "acquisition time per stream in s (overrides the config)");
    sim->add_option("--workers", workers, "worker threads (default: all cores)");

    std::vector<std::string> inputs;
    auto* cor = app.add_subcommand("correlate", "log-binned g2 of stream files");
    cor->add_option("streams", inputs, "stream files (manifest.json must sit next to them)")->required();
    cor->add_option("--config", config_path, "take the binning from a config or manifest")->check(CLI::ExistingFile);
    cor->add_option("--out", out_dir, "output directory")->required();
    cor->add_option("--bins-per-decade", bins_per_decade, "bins per decade (default 3)");
    cor->add_option("--tau-min", tau_min, "shortest lag edge in s (default 1e-6)");
    cor->add_option("--tau-max", tau_max, "longest lag edge in s (default 1)");
    cor->add_option("--workers", workers, "worker threads (default: all cores)");

    std::vector<std::string> models, laser_refs;
    bool laser_calibration = false, inhom_only = false;
    AnalyzeOptions analyze;
    auto* ana = app.add_subcommand("analyze", "contrast surface and model fits from g2, fringe or visibility CSVs");
    ana->add_option("inputs", inputs, "CSV files or directories")->required();
    ana->add_option("--out", out_dir, "output directory")->required();
    ana->add_option("--model", models, "voigt, grj or ou (repeatable; default voigt)")->delimiter(',');
    ana->add_option("--laser-ref", laser_refs, "laser g2 CSVs or directories (repeatable)");
    ana->add_flag("--laser-calibration", laser_calibration, "require a laser reference for every delay");
    ana->add_option("--tau-min", tau_min, "shortest lag fitted in s (default 0)");
    ana->add_option("--tau-max", tau_max, "longest lag fitted in s (default 0.01)");
    ana->add_flag("--inhom-only", inhom_only, "fit the OU law to inhomogeneous instead of total widths");
    ana->add_option("--workers", workers, "worker threads (default: all cores)");

    std::size_t grid_points = 0;
    auto* spe = app.add_subcommand("spectrum", "model spectra and contrast curves");
    spe->add_option("--config", config_path, "INI config (emitter section)")->check(CLI::ExistingFile);
    spe->add_option("--out", out_dir, "output directory")->required();
    spe->add_option("--tau-list", tau_list, "comma-separated lags in s (default 1e-6,3e-5,1)");
    spe->add_option("--delta-list", delta_list, "comma-separated delays in ns for the contrast curves");
    spe->add_option("--grid-points", grid_points, "frequency samples, a power of two (default: automatic)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig config;
        config.deltas_ns = default_deltas();
        if (!config_path.empty()) config = load_config(config_path);

        if (sim->parsed()) {
            if (seed) config.seed = *seed;
            if (!delta_list.empty()) config.deltas_ns = parse_list(delta_list, "--delta-list");
            if (duration) config.duration_s = *duration;
            const auto r = cmd_simulate(config, out_dir, workers);
            print_files(r.files);
            std::cout << r.manifest_path.string() << '\n';
        } else if (cor->parsed()) {
            LogBinning b = config.binning;
            if (bins_per_decade) b.bins_per_decade = *bins_per_decade;
            if (tau_min) b.tau_min = *tau_min;
            if (tau_max) b.tau_max = *tau_max;
            print_files(cmd_correlate({inputs.begin(), inputs.end()}, b, out_dir, workers));
        } else if (ana->parsed()) {
            analyze.inputs = {inputs.begin(), inputs.end()};
            analyze.laser_refs = {laser_refs.begin(), laser_refs.end()};
            analyze.laser_calibration = laser_calibration;
            analyze.inhom_only = inhom_only;
            analyze.workers = workers;
            if (!models.empty()) {
                analyze.models.clear();
                for (const auto& m : models) analyze.models.push_back(analysis_model_from_string(m));
            }
            if (tau_min) analyze.fit.tau_min_s = *tau_min;
            if (tau_max) analyze.fit.tau_max_s = *tau_max;
            if (analyze.fit.tau_min_s >= analyze.fit.tau_max_s) throw UsageError("--tau-min must be below --tau-max");
            print_files(cmd_analyze(analyze, out_dir).files);
        } else if (spe->parsed()) {
            SpectrumOptions so;
            if (!tau_list.empty()) so.taus_s = parse_list(tau_list, "--tau-list");
            if (!delta_list.empty()) so.deltas_ns = parse_list(delta_list, "--delta-list");
            so.grid_points = grid_points;
            print_files(cmd_spectrum(config, so, out_dir));
        }
    } catch (const std::exception& e) {
        std::cerr << "pcfskit: " << e.what() << '\n';
        return exit_code(e);
    }
    return 0;
}
