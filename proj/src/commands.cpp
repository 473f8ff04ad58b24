#include "pcfs/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pcfs/errors.hpp"
#include "pcfs/io.hpp"
#include "pcfs/rng.hpp"
#include "pcfs/spectra.hpp"
#include "pcfs/stream_io.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

constexpr const char* kManifestName = "manifest.json";

// Runs fn(0..n-1) on up to `workers` threads; rethrows the exception of the
// lowest failing index so the reported error does not depend on scheduling.
template <class F>
void parallel_for(std::size_t n, unsigned workers, F&& fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(workers, 1u), n));
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(run);
    run();
    pool.clear();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw std::runtime_error(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));
}

std::string delta_tag(double delta_ns) { return fmt::format("d{:.4f}ns", delta_ns); }

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw FormatError("cannot open " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// --- correlate helpers ------------------------------------------------------

struct StreamInfo {
    std::string source = "emitter";
    double delta_ns = 0.0;
    Polarization polarization = Polarization::Parallel;
    std::uint64_t seed = 0;
};

StreamInfo stream_info(const fs::path& stream) {
    const fs::path manifest = stream.parent_path() / kManifestName;
    if (!fs::exists(manifest))
        throw FormatError(fmt::format("{}: no {} alongside; delay and polarization unknown", stream.string(),
                                      kManifestName));
    const Manifest m = manifest_from_json(slurp(manifest));
    const std::string name = stream.filename().string();
    for (const auto& e : m.entries)
        if (e.file == name) return {e.source, e.delta_ns, e.polarization, e.seed};
    throw FormatError(fmt::format("{}: not listed in {}", stream.string(), manifest.string()));
}

// --- analyze helpers --------------------------------------------------------

std::vector<fs::path> expand_paths(const std::vector<fs::path>& paths) {
    std::vector<fs::path> out;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> inside;
            for (const auto& e : fs::directory_iterator(p))
                if (e.path().extension() == ".csv") inside.push_back(e.path());
            std::sort(inside.begin(), inside.end());
            out.insert(out.end(), inside.begin(), inside.end());
        } else {
            out.push_back(p);
        }
    }
    return out;
}

std::string source_of(const CsvTable& t) {
    const auto it = t.meta.find("source");
    return it == t.meta.end() ? "emitter" : it->second;
}

void write_fit(const FitResult& r, const fs::path& out, const std::string& name, AnalyzeResult& result) {
    const fs::path p = out / fmt::format("fit_{}.csv", name);
    write_csv(p, fit_parameter_table(r));
    result.files.push_back(p);
    if (!r.linewidths.empty()) {
        const fs::path lw = out / fmt::format("linewidths_{}.csv", name);
        write_csv(lw, linewidth_table(r));
        result.files.push_back(lw);
    }
}

void analyze_fts(const std::vector<CsvTable>& tables, const fs::path& out, AnalyzeResult& result,
                 std::string& report) {
    std::vector<VisibilityEstimate> points;
    for (const auto& t : tables) {
        if (t.get("kind") == "visibility") {
            const auto v = visibility_from_table(t);
            points.insert(points.end(), v.begin(), v.end());
        } else {
            points.push_back(fts_visibility_scan(fringe_from_table(t)));
        }
    }
    std::sort(points.begin(), points.end(),
              [](const VisibilityEstimate& a, const VisibilityEstimate& b) { return a.delta_ns < b.delta_ns; });
    const fs::path vis = out / "visibility.csv";
    write_csv(vis, visibility_table(points));
    result.files.push_back(vis);

    const auto curve = visibility_curve(points);
    const std::pair<FtsModel, const char*> models[] = {
        {FtsModel::Voigt, "fts_voigt"}, {FtsModel::Exp, "fts_exp"}, {FtsModel::Gauss, "fts_gauss"}};
    for (const auto& [m, name] : models) {
        result.fts.push_back(fit_fts(curve, m));
        write_fit(result.fts.back(), out, name, result);
        report += format_report(result.fts.back()) + "\n";
    }
    report += fmt::format("model comparison: AIC(exp) - AIC(voigt) = {:.4f}, AIC(gauss) - AIC(voigt) = {:.4f}\n",
                          aic_difference(result.fts[0], result.fts[1]), aic_difference(result.fts[0], result.fts[2]));
}

PCFSSurface surface_from_g2(const std::vector<CsvTable>& tables, const AnalyzeOptions& o, std::string& report) {
    std::vector<CorrelationHistogram> emitter;
    for (const auto& t : tables) {
        auto h = histogram_from_table(t);
        if (source_of(t) == "laser") {
            report += fmt::format("skipped laser g2 at delta {} ns among the inputs (pass it with --laser-ref)\n",
                                  h.delta_ns);
            continue;
        }
        if (h.polarization == Polarization::Orthogonal) {
            report += fmt::format("skipped orthogonal g2 at delta {} ns\n", h.delta_ns);
            continue;
        }
        emitter.push_back(std::move(h));
    }
    if (emitter.empty()) throw DegenerateInputError("analyze: no parallel-polarization g2 input");

    std::map<double, CorrelationHistogram> lasers;
    for (const auto& p : expand_paths(o.laser_refs)) {
        auto h = histogram_from_table(read_csv(p));
        const double d = h.delta_ns;
        if (!lasers.emplace(d, std::move(h)).second)
            throw DomainError(fmt::format("analyze: two laser references at delta {} ns", d));
    }
    if (o.laser_calibration && lasers.empty())
        throw UsageError("laser calibration requested but no --laser-ref given");

    ContrastCalibration base;
    for (const auto& h : emitter)
        if (h.delta_ns == 0.0) base.zero_delay = plateau(h);
    if (const auto it = lasers.find(0.0); it != lasers.end()) base.laser_zero_delay = plateau(it->second);

    std::vector<ContrastColumn> columns;
    for (const auto& h : emitter) {
        ContrastCalibration cal = base;
        if (!lasers.empty()) {
            const auto it = lasers.find(h.delta_ns);
            if (it == lasers.end())
                throw CalibrationError(fmt::format("analyze: no laser reference for delta {} ns", h.delta_ns));
            cal.laser = &it->second;
        }
        columns.push_back(pcfs_contrast(h, cal));
    }
    return assemble_surface(std::move(columns));
}

}  // namespace

int exit_code(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return 2;
    if (dynamic_cast<const ResolutionError*>(&e) || dynamic_cast<const DegenerateModelError*>(&e) ||
        dynamic_cast<const NotAutocorrelationError*>(&e))
        return 4;
    return 3;
}

unsigned resolve_workers(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

// --- simulate ----------------------------------------------------------------------

SimulateResult cmd_simulate(const RunConfig& config, const fs::path& out, unsigned workers) {
    config.validate();
    ensure_directory(out);
    SimulateResult result;
    result.manifest.config = config;
    auto& entries = result.manifest.entries;

    const auto& deltas = config.deltas_ns;
    if (config.experiment == Experiment::Fts) {
        for (double d : deltas)
            entries.push_back({fmt::format("fringe_{}.csv", delta_tag(d)), "fringe", d, Polarization::Parallel, 0, 0});
    } else {
        for (double d : deltas)
            for (auto p : config.polarizations)
                entries.push_back({fmt::format("emitter_{}_{}.pcfs", delta_tag(d), to_string(p)), "emitter", d, p, 0, 0});
        if (config.laser_reference)
            for (double d : deltas)
                entries.push_back({fmt::format("laser_{}.pcfs", delta_tag(d)), "laser", d, Polarization::Parallel, 0, 0});
    }
    for (std::size_t k = 0; k < entries.size(); ++k) entries[k].seed = derive_seed(config.seed, k);

    const EmitterConfig emitter = config.emitter();
    parallel_for(entries.size(), resolve_workers(workers), [&](std::size_t k) {
        auto& e = entries[k];
        const fs::path path = out / e.file;
        if (e.source == "fringe") {
            const auto scan = simulate_fringe_scan(emitter, e.delta_ns, config.fts_steps, config.fts_exposure_s,
                                                   e.seed, config.v0);
            write_csv(path, fringe_table(scan));
            e.records = scan.phases.size();
        } else {
            const auto interf = config.interferometer(e.delta_ns, e.polarization);
            const ClickStream s = e.source == "laser"
                                      ? simulate_laser_reference(interf, config.duration_s, config.laser_rate, e.seed)
                                      : simulate_clicks(emitter, interf, config.duration_s, e.seed);
            for (const auto& w : s.warnings) spdlog::warn("{}: {}", e.file, w);
            write_stream(path, s);
            e.records = s.records.size();
        }
        spdlog::info("wrote {} ({} records)", path.string(), e.records);
    });

    for (const auto& e : entries) result.files.push_back(out / e.file);
    result.manifest_path = out / kManifestName;
    write_text(result.manifest_path, manifest_to_json(result.manifest));
    return result;
}

// --- correlate -----------------------------------------------------------------------

std::vector<fs::path> cmd_correlate(const std::vector<fs::path>& streams, const LogBinning& binning,
                                    const fs::path& out, unsigned workers) {
    try {
        binning.validate();
    } catch (const DomainError& e) {
        throw UsageError(std::string("binning: ") + e.what());
    }
    if (streams.empty()) throw UsageError("correlate: no stream files given");
    ensure_directory(out);
    const unsigned pool = resolve_workers(workers);
    // few files: give each correlation the spare threads
    const unsigned inner = std::max(1u, pool / static_cast<unsigned>(std::min<std::size_t>(streams.size(), pool)));
    std::vector<fs::path> written(streams.size());
    parallel_for(streams.size(), pool, [&](std::size_t i) {
        const StreamInfo info = stream_info(streams[i]);
        ClickStream s = read_stream(streams[i]);
        s.meta.source = info.source;
        s.meta.delta_ns = info.delta_ns;
        s.meta.polarization = info.polarization;
        s.meta.seed = info.seed;
        auto table = histogram_table(cross_correlate(s, binning, inner));
        table.set("source", info.source);
        table.set("stream", streams[i].filename().string());
        written[i] = out / fmt::format("g2_{}.csv", streams[i].stem().string());
        write_csv(written[i], table);
        spdlog::info("wrote {}", written[i].string());
    });
    return written;
}

// --- analyze -------------------------------------------------------------------------

AnalysisModel analysis_model_from_string(const std::string& s) {
    if (s == "voigt" || s == "voigt-global") return AnalysisModel::Voigt;
    if (s == "grj" || s == "grj-global") return AnalysisModel::Grj;
    if (s == "ou" || s == "ou-linewidth") return AnalysisModel::Ou;
    throw UsageError("unknown model '" + s + "' (voigt, grj or ou)");
}

const char* to_string(AnalysisModel m) {
    switch (m) {
        case AnalysisModel::Voigt: return "voigt";
        case AnalysisModel::Grj: return "grj";
        case AnalysisModel::Ou: return "ou";
    }
    return "?";
}

AnalyzeResult cmd_analyze(const AnalyzeOptions& o, const fs::path& out) {
    if (o.inputs.empty()) throw UsageError("analyze: no input files given");
    ensure_directory(out);
    std::vector<CsvTable> tables;
    for (const auto& p : expand_paths(o.inputs)) tables.push_back(read_csv(p));

    AnalyzeResult result;
    std::string notes;
    std::map<std::string, int> kinds;
    for (const auto& t : tables) ++kinds[t.get("kind")];
    const bool fts = kinds.count("fringe") || kinds.count("visibility");
    const bool pcfs = kinds.count("g2") || kinds.count("surface");
    for (const auto& [k, n] : kinds)
        if (k != "fringe" && k != "visibility" && k != "g2" && k != "surface")
            throw FormatError(fmt::format("analyze: cannot use a '{}' table as input", k));
    if (fts && pcfs) throw UsageError("analyze: mixed FTS and PCFS inputs");

    std::string report = "pcfskit analyze\n";
    report += fmt::format("inputs: {}\n", tables.size());
    if (fts) {
        analyze_fts(tables, out, result, report);
    } else {
        if (kinds.count("surface")) {
            if (tables.size() != 1) throw UsageError("analyze: a surface table must be the only input");
            result.surface = surface_from_table(tables.front());
        } else {
            result.surface = surface_from_g2(tables, o, notes);
        }
        report += notes;
        const PCFSSurface& s = *result.surface;
        report += fmt::format("surface: {} delays x {} lags; calibration: {}\n", s.n_deltas(), s.n_taus(),
                              s.calibration.empty() ? "none" : s.calibration);
        report += fmt::format("fitted lags: {:.4g} .. {:.4g} s\n\n", o.fit.tau_min_s, o.fit.tau_max_s);
        const fs::path sp = out / "surface.csv";
        write_csv(sp, surface_table(s));
        result.files.push_back(sp);

        auto wants = [&](AnalysisModel m) { return std::find(o.models.begin(), o.models.end(), m) != o.models.end(); };
        const bool voigt = wants(AnalysisModel::Voigt) || wants(AnalysisModel::Ou);
        const bool grj = wants(AnalysisModel::Grj);
        // the two global fits are independent
        parallel_for(2, resolve_workers(o.workers), [&](std::size_t i) {
            if (i == 0 && voigt) result.voigt = fit_pcfs_voigt_global(s, o.fit);
            if (i == 1 && grj) result.grj = fit_pcfs_grj_global(s, o.fit);
        });
        if (result.voigt) {
            write_fit(*result.voigt, out, "voigt", result);
            report += format_report(*result.voigt) + "\n";
        }
        if (result.grj) {
            write_fit(*result.grj, out, "grj", result);
            report += format_report(*result.grj) + "\n";
        }
        if (wants(AnalysisModel::Ou)) {
            result.ou = fit_ou_linewidth(linewidth_series(*result.voigt, o.inhom_only),
                                         result.voigt->param("t2").value, o.inhom_only);
            write_fit(*result.ou, out, "ou", result);
            report += format_report(*result.ou);
            const auto& dw = result.ou->param("dw_inf");
            const auto& tsd = result.ou->param("tau_sd");
            report += fmt::format("OU summary: dw_inf/2pi = {:.6g} +- {:.3g} GHz, tau_SD = {:.6g} +- {:.3g} s{}\n\n",
                                  to_ghz(dw.value), to_ghz(dw.sigma), tsd.value, tsd.sigma,
                                  result.ou->tau_sd_unidentifiable ? " (not identified)" : "");
        }
        if (result.voigt && result.grj)
            report += fmt::format("model comparison: AIC(grj) - AIC(voigt) = {:.4f}\n",
                                  aic_difference(*result.voigt, *result.grj));
    }
    const fs::path rp = out / "report.txt";
    write_text(rp, report);
    result.files.push_back(rp);
    result.report = std::move(report);
    return result;
}

// --- spectrum ----------------------------------------------------------------------

std::vector<fs::path> cmd_spectrum(const RunConfig& config, const SpectrumOptions& options, const fs::path& out) {
    config.validate();
    for (double t : options.taus_s)
        if (!(t > 0.0) || !std::isfinite(t)) throw UsageError(fmt::format("spectrum: lag {} s must be positive", t));
    std::vector<double> deltas = options.deltas_ns;
    if (deltas.empty())
        for (int i = 0; i <= 26; ++i) deltas.push_back(0.05 * i);
    ensure_directory(out);

    const EmitterConfig em = config.emitter();
    const double hom = 2.0 / em.t2;
    double sigma_inf = 0.0, tau_sd = 0.0;
    if (em.sd) std::visit([&](const auto& p) { sigma_inf = p.sigma_inf, tau_sd = p.tau_sd; }, *em.sd);

    // narrowest feature: the homogeneous line or the shortest-lag Gaussian
    double min_fwhm = hom;
    if (config.sd_model == SdModel::Ou) {
        const double tmin = *std::min_element(options.taus_s.begin(), options.taus_s.end());
        min_fwhm = std::min(min_fwhm, kGaussFwhmPerSigma * ou_sigma_of_tau(tmin, std::get<OUProcess>(*em.sd)));
    } else if (config.sd_model == SdModel::Jump) {
        min_fwhm = std::min(min_fwhm, kGaussFwhmPerSigma * sigma_inf);
    }
    const double max_fwhm = hom + 2.0 * kGaussFwhmPerSigma * sigma_inf;
    FrequencyGrid grid = FrequencyGrid::for_lineshapes(max_fwhm, min_fwhm, sigma_inf);
    if (options.grid_points > 0) {
        grid = FrequencyGrid(options.grid_points, grid.span());
        grid.require_resolves(min_fwhm);
    }

    std::vector<fs::path> files;
    auto emit = [&](const std::string& name, const CsvTable& t) {
        files.push_back(out / name);
        write_csv(files.back(), t);
    };
    const Spectrum s_hom = lorentzian_hom(em.t2, grid);
    emit("s_hom.csv", spectrum_table(s_hom, "S_hom"));

    for (std::size_t k = 0; k < options.taus_s.size(); ++k) {
        const double tau = options.taus_s[k];
        std::optional<SpectralCorrelation> p_inhom;
        if (config.sd_model == SdModel::Ou) p_inhom = ou_p_inhom_on_grid(tau, std::get<OUProcess>(*em.sd), grid);
        if (config.sd_model == SdModel::Jump)
            p_inhom = mixture_on_grid(jump_p_inhom(tau, std::get<JumpProcess>(*em.sd)), tau, grid);
        Spectrum s_eff = s_hom;
        if (p_inhom) {
            Spectrum s_inhom = effective_inhom_spectrum(*p_inhom);
            s_inhom.tau_s = tau;
            auto t = spectrum_table(s_inhom, "S_inhom");
            emit(fmt::format("s_inhom_tau{}.csv", k), t);
            s_eff = effective_spectrum(s_hom, s_inhom);
        }
        s_eff.tau_s = tau;
        emit(fmt::format("s_eff_tau{}.csv", k), spectrum_table(s_eff, "S_eff"));
    }

    CsvTable c;
    c.set("kind", "contrast_model");
    c.set("table_version", "1");
    c.set("t2_ns", em.t2);
    c.set("sd_model", config.sd_model == SdModel::Ou ? "ou" : config.sd_model == SdModel::Jump ? "jump" : "none");
    c.columns = {"delta_ns", "tau_s", "contrast"};
    const double t2s = sigma_inf > 0.0 ? t2star_from_sigma(sigma_inf) : kInf;
    for (double tau : options.taus_s) {
        DecayModelParams p{em.t2, kInf, 1.0, ModelKind::PcfsVoigt};
        if (config.sd_model == SdModel::Ou) p = ou_voigt_params(tau, em.t2, t2s, tau_sd);
        if (config.sd_model == SdModel::Jump) p = jump_params(tau, em.t2, t2s, tau_sd);
        for (double d : deltas)
            c.add_row({format_number(d), format_number(tau), format_number(model_pcfs_contrast(d, p))});
    }
    emit("contrast_model.csv", c);
    return files;
}

}  // namespace pcfs
