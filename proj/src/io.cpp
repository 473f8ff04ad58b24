#include "pcfs/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "pcfs/errors.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

constexpr int kTableVersion = 1;

void check_field(std::string_view s, std::string_view what) {
    if (s.find_first_of(",\n\r") != std::string_view::npos)
        throw DomainError(fmt::format("csv: {} '{}' contains a comma or newline", what, s));
}

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

void require_kind(const CsvTable& t, std::string_view kind) {
    const auto it = t.meta.find("kind");
    if (it == t.meta.end() || it->second != kind)
        throw FormatError(fmt::format("csv: expected a '{}' table, found '{}'", kind,
                                      it == t.meta.end() ? std::string("?") : it->second));
}

CsvTable make_table(std::string_view kind, std::vector<std::string> columns) {
    CsvTable t;
    t.set("kind", std::string(kind));
    t.set("table_version", std::to_string(kTableVersion));
    t.columns = std::move(columns);
    return t;
}

std::string flag_text(bool b) { return b ? "1" : "0"; }

}  // namespace

// --- CsvTable ----------------------------------------------------------------

std::size_t CsvTable::column(std::string_view name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw FormatError(fmt::format("csv: missing column '{}'", name));
    return static_cast<std::size_t>(it - columns.begin());
}

double CsvTable::number(std::size_t row, std::string_view col) const {
    return parse_number(rows.at(row)[column(col)], col);
}

std::uint64_t CsvTable::integer(std::size_t row, std::string_view col) const {
    const std::string& s = rows.at(row)[column(col)];
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        throw FormatError(fmt::format("csv: column '{}' row {}: '{}' is not an unsigned integer", col, row, s));
    return v;
}

const std::string& CsvTable::text(std::size_t row, std::string_view col) const {
    return rows.at(row)[column(col)];
}

const std::string& CsvTable::get(const std::string& key) const {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError(fmt::format("csv: missing header key '{}'", key));
    return it->second;
}

double CsvTable::get_number(const std::string& key) const { return parse_number(get(key), key); }

void CsvTable::set(const std::string& key, double value) { meta[key] = format_number(value); }

void CsvTable::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size())
        throw DomainError(fmt::format("csv: row has {} fields, header has {}", row.size(), columns.size()));
    rows.push_back(std::move(row));
}

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return fmt::format("{:.17g}", v);
}

std::string format_integer(std::uint64_t v) { return std::to_string(v); }

double parse_number(std::string_view s, std::string_view what) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size())
        throw FormatError(fmt::format("csv: '{}' is not a number ({})", s, what));
    return v;
}

std::string to_csv_text(const CsvTable& t) {
    std::string out;
    for (const auto& [k, v] : t.meta) {
        check_field(k, "header key");
        if (v.find('\n') != std::string::npos) throw DomainError("csv: header value contains a newline");
        if (k.find('=') != std::string::npos) throw DomainError("csv: header key contains '='");
        out += fmt::format("# {} = {}\n", k, v);
    }
    for (const auto& c : t.columns) check_field(c, "column name");
    out += fmt::format("{}\n", fmt::join(t.columns, ","));
    for (const auto& r : t.rows) {
        for (const auto& f : r) check_field(f, "field");
        out += fmt::format("{}\n", fmt::join(r, ","));
    }
    return out;
}

CsvTable parse_csv_text(std::string_view text) {
    CsvTable t;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) throw FormatError("csv: truncated line (no trailing newline)", pos);
        const std::string_view line = text.substr(pos, nl - pos);
        const std::size_t offset = pos;
        pos = nl + 1;
        if (!line.empty() && line.front() == '#') {
            if (have_header) throw FormatError("csv: header line after the column row", offset);
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) throw FormatError("csv: header line without '='", offset);
            const std::string key(trim(line.substr(1, eq - 1)));
            std::string_view value = line.substr(eq + 1);
            if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
            if (key.empty()) throw FormatError("csv: empty header key", offset);
            t.meta[key] = std::string(value);
            continue;
        }
        if (!have_header) {
            if (line.empty()) throw FormatError("csv: empty column row", offset);
            t.columns = split(line);
            have_header = true;
            continue;
        }
        auto fields = split(line);
        if (fields.size() != t.columns.size())
            throw FormatError(fmt::format("csv: row has {} fields, header has {}", fields.size(), t.columns.size()),
                              offset);
        t.rows.push_back(std::move(fields));
    }
    if (!have_header) throw FormatError("csv: no column row", text.size());
    return t;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

void write_csv(const std::filesystem::path& path, const CsvTable& t) { write_text(path, to_csv_text(t)); }

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    try {
        return parse_csv_text(ss.str());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// --- g² histograms -------------------------------------------------------------

CsvTable histogram_table(const CorrelationHistogram& h) {
    auto t = make_table("g2", {"tau_lo_ps", "tau_hi_ps", "tau_s", "g2", "sigma", "pairs", "flagged"});
    t.set("delta_ns", h.delta_ns);
    t.set("polarization", to_string(h.polarization));
    t.set("n_a", format_integer(h.n_a));
    t.set("n_b", format_integer(h.n_b));
    t.set("rate_a", h.rate_a);
    t.set("rate_b", h.rate_b);
    t.set("duration_s", h.duration_s);
    t.set("tau_min_s", h.binning.tau_min);
    t.set("tau_max_s", h.binning.tau_max);
    t.set("bins_per_decade", std::to_string(h.binning.bins_per_decade));
    t.set("short_time_merge_s", h.binning.short_time_merge);
    for (std::size_t k = 0; k < h.taus.size(); ++k)
        t.add_row({format_integer(h.edges_ps[k]), format_integer(h.edges_ps[k + 1]), format_number(h.taus[k]),
                   format_number(h.g2[k]), format_number(h.sigma[k]), format_integer(h.raw_pairs[k]),
                   flag_text(h.flagged[k] != 0)});
    return t;
}

CorrelationHistogram histogram_from_table(const CsvTable& t) {
    require_kind(t, "g2");
    CorrelationHistogram h;
    h.delta_ns = t.get_number("delta_ns");
    h.polarization = polarization_from_string(t.get("polarization"));
    h.n_a = static_cast<std::uint64_t>(t.get_number("n_a"));
    h.n_b = static_cast<std::uint64_t>(t.get_number("n_b"));
    h.rate_a = t.get_number("rate_a");
    h.rate_b = t.get_number("rate_b");
    h.duration_s = t.get_number("duration_s");
    h.binning.tau_min = t.get_number("tau_min_s");
    h.binning.tau_max = t.get_number("tau_max_s");
    h.binning.bins_per_decade = static_cast<int>(t.get_number("bins_per_decade"));
    h.binning.short_time_merge = t.get_number("short_time_merge_s");
    if (t.rows.empty()) throw FormatError("g2 table has no rows");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto lo = t.integer(i, "tau_lo_ps");
        if (i == 0) h.edges_ps.push_back(lo);
        else if (lo != h.edges_ps.back()) throw FormatError(fmt::format("g2 table: bins not contiguous at row {}", i));
        h.edges_ps.push_back(t.integer(i, "tau_hi_ps"));
        h.taus.push_back(t.number(i, "tau_s"));
        h.g2.push_back(t.number(i, "g2"));
        h.sigma.push_back(t.number(i, "sigma"));
        h.raw_pairs.push_back(t.integer(i, "pairs"));
        h.flagged.push_back(static_cast<std::uint8_t>(t.integer(i, "flagged") != 0));
    }
    if (h.binning.edges_ps() != h.edges_ps) throw FormatError("g2 table: bin edges disagree with the binning header");
    return h;
}

// --- PCFS surfaces ---------------------------------------------------------------

CsvTable surface_table(const PCFSSurface& s) {
    auto t = make_table("surface", {"delta_ns", "tau_s", "tau_lo_s", "tau_hi_s", "contrast", "sigma", "flagged"});
    t.set("calibration", s.calibration);
    t.set("n_deltas", std::to_string(s.n_deltas()));
    t.set("n_taus", std::to_string(s.n_taus()));
    const bool edges = !s.tau_edges.empty();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < s.n_deltas(); ++i)
        for (std::size_t k = 0; k < s.n_taus(); ++k)
            t.add_row({format_number(s.deltas[i]), format_number(s.taus[k]),
                       format_number(edges ? s.tau_edges[k] : nan), format_number(edges ? s.tau_edges[k + 1] : nan),
                       format_number(s.contrast[i][k]), format_number(s.sigma[i][k]),
                       flag_text(s.flagged[i][k] != 0)});
    return t;
}

PCFSSurface surface_from_table(const CsvTable& t) {
    require_kind(t, "surface");
    PCFSSurface s;
    s.calibration = t.get("calibration");
    const auto nd = static_cast<std::size_t>(t.get_number("n_deltas"));
    const auto nt = static_cast<std::size_t>(t.get_number("n_taus"));
    if (nd * nt != t.rows.size() || nt == 0)
        throw FormatError(fmt::format("surface table: {} rows for {} x {} grid", t.rows.size(), nd, nt));
    for (std::size_t k = 0; k < nt; ++k) {
        s.taus.push_back(t.number(k, "tau_s"));
        const double lo = t.number(k, "tau_lo_s");
        if (!std::isnan(lo)) {
            if (k == 0) s.tau_edges.push_back(lo);
            s.tau_edges.push_back(t.number(k, "tau_hi_s"));
        }
    }
    if (!s.tau_edges.empty() && s.tau_edges.size() != nt + 1) throw FormatError("surface table: partial bin edges");
    for (std::size_t i = 0; i < nd; ++i) {
        s.deltas.push_back(t.number(i * nt, "delta_ns"));
        std::vector<double> c, e;
        std::vector<std::uint8_t> f;
        for (std::size_t k = 0; k < nt; ++k) {
            const std::size_t r = i * nt + k;
            if (t.number(r, "delta_ns") != s.deltas[i] || t.number(r, "tau_s") != s.taus[k])
                throw FormatError(fmt::format("surface table: row {} breaks the delta-major grid", r));
            c.push_back(t.number(r, "contrast"));
            e.push_back(t.number(r, "sigma"));
            f.push_back(static_cast<std::uint8_t>(t.integer(r, "flagged") != 0));
        }
        s.contrast.push_back(std::move(c));
        s.sigma.push_back(std::move(e));
        s.flagged.push_back(std::move(f));
    }
    return s;
}

// --- FTS ---------------------------------------------------------------------------

CsvTable visibility_table(const std::vector<VisibilityEstimate>& v) {
    auto t = make_table("visibility", {"delta_ns", "visibility", "sigma", "reduced_chi2"});
    for (const auto& p : v)
        t.add_row({format_number(p.delta_ns), format_number(p.visibility), format_number(p.sigma),
                   format_number(p.reduced_chi2)});
    return t;
}

std::vector<VisibilityEstimate> visibility_from_table(const CsvTable& t) {
    require_kind(t, "visibility");
    std::vector<VisibilityEstimate> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        out.push_back({t.number(i, "delta_ns"), t.number(i, "visibility"), t.number(i, "sigma"),
                       t.number(i, "reduced_chi2")});
    return out;
}

CsvTable fringe_table(const FringeScan& scan) {
    auto t = make_table("fringe", {"phase_rad", "counts_a", "counts_b"});
    t.set("delta_ns", scan.delta_ns);
    for (std::size_t k = 0; k < scan.phases.size(); ++k)
        t.add_row({format_number(scan.phases[k]), format_number(scan.counts_a[k]), format_number(scan.counts_b[k])});
    return t;
}

FringeScan fringe_from_table(const CsvTable& t) {
    require_kind(t, "fringe");
    FringeScan s;
    s.delta_ns = t.get_number("delta_ns");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        s.phases.push_back(t.number(i, "phase_rad"));
        s.counts_a.push_back(t.number(i, "counts_a"));
        s.counts_b.push_back(t.number(i, "counts_b"));
    }
    return s;
}

// --- fit output ----------------------------------------------------------------------

CsvTable fit_parameter_table(const FitResult& r) {
    auto t = make_table("fit", {"dataset", "tau_s", "name", "value", "sigma", "fixed", "at_bound"});
    t.set("model", r.model);
    t.set("chi2", r.chi2);
    t.set("dof", std::to_string(r.dof));
    t.set("aic", r.aic);
    t.set("converged", flag_text(r.converged));
    t.set("iterations", std::to_string(r.n_iterations));
    if (r.tau_sd) {
        t.set("tau_sd_s", r.tau_sd->value);
        t.set("tau_sd_sigma_s", r.tau_sd->sigma);
    }
    if (r.inflection_tau_s) t.set("inflection_tau_s", *r.inflection_tau_s);
    t.set("tau_sd_unidentifiable", flag_text(r.tau_sd_unidentifiable));
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto row = [&](const std::string& ds, double tau, const ParamEstimate& p) {
        check_field(p.name, "parameter name");
        t.add_row({ds, format_number(tau), p.name, format_number(p.value), format_number(p.sigma),
                   flag_text(p.fixed), flag_text(p.at_bound)});
    };
    for (const auto& p : r.shared) row("-1", nan, p);
    for (std::size_t j = 0; j < r.per_dataset.size(); ++j)
        for (const auto& p : r.per_dataset[j])
            row(std::to_string(j), j < r.dataset_tau.size() ? r.dataset_tau[j] : nan, p);
    return t;
}

CsvTable linewidth_table(const FitResult& r) {
    auto t = make_table("linewidths", {"tau_s", "tau_lo_s", "tau_hi_s", "inhom_pcfs_ghz", "inhom_pcfs_sigma_ghz",
                                       "inhom_fts_ghz", "inhom_fts_sigma_ghz", "total_ghz", "total_sigma_ghz"});
    t.set("model", r.model);
    for (const auto& w : r.linewidths)
        t.add_row({format_number(w.tau_s), format_number(w.tau_lo), format_number(w.tau_hi),
                   format_number(to_ghz(w.inhom_pcfs)), format_number(to_ghz(w.inhom_pcfs_sigma)),
                   format_number(to_ghz(w.inhom_fts)), format_number(to_ghz(w.inhom_fts_sigma)),
                   format_number(to_ghz(w.total)), format_number(to_ghz(w.total_sigma))});
    return t;
}

CsvTable spectrum_table(const Spectrum& s, std::string_view label) {
    auto t = make_table("spectrum", {"omega_rad_per_ns", "density", "dirac"});
    t.set("label", std::string(label));
    t.set("dirac_weight", s.dirac_weight);
    t.set("tau_s", s.tau_s ? *s.tau_s : std::numeric_limits<double>::quiet_NaN());
    t.set("grid_points", std::to_string(s.grid.size()));
    t.set("grid_span_rad_per_ns", s.grid.span());
    if (s.dirac_weight == 0.0) t.set("fwhm_rad_per_ns", fwhm(s));
    const std::size_t mid = s.grid.size() / 2;
    for (std::size_t k = 0; k < s.grid.size(); ++k)
        t.add_row({format_number(s.grid.point(k)), format_number(s.values[k]),
                   format_number(k == mid ? s.dirac_weight : 0.0)});
    return t;
}

}  // namespace pcfs
