#include "pcfs/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "pcfs/errors.hpp"
#include "pcfs/stream_io.hpp"
#include "pcfs/units.hpp"

namespace pcfs {

namespace {

double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size())
        throw UsageError(fmt::format("config: {} = '{}' is not a number", key, s));
    return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size())
        throw UsageError(fmt::format("config: {} = '{}' is not an unsigned integer", key, s));
    return v;
}

bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw UsageError(fmt::format("config: {} = '{}' is not a boolean", key, s));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

const char* to_string(Experiment e) { return e == Experiment::Pcfs ? "pcfs" : "fts"; }

const char* to_string(SdModel m) {
    switch (m) {
        case SdModel::None: return "none";
        case SdModel::Ou: return "ou";
        case SdModel::Jump: return "jump";
    }
    return "?";
}

Experiment experiment_from(const std::string& s) {
    if (s == "pcfs") return Experiment::Pcfs;
    if (s == "fts") return Experiment::Fts;
    throw UsageError("config: experiment must be pcfs or fts, got '" + s + "'");
}

SdModel sd_from(const std::string& s) {
    if (s == "none") return SdModel::None;
    if (s == "ou") return SdModel::Ou;
    if (s == "jump") return SdModel::Jump;
    throw UsageError("config: sd_model must be none, ou or jump, got '" + s + "'");
}

Polarization polarization_from(const std::string& s) {
    try {
        return polarization_from_string(s);
    } catch (const std::exception&) {
        throw UsageError("config: unknown polarization '" + s + "'");
    }
}

std::string list_text(const std::vector<double>& v) {
    std::vector<std::string> parts;
    for (double x : v) parts.push_back(fmt::format("{}", x));
    return fmt::format("{}", fmt::join(parts, ", "));
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

// section.key -> setter; the same table drives INI and JSON parsing
const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"run.experiment", [](RunConfig& c, auto&, auto& v) { c.experiment = experiment_from(v); }},
        {"emitter.t1_ns", [](RunConfig& c, auto& k, auto& v) { c.t1_ns = to_double(k, v); }},
        {"emitter.t2_ns", [](RunConfig& c, auto& k, auto& v) { c.t2_ns = to_double(k, v); }},
        {"emitter.detected_rate", [](RunConfig& c, auto& k, auto& v) { c.detected_rate = to_double(k, v); }},
        {"emitter.sd_model", [](RunConfig& c, auto&, auto& v) { c.sd_model = sd_from(v); }},
        {"emitter.inhom_fwhm_ghz", [](RunConfig& c, auto& k, auto& v) { c.inhom_fwhm_ghz = to_double(k, v); }},
        {"emitter.tau_sd_s", [](RunConfig& c, auto& k, auto& v) { c.tau_sd_s = to_double(k, v); }},
        {"interferometer.deltas_ns",
         [](RunConfig& c, auto& k, auto& v) {
             c.deltas_ns.clear();
             for (const auto& s : split_list(v)) c.deltas_ns.push_back(to_double(k, s));
         }},
        {"interferometer.polarizations",
         [](RunConfig& c, auto&, auto& v) {
             c.polarizations.clear();
             for (const auto& s : split_list(v)) c.polarizations.push_back(polarization_from(s));
         }},
        {"interferometer.v0", [](RunConfig& c, auto& k, auto& v) { c.v0 = to_double(k, v); }},
        {"interferometer.drift", [](RunConfig& c, auto&, auto& v) { c.drift = v; }},
        {"interferometer.scan_rate_hz", [](RunConfig& c, auto& k, auto& v) { c.scan_rate_hz = to_double(k, v); }},
        {"interferometer.drift_correlation_s",
         [](RunConfig& c, auto& k, auto& v) { c.drift_correlation_s = to_double(k, v); }},
        {"interferometer.drift_amplitude",
         [](RunConfig& c, auto& k, auto& v) { c.drift_amplitude = to_double(k, v); }},
        {"laser.reference", [](RunConfig& c, auto& k, auto& v) { c.laser_reference = to_bool(k, v); }},
        {"laser.rate", [](RunConfig& c, auto& k, auto& v) { c.laser_rate = to_double(k, v); }},
        {"acquisition.duration_s", [](RunConfig& c, auto& k, auto& v) { c.duration_s = to_double(k, v); }},
        {"acquisition.seed", [](RunConfig& c, auto& k, auto& v) { c.seed = to_u64(k, v); }},
        {"fts.steps", [](RunConfig& c, auto& k, auto& v) { c.fts_steps = to_u64(k, v); }},
        {"fts.exposure_s", [](RunConfig& c, auto& k, auto& v) { c.fts_exposure_s = to_double(k, v); }},
        {"binning.tau_min_s", [](RunConfig& c, auto& k, auto& v) { c.binning.tau_min = to_double(k, v); }},
        {"binning.tau_max_s", [](RunConfig& c, auto& k, auto& v) { c.binning.tau_max = to_double(k, v); }},
        {"binning.bins_per_decade",
         [](RunConfig& c, auto& k, auto& v) { c.binning.bins_per_decade = static_cast<int>(to_u64(k, v)); }},
        {"binning.short_time_merge_s",
         [](RunConfig& c, auto& k, auto& v) { c.binning.short_time_merge = to_double(k, v); }},
    };
    return table;
}

// every setting as section.key -> text
std::vector<std::pair<std::string, std::string>> flatten(const RunConfig& c) {
    std::vector<std::string> pols;
    for (auto p : c.polarizations) pols.emplace_back(to_string(p));
    return {
        {"run.experiment", to_string(c.experiment)},
        {"emitter.t1_ns", fmt::format("{}", c.t1_ns)},
        {"emitter.t2_ns", fmt::format("{}", c.t2_ns)},
        {"emitter.detected_rate", fmt::format("{}", c.detected_rate)},
        {"emitter.sd_model", to_string(c.sd_model)},
        {"emitter.inhom_fwhm_ghz", fmt::format("{}", c.inhom_fwhm_ghz)},
        {"emitter.tau_sd_s", fmt::format("{}", c.tau_sd_s)},
        {"interferometer.deltas_ns", list_text(c.deltas_ns)},
        {"interferometer.polarizations", fmt::format("{}", fmt::join(pols, ", "))},
        {"interferometer.v0", fmt::format("{}", c.v0)},
        {"interferometer.drift", c.drift},
        {"interferometer.scan_rate_hz", fmt::format("{}", c.scan_rate_hz)},
        {"interferometer.drift_correlation_s", fmt::format("{}", c.drift_correlation_s)},
        {"interferometer.drift_amplitude", fmt::format("{}", c.drift_amplitude)},
        {"laser.reference", c.laser_reference ? "true" : "false"},
        {"laser.rate", fmt::format("{}", c.laser_rate)},
        {"acquisition.duration_s", fmt::format("{}", c.duration_s)},
        {"acquisition.seed", fmt::format("{}", c.seed)},
        {"fts.steps", fmt::format("{}", c.fts_steps)},
        {"fts.exposure_s", fmt::format("{}", c.fts_exposure_s)},
        {"binning.tau_min_s", fmt::format("{}", c.binning.tau_min)},
        {"binning.tau_max_s", fmt::format("{}", c.binning.tau_max)},
        {"binning.bins_per_decade", fmt::format("{}", c.binning.bins_per_decade)},
        {"binning.short_time_merge_s", fmt::format("{}", c.binning.short_time_merge)},
    };
}

void apply(RunConfig& c, const std::string& key, const std::string& value) {
    const auto it = setters().find(key);
    if (it == setters().end()) throw UsageError("config: unknown key '" + key + "'");
    it->second(c, key, value);
}

}  // namespace

std::vector<double> default_deltas() {
    std::vector<double> d;
    for (int i = 0; i < 14; ++i) d.push_back(i / 10.0);
    return d;
}

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw UsageError("config: " + what);
    };
    require(deltas_ns.size() > 0, "deltas_ns is empty");
    for (double d : deltas_ns) require(std::isfinite(d) && d >= 0.0, fmt::format("delta {} ns is negative", d));
    for (std::size_t i = 1; i < deltas_ns.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            require(deltas_ns[i] != deltas_ns[j], fmt::format("delta {} ns listed twice", deltas_ns[i]));
    require(!polarizations.empty(), "no polarization selected");
    require(duration_s > 0.0 && std::isfinite(duration_s), "duration_s must be positive");
    require(laser_rate > 0.0 && std::isfinite(laser_rate), "laser.rate must be positive");
    require(fts_steps >= 3, "fts.steps must be at least 3");
    require(fts_exposure_s > 0.0, "fts.exposure_s must be positive");
    require(drift == "scan" || drift == "walk" || drift == "none", "drift must be scan, walk or none");
    require(inhom_fwhm_ghz > 0.0 && tau_sd_s > 0.0, "SD parameters must be positive");
    try {
        emitter().validate();
        interferometer(deltas_ns.front(), polarizations.front()).validate();
        binning.validate();
    } catch (const DomainError& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    if (experiment == Experiment::Pcfs)
        require(binning.tau_max < duration_s, "binning.tau_max_s must be below the duration");
}

EmitterConfig RunConfig::emitter() const {
    EmitterConfig e;
    e.t1 = t1_ns;
    e.t2 = t2_ns;
    e.detected_rate = detected_rate;
    const double fwhm = from_ghz(inhom_fwhm_ghz);
    if (sd_model == SdModel::Ou) e.sd = OUProcess::from_fwhm(fwhm, tau_sd_s);
    if (sd_model == SdModel::Jump) e.sd = JumpProcess::from_fwhm(fwhm, tau_sd_s);
    return e;
}

InterferometerConfig RunConfig::interferometer(double delta_ns, Polarization p) const {
    InterferometerConfig in;
    in.delta_ns = delta_ns;
    in.polarization = p;
    in.v0 = v0;
    if (drift == "scan") in.drift = PhaseDrift::scan(scan_rate_hz);
    else if (drift == "walk") in.drift = PhaseDrift{drift_correlation_s, drift_amplitude, 0.0};
    else in.drift = PhaseDrift::none();
    return in;
}

RunConfig config_from_ini(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw UsageError(std::string("config: ") + e.what());
    }
    RunConfig c;
    c.deltas_ns = default_deltas();
    for (const auto& [section, keys] : tree) {
        if (keys.empty() && !keys.data().empty())
            throw UsageError("config: key '" + section + "' outside any section");
        for (const auto& [key, value] : keys) apply(c, section + "." + key, value.data());
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') return manifest_from_json(text).config;
    return config_from_ini(text);
}

std::string config_to_ini(const RunConfig& c) {
    std::string out, section;
    for (const auto& [key, value] : flatten(c)) {
        const auto dot = key.find('.');
        const std::string s = key.substr(0, dot);
        if (s != section) {
            out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", s);
            section = s;
        }
        out += fmt::format("{} = {}\n", key.substr(dot + 1), value);
    }
    return out;
}

nlohmann::ordered_json config_to_json(const RunConfig& c) {
    // fmt's shortest round-trip text parses back to the same double
    nlohmann::ordered_json j;
    for (const auto& [key, value] : flatten(c)) {
        const auto dot = key.find('.');
        auto& slot = j[key.substr(0, dot)][key.substr(dot + 1)];
        std::uint64_t u = 0;
        double d = 0.0;
        const char* end = value.data() + value.size();
        if (auto r = std::from_chars(value.data(), end, u); r.ec == std::errc() && r.ptr == end) slot = u;
        else if (auto r2 = std::from_chars(value.data(), end, d); r2.ec == std::errc() && r2.ptr == end) slot = d;
        else if (value == "true" || value == "false") slot = value == "true";
        else slot = value;
    }
    j["interferometer"]["deltas_ns"] = c.deltas_ns;
    return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.deltas_ns = default_deltas();
    if (!j.is_object()) throw UsageError("manifest: config is not an object");
    for (const auto& [section, keys] : j.items()) {
        if (!keys.is_object()) throw UsageError("manifest: config section '" + section + "' is not an object");
        for (const auto& [key, value] : keys.items()) {
            const std::string full = section + "." + key;
            if (full == "interferometer.deltas_ns") c.deltas_ns = value.get<std::vector<double>>();
            else if (value.is_number_float()) apply(c, full, fmt::format("{}", value.get<double>()));
            else if (value.is_boolean()) apply(c, full, value.get<bool>() ? "true" : "false");
            else if (value.is_number()) apply(c, full, value.dump());
            else if (value.is_string()) apply(c, full, value.get<std::string>());
            else throw UsageError("manifest: unsupported value for '" + full + "'");
        }
    }
    c.validate();
    return c;
}

std::string manifest_to_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["format"] = "pcfskit-manifest";
    j["manifest_version"] = kManifestVersion;
    j["stream_format_version"] = kStreamFormatVersion;
    j["seed_rule"] = "stream seed = splitmix64(root ^ splitmix64(index + 1))";
    j["config"] = config_to_json(m.config);
    auto& entries = j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : m.entries)
        entries.push_back({{"file", e.file},
                           {"source", e.source},
                           {"delta_ns", e.delta_ns},
                           {"polarization", to_string(e.polarization)},
                           {"seed", e.seed},
                           {"records", e.records}});
    return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("manifest: ") + e.what(), e.byte);
    }
    try {
        if (j.value("format", "") != "pcfskit-manifest") throw FormatError("manifest: not a pcfskit manifest");
        if (j.at("manifest_version").get<int>() != kManifestVersion)
            throw FormatError("manifest: unsupported manifest_version");
        Manifest m;
        m.config = config_from_json(j.at("config"));
        for (const auto& e : j.at("entries"))
            m.entries.push_back({e.at("file").get<std::string>(), e.at("source").get<std::string>(),
                                 e.at("delta_ns").get<double>(),
                                 polarization_from(e.at("polarization").get<std::string>()),
                                 e.at("seed").get<std::uint64_t>(), e.at("records").get<std::uint64_t>()});
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

}  // namespace pcfs
