#pragma once

// Plain-text tables. Layout (see FORMATS.md):
//
//   # key = value          metadata lines, any number, sorted by key
//   col_a,col_b,...        header row
//   v,v,...                data rows
//
// Numbers are written with 17 significant digits ("nan", "inf", "-inf" for
// non-finite values), so parse → write → parse is a fixpoint.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pcfs/correlator.hpp"
#include "pcfs/fitting.hpp"
#include "pcfs/spectra.hpp"

namespace pcfs {

struct CsvTable {
    std::map<std::string, std::string> meta;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    /// Index of a column; throws FormatError when absent.
    std::size_t column(std::string_view name) const;
    double number(std::size_t row, std::string_view col) const;
    std::uint64_t integer(std::size_t row, std::string_view col) const;
    const std::string& text(std::size_t row, std::string_view col) const;

    const std::string& get(const std::string& key) const;  ///< throws FormatError when absent
    double get_number(const std::string& key) const;
    void set(const std::string& key, const std::string& value) { meta[key] = value; }
    void set(const std::string& key, double value);

    void add_row(std::vector<std::string> row);
};

std::string format_number(double v);
std::string format_integer(std::uint64_t v);
/// Strict parse of a whole field; throws FormatError naming `what`.
double parse_number(std::string_view s, std::string_view what);

std::string to_csv_text(const CsvTable& t);
/// Throws FormatError with the byte offset of the offending line.
CsvTable parse_csv_text(std::string_view text);

void write_csv(const std::filesystem::path& path, const CsvTable& t);
CsvTable read_csv(const std::filesystem::path& path);

/// Writes text to a file, throwing std::runtime_error when it cannot.
void write_text(const std::filesystem::path& path, std::string_view text);

// --- typed tables (meta key "kind" names the layout) ---------------------

CsvTable histogram_table(const CorrelationHistogram& h);
CorrelationHistogram histogram_from_table(const CsvTable& t);

CsvTable surface_table(const PCFSSurface& s);
PCFSSurface surface_from_table(const CsvTable& t);

CsvTable visibility_table(const std::vector<VisibilityEstimate>& v);
std::vector<VisibilityEstimate> visibility_from_table(const CsvTable& t);

CsvTable fringe_table(const FringeScan& scan);
FringeScan fringe_from_table(const CsvTable& t);

/// One row per fitted parameter (shared rows carry dataset = -1).
CsvTable fit_parameter_table(const FitResult& r);
/// Per-slice linewidths in GHz.
CsvTable linewidth_table(const FitResult& r);

/// Continuous density plus a `dirac` column holding the symbolic Dirac weight
/// on the center sample (zero elsewhere).
CsvTable spectrum_table(const Spectrum& s, std::string_view label);

}  // namespace pcfs
