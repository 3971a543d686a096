#pragma once

#include <string>
#include <vector>

namespace dosedr::csv {

//! A parsed CSV file: one header row plus string cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    //! Column index for `name`; throws UsageError when absent.
    std::size_t column(const std::string& name) const;
    bool has_column(const std::string& name) const;
};

//! Reads a comma-separated file with a mandatory header row.
//! Cells are taken verbatim (no quoting rules); leading/trailing
//! whitespace is trimmed. Throws ParseError on ragged rows.
Table read_file(const std::string& path);

//! Writes a table; cells must not contain commas or newlines.
void write_file(const std::string& path, const Table& table);

//! Shortest-ish decimal rendering that round-trips a double (%.17g with
//! downshift to fewer digits when exact). NaN renders as an empty cell.
std::string format_double(double x);

//! Strict double parse of a full cell; returns false on any trailing junk.
bool parse_double(const std::string& cell, double& out);

} // namespace dosedr::csv
