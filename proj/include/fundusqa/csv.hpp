#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fundusqa {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

double parse_double(std::string_view s);

// Minimal comma-separated reader: header row mandatory, no quoting, LF or
// CRLF line endings.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path);

// Column lookup by header name; throws std::runtime_error when missing.
int column_index(const CsvTable& table, const std::string& name);

}  // namespace fundusqa
