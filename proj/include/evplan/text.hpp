#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace evplan {

/// Shortest round-trip decimal for a double (via std::to_chars), so that
/// repeated runs emit byte-identical files.
std::string format_double(double value);

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

/// Splits one CSV line on commas. The schemas used by this project carry no
/// quoting or embedded separators.
std::vector<std::string> csv_fields(std::string_view line);

}  // namespace evplan
