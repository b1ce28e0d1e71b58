#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace reefloop::text {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Like format_double but always carries a decimal point or exponent, as TOML
/// floats require.
std::string format_toml_float(double v);

std::optional<double> parse_double(std::string_view s);

/// Splits on `sep` and parses every field as a double (surrounding blanks
/// allowed). Returns nullopt if any field is not a number.
std::optional<std::vector<double>> split_numbers(std::string_view line, char sep);

std::vector<std::string> split(std::string_view s, char sep);

std::string base64_encode(std::string_view bytes);
/// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace reefloop::text
