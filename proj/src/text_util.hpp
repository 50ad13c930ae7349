#pragma once

// Internal helpers shared by the CSV and model readers/writers.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace excon::detail {

// "%a" when hex is true, otherwise "%.17g" (both round-trip exactly).
std::string format_real(double v, bool hex = true);

// Parses a finite decimal or hexadecimal float literal. Anything else,
// including nan/inf tokens, throws ParseError carrying the given line.
double parse_real(std::string_view token, std::size_t line);

// Parses a non-negative integer; throws ParseError otherwise.
std::size_t parse_count(std::string_view token, std::size_t line);

std::vector<std::string> split_commas(std::string_view line);
std::string_view trim(std::string_view s);

}  // namespace excon::detail
