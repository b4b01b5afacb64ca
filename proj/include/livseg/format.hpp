#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace livseg {

// Locale-independent number formatting (std::to_chars).
std::string format_shortest(double value);
std::string format_fixed(double value, int decimals);

// Strict full-string parse; std::nullopt on any leftover characters.
std::optional<double> parse_double(std::string_view s);

std::vector<std::string_view> split(std::string_view s, char sep);

} // namespace livseg
