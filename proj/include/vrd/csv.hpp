#pragma once

// Minimal RFC 4180 helpers for the toolkit's CSV artifacts.

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace vrd::csv {

/// Quotes `field` if it contains a comma, quote, or line break.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Splits one record. Quoted fields may not span lines.
std::vector<std::string> split(std::string_view line);

/// Reads all non-empty records; strips a trailing '\r'.
std::vector<std::vector<std::string>> read_all(std::istream& in);

double to_double(const std::string& text, std::string_view what);
long long to_int(const std::string& text, std::string_view what);

}  // namespace vrd::csv
