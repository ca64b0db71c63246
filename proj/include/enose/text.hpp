#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace enose {

// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

// Strict parse of a full field; throws ParseError with `context` on failure.
double parse_double(std::string_view field, std::string_view context);
long long parse_int(std::string_view field, std::string_view context);

std::vector<std::string_view> split(std::string_view line, char sep);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// 64-bit FNV-1a, used for configuration digests.
std::string fnv1a_hex(std::string_view data);

} // namespace enose
