#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lav::textio {

/// 17 significant digits in scientific form; parses back to the same double.
std::string format_double(double v);

/// Strict parses: the whole token must be consumed.
bool parse_double(std::string_view s, double& out);
bool parse_int(std::string_view s, std::int64_t& out);
bool parse_u64(std::string_view s, std::uint64_t& out);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

std::string read_file(const std::filesystem::path& p);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& p, std::string_view contents);

}  // namespace lav::textio
