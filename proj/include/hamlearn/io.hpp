#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hamlearn {

// Shortest form guaranteed to round-trip: 17 significant digits.
std::string format_double(double x);
double parse_double(const std::string& s);
std::vector<std::string> split_csv_line(const std::string& line);

// FNV-1a 64-bit content hash, rendered as 16 hex digits.
std::uint64_t fnv1a64(std::string_view data);
std::string hash_hex(std::string_view data);

std::string read_text_file(const std::filesystem::path& path);
// Creates parent directories as needed; throws IoError with the path.
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hamlearn
