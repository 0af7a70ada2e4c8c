#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sevrank::io {

// Writes to a sibling temp file and renames it over `path`, so readers see
// either the old content or the complete new content.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Lines with trailing '\r' removed.
std::vector<std::string> read_lines(const std::filesystem::path& path);

std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);

std::string hex64(std::uint64_t v);

}  // namespace sevrank::io
