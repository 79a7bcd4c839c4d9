#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ktune {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);

// Non-empty lines of a text file, without terminators.
std::vector<std::string> read_lines(const fs::path& path);

// Writes to a sibling temp file, then renames over `path`. Creates parent directories.
void write_file_atomic(const fs::path& path, std::string_view content);

std::string sha256_hex(std::string_view data);

// UTC wall-clock time, ISO-8601 with seconds resolution.
std::string utc_timestamp();

} // namespace ktune
