#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace numlab {

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`, so readers
// never observe a partially written file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// "key = value" lines; blank lines and lines starting with '#' are skipped.
// Throws ParseError naming `source` and the line for anything else.
std::map<std::string, std::string> parse_key_values(std::string_view text, const std::string& source);

}  // namespace numlab
