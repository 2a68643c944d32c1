#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace iotmap {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Calls fn(line_number, line) for every non-blank line that does not start with '#'.
/// Line numbers are 1-based and count every physical line. Throws IoError if unreadable.
void for_each_data_line(const std::filesystem::path& path,
                        const std::function<void(std::size_t, std::string_view)>& fn);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see partial files.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace iotmap
