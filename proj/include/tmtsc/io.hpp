#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tmtsc {

/// Writes to a sibling temporary and renames it over path, so readers see
/// either the old file or the complete new one.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
/// Whole file as bytes; missing_file if absent, io on read failure.
std::string read_file(const std::filesystem::path& path);

}  // namespace tmtsc
