#pragma once

#include <filesystem>
#include <string>

namespace isoimm {

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories as needed.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace isoimm
