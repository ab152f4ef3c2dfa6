#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string_view>

namespace air {

/// Writes through a temporary sibling file and renames it over `path`, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::function<void(std::ostream&)>& writer, bool binary = false);

void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_text(const std::filesystem::path& path);

}  // namespace air
