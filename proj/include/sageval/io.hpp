#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace sageval::io {

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over `path`, so readers never
// observe a half-written file. Parent directories are created.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Pretty-printed (2-space) JSON with a trailing newline.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& value);

nlohmann::json read_json_file(const std::filesystem::path& path);

// File stem for a record named after a form id: anything outside
// [A-Za-z0-9._-] becomes '_', and a leading '.' gets a '_' prefix.
std::string safe_file_stem(std::string_view id);

}  // namespace sageval::io
