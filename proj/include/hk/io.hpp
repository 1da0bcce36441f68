#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace hk {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Calls `fn(object, line_number)` for every non-blank line of a JSONL file.
/// Lines carrying a top-level "_meta" key are provenance headers and are skipped.
void for_each_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn);

std::string read_file(const fs::path& path);

/// Writes through a temporary file and renames, so readers never see a torn file.
void write_file_atomic(const fs::path& path, std::string_view content);

std::string sha256_hex(std::string_view data);

/// FNV-1a. Stable across platforms; used to derive per-item seeds.
std::uint64_t stable_hash64(std::string_view data);

/// Required field accessor with a message that names the field and line.
template <typename T>
T require_field(const json& obj, const char* field, std::size_t line);

}  // namespace hk
