#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

namespace cirfuse {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path);

/// Pretty-printed (2-space) with a trailing newline. Key order is the
/// library's sorted order, so equal documents give equal bytes.
void write_json_file(const Json& doc, const std::filesystem::path& path);

}  // namespace cirfuse
