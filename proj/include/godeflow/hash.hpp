#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace godeflow {

// SHA-1 of "blob <size>\0<content>", hex encoded (same id git assigns).
std::string blob_hash(std::string_view content);

std::string file_hash(const std::filesystem::path& path);

// Hash of the sorted "<name> <blob hash>\n" listing of a directory's regular
// files (non-recursive).
std::string directory_hash(const std::filesystem::path& dir);

}  // namespace godeflow
