#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace tailflow::io {

std::string sha1_hex(std::string_view bytes);

/// Content hash as git computes it for a blob: sha1("blob <len>\0" + bytes).
std::string git_blob_hash(std::string_view bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

}  // namespace tailflow::io
