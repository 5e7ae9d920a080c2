#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace uca {

/// 64-bit FNV-1a, hex encoded. Cheap content tag for in-memory buffers.
std::string fnv1a_hex(std::span<const std::byte> bytes);
std::string fnv1a_hex(std::string_view text);

/// SHA-256 of a file's contents, hex encoded. Throws IoError.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view data);

}  // namespace uca
