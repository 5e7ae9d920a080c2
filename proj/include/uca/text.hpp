#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace uca {

/// Lowercases and splits on whitespace and ASCII punctuation; punctuation
/// is dropped.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);

}  // namespace uca
