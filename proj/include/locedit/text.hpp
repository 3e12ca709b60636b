#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace locedit {

// Whitespace-separated tokens, verbatim.
std::vector<std::string> split_tokens(std::string_view text);
std::string join_tokens(const std::vector<std::string>& tokens);
// Lowercased token with leading/trailing non-alphanumerics removed.
std::string normalize_word(std::string_view token);
// normalize_word over split_tokens, dropping tokens that normalize to "".
std::vector<std::string> words(std::string_view text);

}  // namespace locedit
