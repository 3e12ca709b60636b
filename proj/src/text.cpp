#include "locedit/text.hpp"

#include <cctype>
#include <sstream>

namespace locedit {

std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string normalize_word(std::string_view token) {
  std::size_t begin = 0;
  std::size_t end = token.size();
  while (begin < end && !std::isalnum(static_cast<unsigned char>(token[begin]))) ++begin;
  while (end > begin && !std::isalnum(static_cast<unsigned char>(token[end - 1]))) --end;
  std::string out(token.substr(begin, end - begin));
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& tok : split_tokens(text)) {
    std::string w = normalize_word(tok);
    if (!w.empty()) out.push_back(std::move(w));
  }
  return out;
}

}  // namespace locedit
