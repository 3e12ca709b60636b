#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "json.hpp"

namespace locedit {

enum class PartOfSpeech { kNoun, kAdjective, kOther };

std::string to_string(PartOfSpeech pos);
PartOfSpeech parse_pos(const std::string& name);

// Word relations used to mutate captions into edit prompts. Ordered containers keep
// seeded choices reproducible.
struct Lexicon {
  std::map<std::string, std::set<std::string>> antonyms;
  std::map<std::string, std::set<std::string>> cohyponyms;
  std::map<std::string, PartOfSpeech> pos;

  PartOfSpeech pos_of(const std::string& word) const;
  const std::set<std::string>& antonyms_of(const std::string& word) const;
  const std::set<std::string>& cohyponyms_of(const std::string& word) const;

  // Throws ParameterError on self-listed cohyponyms or non-lowercase words.
  void validate() const;

  nlohmann::json to_json() const;
  static Lexicon from_json(const nlohmann::json& j);
  static Lexicon load(const std::filesystem::path& path);
};

}  // namespace locedit
