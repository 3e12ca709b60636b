#include "locedit/lexicon.hpp"

#include <cctype>
#include <fstream>

#include "locedit/errors.hpp"

namespace locedit {

std::string to_string(PartOfSpeech pos) {
  switch (pos) {
    case PartOfSpeech::kNoun:
      return "noun";
    case PartOfSpeech::kAdjective:
      return "adjective";
    case PartOfSpeech::kOther:
      break;
  }
  return "other";
}

PartOfSpeech parse_pos(const std::string& name) {
  if (name == "noun") return PartOfSpeech::kNoun;
  if (name == "adjective") return PartOfSpeech::kAdjective;
  if (name == "other") return PartOfSpeech::kOther;
  throw ParameterError("unknown part of speech '" + name + "'");
}

namespace {

const std::set<std::string>& lookup(const std::map<std::string, std::set<std::string>>& table,
                                    const std::string& word) {
  static const std::set<std::string> kNone;
  auto it = table.find(word);
  return it == table.end() ? kNone : it->second;
}

bool is_lower(const std::string& word) {
  for (char ch : word) {
    if (std::isupper(static_cast<unsigned char>(ch))) return false;
  }
  return !word.empty();
}

}  // namespace

PartOfSpeech Lexicon::pos_of(const std::string& word) const {
  auto it = pos.find(word);
  return it == pos.end() ? PartOfSpeech::kOther : it->second;
}

const std::set<std::string>& Lexicon::antonyms_of(const std::string& word) const { return lookup(antonyms, word); }

const std::set<std::string>& Lexicon::cohyponyms_of(const std::string& word) const {
  return lookup(cohyponyms, word);
}

void Lexicon::validate() const {
  auto check_table = [](const std::map<std::string, std::set<std::string>>& table, const char* what,
                        bool forbid_self) {
    for (const auto& [key, values] : table) {
      if (!is_lower(key)) throw ParameterError(std::string(what) + " key '" + key + "' is not lowercase");
      for (const auto& v : values) {
        if (!is_lower(v)) throw ParameterError(std::string(what) + " entry '" + v + "' is not lowercase");
      }
      if (forbid_self && values.count(key) != 0) {
        throw ParameterError(std::string(what) + " set of '" + key + "' contains the word itself");
      }
    }
  };
  check_table(antonyms, "antonym", false);
  check_table(cohyponyms, "cohyponym", true);
  for (const auto& [word, _] : pos) {
    if (!is_lower(word)) throw ParameterError("pos key '" + word + "' is not lowercase");
  }
}

nlohmann::json Lexicon::to_json() const {
  nlohmann::json j;
  j["antonyms"] = nlohmann::json::object();
  j["cohyponyms"] = nlohmann::json::object();
  j["pos"] = nlohmann::json::object();
  for (const auto& [k, v] : antonyms) j["antonyms"][k] = v;
  for (const auto& [k, v] : cohyponyms) j["cohyponyms"][k] = v;
  for (const auto& [k, v] : pos) j["pos"][k] = to_string(v);
  return j;
}

Lexicon Lexicon::from_json(const nlohmann::json& j) {
  Lexicon lex;
  try {
    for (const auto& [k, v] : j.at("antonyms").items()) lex.antonyms[k] = v.get<std::set<std::string>>();
    for (const auto& [k, v] : j.at("cohyponyms").items()) lex.cohyponyms[k] = v.get<std::set<std::string>>();
    for (const auto& [k, v] : j.at("pos").items()) lex.pos[k] = parse_pos(v.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid lexicon json: ") + e.what());
  }
  lex.validate();
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("lexicon " + path.string() + " is not valid json: " + e.what());
  }
  return from_json(j);
}

}  // namespace locedit
