#include "locedit/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace locedit {

namespace fs = std::filesystem;

NoiseSchedule ScheduleSettings::make() const {
  return NoiseSchedule::make(T, beta_start, beta_end, parse_schedule_kind(kind));
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ParameterError("config " + key + ": not a number: '" + v + "'");
  return d;
}

long to_long(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) throw ParameterError("config " + key + ": not an integer: '" + v + "'");
  return n;
}

int to_int(const std::string& key, const std::string& v) {
  const long n = to_long(key, v);
  if (n < -2147483647L || n > 2147483647L) throw ParameterError("config " + key + ": out of range");
  return static_cast<int>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError("config " + key + ": not a boolean: '" + v + "'");
}

using Setter = std::function<void(Config&, const std::string& key, const std::string& value, const fs::path& base)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"providers.autoencoder", [](Config& c, auto&, auto& v, auto&) { c.providers.autoencoder = v; }},
      {"providers.embedder", [](Config& c, auto&, auto& v, auto&) { c.providers.embedder = v; }},
      {"providers.segmenter", [](Config& c, auto&, auto& v, auto&) { c.providers.segmenter = v; }},
      {"providers.captioner", [](Config& c, auto&, auto& v, auto&) { c.providers.captioner = v; }},
      {"providers.features", [](Config& c, auto&, auto& v, auto&) { c.providers.features = v; }},
      {"schedule.T", [](Config& c, auto& k, auto& v, auto&) { c.schedule.T = to_int(k, v); }},
      {"schedule.kind", [](Config& c, auto&, auto& v, auto&) { c.schedule.kind = v; }},
      {"schedule.beta_start", [](Config& c, auto& k, auto& v, auto&) { c.schedule.beta_start = to_double(k, v); }},
      {"schedule.beta_end", [](Config& c, auto& k, auto& v, auto&) { c.schedule.beta_end = to_double(k, v); }},
      {"train.steps", [](Config& c, auto& k, auto& v, auto&) { c.train.steps = to_long(k, v); }},
      {"train.lr", [](Config& c, auto& k, auto& v, auto&) { c.train.lr = to_double(k, v); }},
      {"train.lambda_perc", [](Config& c, auto& k, auto& v, auto&) { c.train.lambda_perc = to_double(k, v); }},
      {"train.alternation_period",
       [](Config& c, auto& k, auto& v, auto&) { c.train.alternation_period = to_int(k, v); }},
      {"train.ckpt_every", [](Config& c, auto& k, auto& v, auto&) { c.train.ckpt_every = to_long(k, v); }},
      {"train.log_path", [](Config& c, auto&, auto& v, auto& base) { c.train.log_path = base / v; }},
      {"train.optimizer", [](Config& c, auto&, auto& v, auto&) { c.train.optimizer = v; }},
      {"edit.strength", [](Config& c, auto& k, auto& v, auto&) { c.edit.strength = to_double(k, v); }},
      {"edit.guidance", [](Config& c, auto& k, auto& v, auto&) { c.edit.guidance = to_double(k, v); }},
      {"edit.variants", [](Config& c, auto& k, auto& v, auto&) { c.edit.variants = to_int(k, v); }},
      {"edit.ddim_steps", [](Config& c, auto& k, auto& v, auto&) { c.edit.ddim_steps = to_int(k, v); }},
      {"edit.mask_threshold", [](Config& c, auto& k, auto& v, auto&) { c.edit.mask_threshold = to_double(k, v); }},
      {"eval.clip_rescale", [](Config& c, auto& k, auto& v, auto&) { c.clip_rescale = to_bool(k, v); }},
      {"paths.workdir", [](Config& c, auto&, auto& v, auto& base) { c.workdir = base / v; }},
  };
  return table;
}

}  // namespace

Config parse_config(const std::string& text, const fs::path& base_dir) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ParameterError(where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParameterError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParameterError(where + ": empty key");
    if (key.find('.') == std::string::npos) {
      if (section.empty()) throw ParameterError(where + ": key '" + key + "' outside a section");
      key = section + "." + key;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ParameterError(where + ": unknown key '" + key + "'");
    it->second(cfg, key, value, base_dir);
    cfg.explicit_keys.insert(key);
  }
  return cfg;
}

Config load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.has_parent_path() ? path.parent_path() : fs::path("."));
}

}  // namespace locedit
