#pragma once

#include <filesystem>
#include <set>
#include <string>

#include "locedit/diffusion.hpp"
#include "locedit/providers.hpp"

namespace locedit {

// Defaults follow the latent-diffusion schedule.
struct ScheduleSettings {
  int T = 1000;
  std::string kind = "scaled_linear";
  double beta_start = 0.00085;
  double beta_end = 0.012;

  NoiseSchedule make() const;
};

struct TrainSettings {
  long steps = 1000;
  double lr = 2e-4;
  double lambda_perc = 0.1;
  int alternation_period = 1;
  long ckpt_every = 0;
  std::filesystem::path log_path;  // empty: next to the checkpoint
  std::string optimizer = "sgd";
};

struct EditSettings {
  double strength = 0.7;
  double guidance = 7.5;
  int variants = 4;
  int ddim_steps = 50;
  double mask_threshold = 0.5;
};

// Sectioned key=value file. Keys may be written as "key" under a [section] header or as
// "section.key" anywhere; '#' and ';' start comments. Unknown keys are rejected and relative
// paths resolve against the file's directory.
struct Config {
  ProviderNames providers;
  ScheduleSettings schedule;
  TrainSettings train;
  EditSettings edit;
  bool clip_rescale = false;
  std::filesystem::path workdir;  // empty: current directory
  std::set<std::string> explicit_keys;

  bool has(const std::string& key) const { return explicit_keys.count(key) != 0; }
};

Config parse_config(const std::string& text, const std::filesystem::path& base_dir);
Config load_config(const std::filesystem::path& path);

}  // namespace locedit
