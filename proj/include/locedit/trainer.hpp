#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "locedit/dataset.hpp"
#include "locedit/denoiser.hpp"
#include "locedit/losses.hpp"
#include "locedit/rng.hpp"

namespace locedit {

struct TrainConfig {
  long steps = 1000;
  double lr = 2e-4;
  double lambda_perc = 0.1;
  std::uint64_t seed = 0;
  int alternation_period = 1;
  int batch_size = 1;  // only 1 is supported
  long ckpt_every = 0;  // 0: checkpoint only at the end
  std::string optimizer = "sgd";  // "sgd" or "adam"

  void validate() const;
  nlohmann::json to_json() const;
};

// A manifest triplet with its images and masks loaded.
struct TrainingSample {
  std::string id;
  Image source;
  Image target;
  Mask source_mask;
  Mask target_mask;
  std::string edit_prompt;
  std::string diff_target;
};

std::vector<TrainingSample> load_training_samples(const std::vector<ManifestEntry>& entries);

// The random part of one training step.
struct StepDraw {
  int t = 1;
  Latent eps1;
};

StepDraw draw_step(Rng& rng, Shape latent, int max_step);

struct ObjectiveResult {
  LossBundle bundle;
  std::vector<double> grad;  // d total / d parameters; empty unless requested
};

// Fine-tuning objective for a fixed draw. Gradients flow through the one-step clean
// estimate decode(predict_clean(z_t, eps_pred, t)) into the CLIP and perceptual terms.
ObjectiveResult evaluate_objective(const TrainableDenoiser& model, const TrainingSample& sample, const StepDraw& draw,
                                   const NoiseSchedule& sched, const ProviderSet& providers, double lambda_perc,
                                   bool with_grad);

// floor(step / period) even -> input layers, odd -> middle layers.
ParamGroup select_active_group(long step, int period);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual std::string name() const = 0;
  // Updates only the entries whose label equals `active`.
  virtual void update(std::span<double> params, std::span<const double> grad, const std::vector<ParamGroup>& labels,
                      ParamGroup active) = 0;
};

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr);

// Binary blob "LOCEDIT1" + count + doubles, with a JSON sidecar at <path>.json.
struct Checkpoint {
  std::vector<double> params;
  nlohmann::json model;     // denoiser architecture
  nlohmann::json schedule;  // NoiseSchedule::to_json()
  nlohmann::json config;    // training config
  long step = 0;
  std::vector<double> loss_tail;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
  static std::filesystem::path sidecar_path(const std::filesystem::path& path);

  std::unique_ptr<TrainableDenoiser> make_model() const;
  NoiseSchedule make_schedule() const;
};

LossBundle train_step(const TrainingSample& sample, TrainableDenoiser& model, const NoiseSchedule& sched,
                      const ProviderSet& providers, const TrainConfig& cfg, Optimizer& optimizer, long step);

struct FitOutputs {
  std::filesystem::path checkpoint;  // empty: nothing written
  std::filesystem::path loss_log;    // empty: no log
};

// Runs cfg.steps seeded train steps over shuffled samples. A non-finite loss raises
// NumericError; the last periodic checkpoint on disk is left in place.
Checkpoint fit(const std::vector<TrainingSample>& samples, TrainableDenoiser& model, const ProviderSet& providers,
               const NoiseSchedule& sched, const TrainConfig& cfg, const FitOutputs& outputs = {},
               std::vector<LossBundle>* history = nullptr);

struct PretrainConfig {
  long steps = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double prompt_dropout = 0.1;
  std::string optimizer = "adam";

  void validate() const;
  nlohmann::json to_json() const;
};

// Plain text-conditioned denoising on captioned images, all parameters trainable.
// Captions are dropped to the empty prompt with probability prompt_dropout so the model
// also learns the unconditional prediction used by guidance.
std::vector<double> pretrain(const std::vector<CaptionedImage>& corpus, TrainableDenoiser& model,
                             const ProviderSet& providers, const NoiseSchedule& sched, const PretrainConfig& cfg);

}  // namespace locedit
