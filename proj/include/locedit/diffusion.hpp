#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "locedit/conditioning.hpp"
#include "locedit/tensor.hpp"

namespace locedit {

enum class ScheduleKind { kLinear, kScaledLinear };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

// Cumulative signal fractions alpha_bar[t] for t = 0..T, with alpha_bar[0] == 1.
class NoiseSchedule {
 public:
  static NoiseSchedule make(int max_step, double beta_start, double beta_end, ScheduleKind kind);
  // Explicit betas for steps 1..T (betas[0] is step 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int max_step() const { return static_cast<int>(betas_.size()); }
  double alpha_bar(int t) const;
  std::span<const double> alpha_bars() const { return alpha_bar_; }
  std::span<const double> betas() const { return betas_; }

  ScheduleKind kind() const { return kind_; }
  double beta_start() const { return beta_start_; }
  double beta_end() const { return beta_end_; }

  // {"T", "kind", "beta_start", "beta_end"}; alpha_bar is recomputed on load.
  nlohmann::json to_json() const;
  static NoiseSchedule from_json(const nlohmann::json& j);

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
  ScheduleKind kind_ = ScheduleKind::kLinear;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
};

// Toy default: T=100, linear 1e-4 .. 0.02.
NoiseSchedule default_toy_schedule();
// Latent-diffusion default: T=1000, scaled_linear 0.00085 .. 0.012.
NoiseSchedule default_ldm_schedule();

Latent add_noise(const Latent& clean, const Latent& noise, int t, const NoiseSchedule& sched);
Latent target_noise(const Latent& noisy, const Latent& target, int t, const NoiseSchedule& sched);
Latent predict_clean(const Latent& noisy, const Latent& eps_pred, int t, const NoiseSchedule& sched);
// Deterministic (eta = 0) DDIM update from t to t_prev.
Latent ddim_step(const Latent& noisy, const Latent& eps_pred, int t, int t_prev, const NoiseSchedule& sched);

// Decreasing DDIM step sub-sequence ending in 0.
struct TimestepPlan {
  std::vector<int> steps;
  int start_index = 0;

  int transitions() const { return steps.empty() ? 0 : static_cast<int>(steps.size()) - 1; }
  void validate(int max_step) const;
};

// Evenly spaced plan of `n_steps` transitions from T to 0, keeping the last ceil(strength*n_steps).
TimestepPlan make_plan(int max_step, int n_steps, double strength);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Latent predict(const Latent& noisy, int t, const Conditioning& cond) const = 0;
  virtual Shape latent_shape() const = 0;
  // Whether predict() may be called from several threads at once.
  virtual bool concurrent_safe() const { return true; }
};

using EpsFn = std::function<Latent(const Latent& noisy, int t)>;
using BlendHook = std::function<Latent(const Latent& latent, int t)>;

// Runs ddim_step over consecutive plan entries; blend_hook(latent, t_prev) is applied after each update.
// Throws NumericError naming the step if the latent stops being finite.
Latent ddim_sample(const EpsFn& eps_fn, const Latent& z_init, const TimestepPlan& plan, const NoiseSchedule& sched,
                   const BlendHook& blend_hook = {});
Latent ddim_sample(const Denoiser& denoiser, const Conditioning& cond, const Latent& z_init,
                   const TimestepPlan& plan, const NoiseSchedule& sched, const BlendHook& blend_hook = {});

}  // namespace locedit
