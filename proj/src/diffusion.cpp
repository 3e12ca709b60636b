#include "locedit/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace locedit {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::kLinear ? "linear" : "scaled_linear"; }

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "scaled_linear") return ScheduleKind::kScaledLinear;
  throw ParameterError("unknown schedule kind '" + name + "'");
}

NoiseSchedule NoiseSchedule::make(int max_step, double beta_start, double beta_end, ScheduleKind kind) {
  if (max_step < 1) throw ParameterError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ParameterError("schedule needs 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(max_step);
  for (int i = 0; i < max_step; ++i) {
    const double frac = max_step == 1 ? 0.0 : static_cast<double>(i) / (max_step - 1);
    if (kind == ScheduleKind::kLinear) {
      betas[i] = beta_start + frac * (beta_end - beta_start);
    } else {
      const double s = std::sqrt(beta_start) + frac * (std::sqrt(beta_end) - std::sqrt(beta_start));
      betas[i] = s * s;
    }
  }
  NoiseSchedule sched = from_betas(std::move(betas));
  sched.kind_ = kind;
  sched.beta_start_ = beta_start;
  sched.beta_end_ = beta_end;
  return sched;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ParameterError("schedule needs T >= 1");
  NoiseSchedule sched;
  sched.alpha_bar_.reserve(betas.size() + 1);
  sched.alpha_bar_.push_back(1.0);
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw ParameterError("betas must lie in (0, 1)");
    sched.alpha_bar_.push_back(sched.alpha_bar_.back() * (1.0 - b));
  }
  sched.beta_start_ = betas.front();
  sched.beta_end_ = betas.back();
  sched.betas_ = std::move(betas);
  return sched;
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > max_step()) {
    throw ParameterError("step " + std::to_string(t) + " outside [0, " + std::to_string(max_step()) + "]");
  }
  return alpha_bar_[t];
}

nlohmann::json NoiseSchedule::to_json() const {
  return {{"T", max_step()}, {"kind", to_string(kind_)}, {"beta_start", beta_start_}, {"beta_end", beta_end_}};
}

NoiseSchedule NoiseSchedule::from_json(const nlohmann::json& j) {
  try {
    return make(j.at("T").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>(),
                parse_schedule_kind(j.at("kind").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid schedule json: ") + e.what());
  }
}

NoiseSchedule default_toy_schedule() { return NoiseSchedule::make(100, 1e-4, 0.02, ScheduleKind::kLinear); }

NoiseSchedule default_ldm_schedule() {
  return NoiseSchedule::make(1000, 0.00085, 0.012, ScheduleKind::kScaledLinear);
}

namespace {

void require_noisy_step(int t, const NoiseSchedule& sched, const char* what) {
  if (t < 1 || t > sched.max_step()) {
    throw ParameterError(std::string(what) + ": step " + std::to_string(t) + " outside [1, " +
                         std::to_string(sched.max_step()) + "]");
  }
}

}  // namespace

Latent add_noise(const Latent& clean, const Latent& noise, int t, const NoiseSchedule& sched) {
  require_same_shape(clean, noise, "add_noise");
  require_noisy_step(t, sched, "add_noise");
  const double ab = sched.alpha_bar(t);
  return axpby(std::sqrt(ab), clean, std::sqrt(1.0 - ab), noise);
}

Latent target_noise(const Latent& noisy, const Latent& target, int t, const NoiseSchedule& sched) {
  require_same_shape(noisy, target, "target_noise");
  if (t == 0) throw ParameterError("target_noise: step 0 has no noise (division by zero)");
  require_noisy_step(t, sched, "target_noise");
  const double ab = sched.alpha_bar(t);
  const double inv = 1.0 / std::sqrt(1.0 - ab);
  return axpby(inv, noisy, -std::sqrt(ab) * inv, target);
}

Latent predict_clean(const Latent& noisy, const Latent& eps_pred, int t, const NoiseSchedule& sched) {
  require_same_shape(noisy, eps_pred, "predict_clean");
  require_noisy_step(t, sched, "predict_clean");
  const double ab = sched.alpha_bar(t);
  const double inv = 1.0 / std::sqrt(ab);
  return axpby(inv, noisy, -std::sqrt(1.0 - ab) * inv, eps_pred);
}

Latent ddim_step(const Latent& noisy, const Latent& eps_pred, int t, int t_prev, const NoiseSchedule& sched) {
  if (t_prev >= t) {
    throw ParameterError("ddim_step: t_prev " + std::to_string(t_prev) + " must be below t " + std::to_string(t));
  }
  if (t_prev < 0) throw ParameterError("ddim_step: negative t_prev");
  const double ab_prev = sched.alpha_bar(t_prev);
  Latent clean = predict_clean(noisy, eps_pred, t, sched);
  return axpby(std::sqrt(ab_prev), clean, std::sqrt(1.0 - ab_prev), eps_pred);
}

void TimestepPlan::validate(int max_step) const {
  if (steps.empty()) throw ParameterError("timestep plan is empty");
  if (steps.back() != 0) throw ParameterError("timestep plan must end at step 0");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (steps[i] < 0 || steps[i] > max_step) throw ParameterError("timestep plan entry outside [0, T]");
    if (i > 0 && steps[i] >= steps[i - 1]) throw ParameterError("timestep plan must be strictly decreasing");
  }
}

TimestepPlan make_plan(int max_step, int n_steps, double strength) {
  if (n_steps < 1) throw ParameterError("DDIM plan needs at least one step");
  if (n_steps > max_step) throw ParameterError("DDIM plan cannot have more steps than T");
  if (!(strength >= 0.0 && strength <= 1.0)) throw ParameterError("strength must lie in [0, 1]");
  std::vector<int> full;
  full.reserve(n_steps + 1);
  for (int k = n_steps; k >= 0; --k) {
    full.push_back(static_cast<int>(std::lround(static_cast<double>(k) * max_step / n_steps)));
  }
  // The epsilon absorbs products such as 0.7 * 50 landing a hair above an integer.
  const int kept = std::min(n_steps, static_cast<int>(std::ceil(strength * n_steps - 1e-9)));
  TimestepPlan plan;
  plan.start_index = n_steps - kept;
  plan.steps.assign(full.begin() + plan.start_index, full.end());
  plan.validate(max_step);
  return plan;
}

Latent ddim_sample(const EpsFn& eps_fn, const Latent& z_init, const TimestepPlan& plan, const NoiseSchedule& sched,
                   const BlendHook& blend_hook) {
  plan.validate(sched.max_step());
  Latent z = z_init;
  for (std::size_t i = 0; i + 1 < plan.steps.size(); ++i) {
    const int t = plan.steps[i];
    const int t_prev = plan.steps[i + 1];
    const Latent eps = eps_fn(z, t);
    require_same_shape(z, eps, "ddim_sample");
    z = ddim_step(z, eps, t, t_prev, sched);
    if (blend_hook) z = blend_hook(z, t_prev);
    if (!z.all_finite()) {
      throw NumericError("ddim_sample: non-finite latent after step " + std::to_string(t) + " -> " +
                         std::to_string(t_prev));
    }
  }
  return z;
}

Latent ddim_sample(const Denoiser& denoiser, const Conditioning& cond, const Latent& z_init,
                   const TimestepPlan& plan, const NoiseSchedule& sched, const BlendHook& blend_hook) {
  if (z_init.shape() != denoiser.latent_shape()) {
    throw ShapeError("ddim_sample: initial latent " + z_init.shape().str() + " does not match denoiser " +
                     denoiser.latent_shape().str());
  }
  return ddim_sample([&](const Latent& z, int t) { return denoiser.predict(z, t, cond); }, z_init, plan, sched,
                     blend_hook);
}

}  // namespace locedit
