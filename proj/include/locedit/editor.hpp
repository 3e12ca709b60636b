#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "locedit/diffusion.hpp"
#include "locedit/providers.hpp"

namespace locedit {

struct EditRequest {
  Image image;
  std::string prompt;
  std::optional<std::string> diff_prompt;  // names the region to edit
  std::optional<Mask> mask;                // explicit mask, overrides the segmenter
  double strength = 0.7;
  double guidance = 7.5;
  int n_variants = 4;
  int ddim_steps = 50;
  double mask_threshold = 0.5;
  std::uint64_t seed = 0;
  bool use_mask = false;

  void validate() const;
};

struct EditResult {
  std::vector<Image> images;
  std::optional<Mask> mask_used;
  TimestepPlan plan;
  std::vector<std::uint64_t> variant_seeds;
  std::vector<std::string> warnings;
  long denoiser_calls = 0;
};

// eps_u + g * (eps_c - eps_u)
Latent guided_eps(const Denoiser& model, const Latent& noisy, int t, const Conditioning& cond,
                  const Conditioning& uncond, double guidance);

// (1 - m) * z_src_t + m * z_tilde, with a [1, h, w] mask broadcast over channels.
Latent blend(const Latent& z_tilde, const Latent& z_src_t, const Tensor& m_lat);

// Partial noising to the plan's first step, guided DDIM back to 0, optional latent blending
// against the source re-noised with the variant's fixed noise, then decoding.
EditResult edit(const EditRequest& req, const Denoiser& model, const NoiseSchedule& sched,
                const ProviderSet& providers);

// {"inputs", "plan", "outputs", "mask", "variant_seeds"}
nlohmann::ordered_json result_manifest(const nlohmann::ordered_json& inputs, const EditResult& result,
                                       const std::vector<std::string>& outputs,
                                       const std::optional<std::string>& mask_path);

}  // namespace locedit
