#pragma once

#include <string>

#include "json.hpp"
#include "locedit/providers.hpp"

namespace locedit {

// Fine-tuning loss terms and their noise-level weighted total.
struct LossTerms {
  double l_paired = 0.0;
  double l_global = 0.0;
  double l_mask_fg = 0.0;
  double l_mask_bg = 0.0;
  double l_perc = 0.0;
  double l_loc = 0.0;
};

struct LossBundle {
  LossTerms terms;
  int t = 0;
  int max_step = 0;
  double lambda_perc = 0.0;
  double total = 0.0;

  // (1 - t/T) * (l_loc + l_global) + (t/T) * (l_fg + l_bg) + lambda_perc * l_perc
  static double weighted_total(const LossTerms& terms, int t, int max_step, double lambda_perc);

  // {"step", "t", "l_paired", "l_global", "l_fg", "l_bg", "l_perc", "l_loc", "total"}
  nlohmann::ordered_json log_row(long step) const;
};

LossBundle combine(const LossTerms& terms, int t, int max_step, double lambda_perc);

// Mean squared error over all elements.
double loss_paired(const Latent& eps2, const Latent& eps_pred);
Latent loss_paired_grad(const Latent& eps2, const Latent& eps_pred);

struct MaskLoss {
  double fg = 0.0;
  double bg = 0.0;
};

// Foreground term supervises eps2 on m2, background term eps1 on m1bar; both are means over
// ALL elements, so masked-out entries contribute zero. Masks are [1, h, w] latent-resolution.
MaskLoss loss_mask(const Latent& eps1, const Latent& eps2, const Latent& eps_pred, const Tensor& m2_lat,
                   const Tensor& m1bar_lat);
// Gradient of (w_fg * fg + w_bg * bg) with respect to eps_pred.
Latent loss_mask_grad(const Latent& eps1, const Latent& eps2, const Latent& eps_pred, const Tensor& m2_lat,
                      const Tensor& m1bar_lat, double w_fg, double w_bg);

// 1 - cos(embed_image(image), embed_text(text)).
double clip_distance(const Image& image, const std::string& text, const ImageTextEmbedder& embedder);
Image clip_distance_grad(const Image& image, const std::string& text, const ImageTextEmbedder& embedder);

double loss_global(const Image& x_hat, const std::string& edit_prompt, const ImageTextEmbedder& embedder);
Image loss_global_grad(const Image& x_hat, const std::string& edit_prompt, const ImageTextEmbedder& embedder);

struct LocalisedLoss {
  double value = 0.0;
  bool empty_mask = false;
};

// clip_distance(x_hat * m1, diff_prompt); an empty m1 yields 1.0 with the flag set.
LocalisedLoss loss_localised(const Image& x_hat, const std::string& diff_prompt, const Mask& m1,
                             const ImageTextEmbedder& embedder);
Image loss_localised_grad(const Image& x_hat, const std::string& diff_prompt, const Mask& m1,
                          const ImageTextEmbedder& embedder);

// mean_i (V(x_hat * m1)_i - V(x2 * m2)_i)^2
double loss_perceptual(const Image& x_hat, const Image& x2, const Mask& m1, const Mask& m2,
                       const FeatureExtractor& features);
Image loss_perceptual_grad(const Image& x_hat, const Image& x2, const Mask& m1, const Mask& m2,
                           const FeatureExtractor& features);

}  // namespace locedit
