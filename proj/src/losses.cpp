#include "locedit/losses.hpp"

#include <cmath>

namespace locedit {

double LossBundle::weighted_total(const LossTerms& terms, int t, int max_step, double lambda_perc) {
  const double w = static_cast<double>(t) / static_cast<double>(max_step);
  return (1.0 - w) * (terms.l_loc + terms.l_global) + w * (terms.l_mask_fg + terms.l_mask_bg) +
         lambda_perc * terms.l_perc;
}

nlohmann::ordered_json LossBundle::log_row(long step) const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["t"] = t;
  j["l_paired"] = terms.l_paired;
  j["l_global"] = terms.l_global;
  j["l_fg"] = terms.l_mask_fg;
  j["l_bg"] = terms.l_mask_bg;
  j["l_perc"] = terms.l_perc;
  j["l_loc"] = terms.l_loc;
  j["total"] = total;
  return j;
}

LossBundle combine(const LossTerms& terms, int t, int max_step, double lambda_perc) {
  if (max_step < 1 || t < 1 || t > max_step) throw ParameterError("combine: need 1 <= t <= T");
  if (!(lambda_perc >= 0.0)) throw ParameterError("combine: lambda_perc must be non-negative");
  return LossBundle{terms, t, max_step, lambda_perc, LossBundle::weighted_total(terms, t, max_step, lambda_perc)};
}

double loss_paired(const Latent& eps2, const Latent& eps_pred) {
  require_same_shape(eps2, eps_pred, "loss_paired");
  double acc = 0.0;
  for (std::size_t i = 0; i < eps2.size(); ++i) {
    const double d = eps2[i] - eps_pred[i];
    acc += d * d;
  }
  return acc / static_cast<double>(eps2.size());
}

Latent loss_paired_grad(const Latent& eps2, const Latent& eps_pred) {
  require_same_shape(eps2, eps_pred, "loss_paired_grad");
  return (eps_pred - eps2) * (2.0 / static_cast<double>(eps2.size()));
}

namespace {

void require_latent_mask(const Latent& ref, const Tensor& m, const char* what) {
  if (m.channels() != 1 || m.height() != ref.height() || m.width() != ref.width()) {
    throw ShapeError(std::string(what) + ": mask " + m.shape().str() + " does not match latent " +
                     ref.shape().str());
  }
}

}  // namespace

MaskLoss loss_mask(const Latent& eps1, const Latent& eps2, const Latent& eps_pred, const Tensor& m2_lat,
                   const Tensor& m1bar_lat) {
  require_same_shape(eps1, eps_pred, "loss_mask");
  require_same_shape(eps2, eps_pred, "loss_mask");
  require_latent_mask(eps_pred, m2_lat, "loss_mask");
  require_latent_mask(eps_pred, m1bar_lat, "loss_mask");
  const std::size_t plane = eps_pred.shape().plane();
  double fg = 0.0;
  double bg = 0.0;
  for (int c = 0; c < eps_pred.channels(); ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = c * plane + p;
      const double df = (eps2[i] - eps_pred[i]) * m2_lat[p];
      const double db = (eps1[i] - eps_pred[i]) * m1bar_lat[p];
      fg += df * df;
      bg += db * db;
    }
  }
  const double n = static_cast<double>(eps_pred.size());
  return MaskLoss{fg / n, bg / n};
}

Latent loss_mask_grad(const Latent& eps1, const Latent& eps2, const Latent& eps_pred, const Tensor& m2_lat,
                      const Tensor& m1bar_lat, double w_fg, double w_bg) {
  require_same_shape(eps1, eps_pred, "loss_mask_grad");
  require_same_shape(eps2, eps_pred, "loss_mask_grad");
  require_latent_mask(eps_pred, m2_lat, "loss_mask_grad");
  require_latent_mask(eps_pred, m1bar_lat, "loss_mask_grad");
  const std::size_t plane = eps_pred.shape().plane();
  const double scale = 2.0 / static_cast<double>(eps_pred.size());
  Latent g(eps_pred.shape());
  for (int c = 0; c < eps_pred.channels(); ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = c * plane + p;
      const double mf = m2_lat[p] * m2_lat[p];
      const double mb = m1bar_lat[p] * m1bar_lat[p];
      g[i] = scale * (w_fg * mf * (eps_pred[i] - eps2[i]) + w_bg * mb * (eps_pred[i] - eps1[i]));
    }
  }
  return g;
}

double clip_distance(const Image& image, const std::string& text, const ImageTextEmbedder& embedder) {
  return 1.0 - cosine(embedder.embed_image(image), embedder.embed_text(text));
}

Image clip_distance_grad(const Image& image, const std::string& text, const ImageTextEmbedder& embedder) {
  const Embedding u = embedder.embed_text(text);
  std::vector<double> g(u.values.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = -u.values[i];
  return embedder.embed_image_vjp(image, g);
}

double loss_global(const Image& x_hat, const std::string& edit_prompt, const ImageTextEmbedder& embedder) {
  return clip_distance(x_hat, edit_prompt, embedder);
}

Image loss_global_grad(const Image& x_hat, const std::string& edit_prompt, const ImageTextEmbedder& embedder) {
  return clip_distance_grad(x_hat, edit_prompt, embedder);
}

LocalisedLoss loss_localised(const Image& x_hat, const std::string& diff_prompt, const Mask& m1,
                             const ImageTextEmbedder& embedder) {
  if (m1.foreground_count() == 0) return LocalisedLoss{1.0, true};
  return LocalisedLoss{clip_distance(hadamard(x_hat, m1.data), diff_prompt, embedder), false};
}

Image loss_localised_grad(const Image& x_hat, const std::string& diff_prompt, const Mask& m1,
                          const ImageTextEmbedder& embedder) {
  if (m1.foreground_count() == 0) return Image(x_hat.shape());
  return hadamard(clip_distance_grad(hadamard(x_hat, m1.data), diff_prompt, embedder), m1.data);
}

namespace {

std::vector<double> feature_residual(const Image& x_hat, const Image& x2, const Mask& m1, const Mask& m2,
                                     const FeatureExtractor& features, Image* masked_hat) {
  Image a = hadamard(x_hat, m1.data);
  const std::vector<double> fa = features.extract(a);
  const std::vector<double> fb = features.extract(hadamard(x2, m2.data));
  if (fa.size() != fb.size() || fa.empty()) throw ShapeError("perceptual features differ in size");
  std::vector<double> r(fa.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = fa[i] - fb[i];
  if (masked_hat) *masked_hat = std::move(a);
  return r;
}

}  // namespace

double loss_perceptual(const Image& x_hat, const Image& x2, const Mask& m1, const Mask& m2,
                       const FeatureExtractor& features) {
  const std::vector<double> r = feature_residual(x_hat, x2, m1, m2, features, nullptr);
  double acc = 0.0;
  for (double v : r) acc += v * v;
  return acc / static_cast<double>(r.size());
}

Image loss_perceptual_grad(const Image& x_hat, const Image& x2, const Mask& m1, const Mask& m2,
                           const FeatureExtractor& features) {
  Image masked;
  std::vector<double> r = feature_residual(x_hat, x2, m1, m2, features, &masked);
  const double scale = 2.0 / static_cast<double>(r.size());
  for (double& v : r) v *= scale;
  return hadamard(features.extract_vjp(masked, r), m1.data);
}

}  // namespace locedit
