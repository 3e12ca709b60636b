#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "locedit/lexicon.hpp"
#include "locedit/providers.hpp"

// A synthetic world of single coloured shapes on flat backgrounds. Every perception
// provider has an exact oracle here, so pipeline behaviour can be checked against
// ground truth.
namespace locedit::shapes {

inline constexpr std::array<std::string_view, 3> kShapeNames{"square", "circle", "triangle"};
inline constexpr std::array<std::string_view, 4> kColorNames{"red", "green", "blue", "yellow"};
inline constexpr std::array<std::string_view, 3> kBackgroundNames{"white", "gray", "black"};

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

Rgb color_rgb(int color);
Rgb background_rgb(int background);

std::optional<int> shape_index(std::string_view word);
std::optional<int> color_index(std::string_view word);
std::optional<int> background_index(std::string_view word);

struct Attributes {
  int shape = 0;
  int color = 0;
  int background = 0;
  int center_x = 0;
  int center_y = 0;
  int half_size = 0;

  std::string shape_name() const { return std::string(kShapeNames.at(shape)); }
  std::string color_name() const { return std::string(kColorNames.at(color)); }
  std::string background_name() const { return std::string(kBackgroundNames.at(background)); }
  // "a {color} {shape} on a {background} background"
  std::string caption() const;
};

struct Record {
  std::string id;
  Image image;
  Attributes attributes;
  Mask mask;
};

// Centred attributes for a resolution; used by tests that want a canonical render.
Attributes centered(int shape, int color, int background, int resolution);
Image render(const Attributes& attrs, int resolution);
Mask render_mask(const Attributes& attrs, int resolution);

std::vector<Record> make_shapes_world(std::uint64_t seed, int n_images, int resolution);

// Adjectives: colours (fg colours are co-hyponyms, white/black antonyms); nouns: shapes.
Lexicon shapes_lexicon();

// Bump-shaped membership of an RGB value in a foreground colour, 1 at the prototype,
// 0 beyond kColorRadius. The gradient is written to `grad` when non-null.
inline constexpr double kColorRadius = 0.5;
double color_membership(int color, double r, double g, double b, std::array<double, 3>* grad = nullptr);

struct Analysis {
  std::array<double, 4> color_mass{};  // summed membership per foreground colour
  std::optional<int> shape;            // classified from the largest foreground component
  std::optional<int> dominant_color;
  int background = 0;
  Tensor foreground;  // soft [1, H, W] membership in any foreground colour
};

Analysis analyze(const Image& image);

// Identity latent space (f = 1).
class IdentityAutoencoder final : public Autoencoder {
 public:
  std::string name() const override { return "identity"; }
  int downscale() const override { return 1; }
  int latent_channels() const override { return 3; }
  Latent encode(const Image& image) const override;
  Image decode(const Latent& latent) const override;
  Latent decode_vjp(const Latent& latent, const Image& grad_image) const override;
};

// Average-pool encoder with nearest-neighbour decoder.
class PoolingAutoencoder final : public Autoencoder {
 public:
  explicit PoolingAutoencoder(int factor);
  std::string name() const override { return "avgpool" + std::to_string(factor_); }
  int downscale() const override { return factor_; }
  int latent_channels() const override { return 3; }
  Latent encode(const Image& image) const override;
  Image decode(const Latent& latent) const override;
  Latent decode_vjp(const Latent& latent, const Image& grad_image) const override;
  // Exact only on images that are constant over each pooling block.
  double reconstruction_tolerance() const override { return 1.0; }

 private:
  int factor_;
};

// One row per known attribute word (shapes, colours, backgrounds); unknown words are skipped.
class BagOfWordsTextEncoder final : public TextEncoder {
 public:
  std::string name() const override { return "shapes_bow"; }
  int dim() const override { return 10; }
  Conditioning encode(const std::string& text) const override;
};

// Embedding axes: [square, circle, triangle, red, green, blue, yellow, none]. The shape
// block and colour block are each unit-normalised before the final normalisation, so a
// rendered "red square" and the text "a red square" map to the same 2-hot vector.
class OracleEmbedder final : public ImageTextEmbedder {
 public:
  static constexpr int kDim = 8;
  std::string name() const override { return "shapes_oracle"; }
  Embedding embed_image(const Image& image) const override;
  Embedding embed_text(const std::string& text) const override;
  // Colour masses are differentiable; the shape axis is piecewise constant.
  Image embed_image_vjp(const Image& image, std::span<const double> grad_embedding) const override;
};

// Per-channel means followed by per-channel (population) variances.
class MomentFeatures final : public FeatureExtractor {
 public:
  std::string name() const override { return "shapes_moments"; }
  std::vector<double> extract(const Image& image) const override;
  Image extract_vjp(const Image& image, std::span<const double> grad_features) const override;
};

class OracleCaptioner final : public Captioner {
 public:
  std::string name() const override { return "shapes_oracle"; }
  std::string caption(const Image& image) const override;
};

// Foreground support when the prompt names the image's shape or colour, else zeros.
class OracleSegmenter final : public Segmenter {
 public:
  std::string name() const override { return "shapes_oracle"; }
  Tensor segment(const Image& image, const std::string& prompt) const override;
};

}  // namespace locedit::shapes
