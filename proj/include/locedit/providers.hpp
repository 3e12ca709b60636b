#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "locedit/conditioning.hpp"
#include "locedit/tensor.hpp"

namespace locedit {

// Unit-norm vector from an image-text embedder.
struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double dot(const Embedding& other) const;
};

// Scales to unit L2 norm; throws NumericError for the zero vector.
Embedding normalized(std::vector<double> values);
double cosine(const Embedding& a, const Embedding& b);

// Binary foreground map [1, H, W] with entries in {0, 1}.
struct Mask {
  Tensor data;
  std::string source_prompt;
  bool empty = false;

  int height() const { return data.height(); }
  int width() const { return data.width(); }
  std::size_t foreground_count() const;
};

Mask make_mask(Tensor binary, std::string source_prompt = {});
Mask full_mask(int height, int width, double value);

// entry = 1 iff soft >= threshold; an all-zero result carries the empty flag.
Mask binarize_mask(const Tensor& soft, double threshold, std::string source_prompt = {});
Mask invert_mask(const Mask& m);
// Area-average pool by `factor`, then binarize at 0.5 inclusive. Returns a [1, H/f, W/f] tensor.
Tensor mask_to_latent(const Mask& m, int factor);

// Encoder/decoder pair between image and latent space.
class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual std::string name() const = 0;
  virtual int downscale() const = 0;
  virtual int latent_channels() const = 0;
  virtual Latent encode(const Image& image) const = 0;
  virtual Image decode(const Latent& latent) const = 0;
  // Gradient w.r.t. the latent given the gradient w.r.t. decode(latent).
  virtual Latent decode_vjp(const Latent& latent, const Image& grad_image) const = 0;
  // Bound on |decode(encode(x)) - x| the provider promises for its own domain.
  virtual double reconstruction_tolerance() const { return 0.0; }

  Shape latent_shape(int image_height, int image_width) const;
};

// Conditioning encoder for the denoiser.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual Conditioning encode(const std::string& text) const = 0;
};

// Joint image/text embedding space used for retrieval and CLIP-style scores.
class ImageTextEmbedder {
 public:
  virtual ~ImageTextEmbedder() = default;
  virtual std::string name() const = 0;
  virtual Embedding embed_image(const Image& image) const = 0;
  virtual Embedding embed_text(const std::string& text) const = 0;
  // Gradient w.r.t. the image of <embed_image(image), grad_embedding>.
  virtual Image embed_image_vjp(const Image& image, std::span<const double> grad_embedding) const = 0;
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<double> extract(const Image& image) const = 0;
  virtual Image extract_vjp(const Image& image, std::span<const double> grad_features) const = 0;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string name() const = 0;
  virtual std::string caption(const Image& image) const = 0;
};

// Text-conditioned soft segmentation; output is [1, H, W] with values in [0, 1].
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string name() const = 0;
  virtual Tensor segment(const Image& image, const std::string& prompt) const = 0;
};

struct ProviderSet {
  std::shared_ptr<const Autoencoder> autoencoder;
  std::shared_ptr<const TextEncoder> text_encoder;
  std::shared_ptr<const ImageTextEmbedder> embedder;
  std::shared_ptr<const FeatureExtractor> features;
  std::shared_ptr<const Captioner> captioner;
  std::shared_ptr<const Segmenter> segmenter;

  // Throws ParameterError when a provider is missing.
  void validate() const;
};

// Registered provider names, as selected by the providers.* config keys.
struct ProviderNames {
  std::string autoencoder = "avgpool2";
  std::string embedder = "shapes_oracle";
  std::string segmenter = "shapes_oracle";
  std::string captioner = "shapes_oracle";
  std::string features = "shapes_moments";
};

ProviderSet make_providers(const ProviderNames& names);

// Image helpers shared by providers and the editor.
void validate_image(const Image& image);
Image clamp_unit(const Image& image);

}  // namespace locedit
