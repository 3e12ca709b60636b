#include "locedit/providers.hpp"

#include <algorithm>
#include <cmath>

namespace locedit {

double Embedding::dot(const Embedding& other) const {
  if (dim() != other.dim()) {
    throw ShapeError("embedding dims differ: " + std::to_string(dim()) + " vs " + std::to_string(other.dim()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) acc += values[i] * other.values[i];
  return acc;
}

Embedding normalized(std::vector<double> values) {
  double norm2 = 0.0;
  for (double v : values) norm2 += v * v;
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw NumericError("cannot normalize a zero or non-finite vector");
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : values) v *= inv;
  return Embedding{std::move(values)};
}

double cosine(const Embedding& a, const Embedding& b) { return a.dot(b); }

std::size_t Mask::foreground_count() const {
  return static_cast<std::size_t>(std::count_if(data.values().begin(), data.values().end(),
                                                [](double v) { return v != 0.0; }));
}

Mask make_mask(Tensor binary, std::string source_prompt) {
  if (binary.channels() != 1) throw ShapeError("mask must have one channel, got " + binary.shape().str());
  for (double v : binary.values()) {
    if (v != 0.0 && v != 1.0) throw ParameterError("mask entries must be exactly 0 or 1");
  }
  Mask m{std::move(binary), std::move(source_prompt), false};
  m.empty = m.foreground_count() == 0;
  return m;
}

Mask full_mask(int height, int width, double value) { return make_mask(Tensor(1, height, width, value)); }

Mask binarize_mask(const Tensor& soft, double threshold, std::string source_prompt) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("mask threshold must lie in (0, 1)");
  if (soft.channels() != 1) throw ShapeError("soft mask must have one channel, got " + soft.shape().str());
  Tensor binary(soft.shape());
  for (std::size_t i = 0; i < soft.size(); ++i) binary[i] = soft[i] >= threshold ? 1.0 : 0.0;
  return make_mask(std::move(binary), std::move(source_prompt));
}

Mask invert_mask(const Mask& m) {
  Tensor inv(m.data.shape());
  for (std::size_t i = 0; i < inv.size(); ++i) inv[i] = 1.0 - m.data[i];
  return make_mask(std::move(inv), m.source_prompt);
}

Tensor mask_to_latent(const Mask& m, int factor) {
  if (factor < 1) throw ParameterError("downscale factor must be >= 1");
  if (factor == 1) return m.data;
  if (m.height() % factor != 0 || m.width() % factor != 0) {
    throw ShapeError("mask " + m.data.shape().str() + " not divisible by factor " + std::to_string(factor));
  }
  const int h = m.height() / factor;
  const int w = m.width() / factor;
  const double area = static_cast<double>(factor) * factor;
  Tensor out(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy) {
        for (int dx = 0; dx < factor; ++dx) acc += m.data(0, y * factor + dy, x * factor + dx);
      }
      out(0, y, x) = acc / area >= 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

Shape Autoencoder::latent_shape(int image_height, int image_width) const {
  const int f = downscale();
  if (image_height % f != 0 || image_width % f != 0) {
    throw ShapeError("image size not divisible by autoencoder factor " + std::to_string(f));
  }
  return Shape{latent_channels(), image_height / f, image_width / f};
}

void ProviderSet::validate() const {
  if (!autoencoder) throw ParameterError("provider set is missing an autoencoder");
  if (!text_encoder) throw ParameterError("provider set is missing a text encoder");
  if (!embedder) throw ParameterError("provider set is missing an embedder");
  if (!features) throw ParameterError("provider set is missing a feature extractor");
  if (!captioner) throw ParameterError("provider set is missing a captioner");
  if (!segmenter) throw ParameterError("provider set is missing a segmenter");
}

void validate_image(const Image& image) {
  if (image.channels() != 3) throw ShapeError("image must have 3 channels, got " + image.shape().str());
  if (image.height() < 8 || image.width() < 8) throw ShapeError("image must be at least 8x8, got " + image.shape().str());
  if (!image.all_finite()) throw NumericError("image contains non-finite values");
}

Image clamp_unit(const Image& image) {
  Image out = image;
  for (double& v : out.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

}  // namespace locedit
