#include "locedit/shapes_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>

#include "locedit/rng.hpp"
#include "locedit/text.hpp"

namespace locedit::shapes {

namespace {

constexpr std::array<Rgb, 4> kColors{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 0.0}}};
constexpr std::array<Rgb, 3> kBackgrounds{{{1.0, 1.0, 1.0}, {0.5, 0.5, 0.5}, {0.0, 0.0, 0.0}}};

template <std::size_t N>
std::optional<int> find_name(const std::array<std::string_view, N>& names, std::string_view word) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == word) return static_cast<int>(i);
  }
  return std::nullopt;
}

bool inside(const Attributes& a, int x, int y) {
  const double px = x + 0.5 - a.center_x;
  const double py = y + 0.5 - a.center_y;
  const double s = a.half_size;
  switch (a.shape) {
    case 0:
      return std::abs(px) < s && std::abs(py) < s;
    case 1:
      return px * px + py * py < s * s;
    default: {
      const double from_apex = py + s;
      return from_apex > 0.0 && py < s && std::abs(px) < from_apex / 2.0;
    }
  }
}

// Largest 4-connected component of `binary`; returns its pixel count and bounding box.
struct Component {
  int area = 0;
  int min_x = 0, max_x = -1, min_y = 0, max_y = -1;
};

Component largest_component(const std::vector<char>& binary, int h, int w) {
  std::vector<char> seen(binary.size(), 0);
  Component best;
  std::queue<int> frontier;
  for (int start = 0; start < h * w; ++start) {
    if (!binary[start] || seen[start]) continue;
    Component comp{0, w, -1, h, -1};
    seen[start] = 1;
    frontier.push(start);
    while (!frontier.empty()) {
      const int p = frontier.front();
      frontier.pop();
      const int y = p / w;
      const int x = p % w;
      ++comp.area;
      comp.min_x = std::min(comp.min_x, x);
      comp.max_x = std::max(comp.max_x, x);
      comp.min_y = std::min(comp.min_y, y);
      comp.max_y = std::max(comp.max_y, y);
      const int nx[4] = {x - 1, x + 1, x, x};
      const int ny[4] = {y, y, y - 1, y + 1};
      for (int k = 0; k < 4; ++k) {
        if (nx[k] < 0 || nx[k] >= w || ny[k] < 0 || ny[k] >= h) continue;
        const int q = ny[k] * w + nx[k];
        if (binary[q] && !seen[q]) {
          seen[q] = 1;
          frontier.push(q);
        }
      }
    }
    if (comp.area > best.area) best = comp;
  }
  return best;
}

// Shapes are told apart by how much of their bounding box they fill:
// square ~1, circle ~pi/4, triangle ~1/2.
std::optional<int> classify_shape(const Component& c) {
  if (c.area < 4) return std::nullopt;
  const double box = static_cast<double>(c.max_x - c.min_x + 1) * (c.max_y - c.min_y + 1);
  const double fill = c.area / box;
  if (fill >= 0.88) return 0;
  if (fill >= 0.64) return 1;
  return 2;
}

struct ParsedText {
  std::array<double, 3> shapes{};
  std::array<double, 4> colors{};
};

ParsedText parse_attributes(const std::string& text) {
  ParsedText parsed;
  for (const auto& w : words(text)) {
    if (auto s = shape_index(w)) parsed.shapes[*s] = 1.0;
    if (auto c = color_index(w)) parsed.colors[*c] = 1.0;
  }
  return parsed;
}

template <std::size_t N>
double norm(const std::array<double, N>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

// Unnormalised embedding: unit shape block + unit colour block, or the "none" axis.
std::vector<double> compose(const std::array<double, 3>& shapes, const std::array<double, 4>& colors) {
  std::vector<double> v(OracleEmbedder::kDim, 0.0);
  const double ns = norm(shapes);
  const double nc = norm(colors);
  if (ns > 0.0) {
    for (int i = 0; i < 3; ++i) v[i] = shapes[i] / ns;
  }
  if (nc > 0.0) {
    for (int i = 0; i < 4; ++i) v[3 + i] = colors[i] / nc;
  }
  if (ns == 0.0 && nc == 0.0) v[7] = 1.0;
  return v;
}

}  // namespace

Rgb color_rgb(int color) { return kColors.at(color); }
Rgb background_rgb(int background) { return kBackgrounds.at(background); }

std::optional<int> shape_index(std::string_view word) { return find_name(kShapeNames, word); }
std::optional<int> color_index(std::string_view word) { return find_name(kColorNames, word); }
std::optional<int> background_index(std::string_view word) { return find_name(kBackgroundNames, word); }

std::string Attributes::caption() const {
  return "a " + color_name() + " " + shape_name() + " on a " + background_name() + " background";
}

Attributes centered(int shape, int color, int background, int resolution) {
  return Attributes{shape, color, background, resolution / 2, resolution / 2, static_cast<int>(resolution * 0.28)};
}

Image render(const Attributes& attrs, int resolution) {
  Image img(3, resolution, resolution);
  const Rgb fg = color_rgb(attrs.color);
  const Rgb bg = background_rgb(attrs.background);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) {
      const Rgb& c = inside(attrs, x, y) ? fg : bg;
      img(0, y, x) = c.r;
      img(1, y, x) = c.g;
      img(2, y, x) = c.b;
    }
  }
  return img;
}

Mask render_mask(const Attributes& attrs, int resolution) {
  Tensor m(1, resolution, resolution);
  for (int y = 0; y < resolution; ++y) {
    for (int x = 0; x < resolution; ++x) m(0, y, x) = inside(attrs, x, y) ? 1.0 : 0.0;
  }
  return make_mask(std::move(m), attrs.shape_name());
}

std::vector<Record> make_shapes_world(std::uint64_t seed, int n_images, int resolution) {
  if (n_images < 1) throw ParameterError("shapes world needs at least one image");
  if (resolution < 16) throw ParameterError("shapes world resolution must be >= 16");
  Rng rng(derive_seed(seed, "shapes-world"));
  const int jitter = std::max(1, resolution / 16);
  const int min_half = static_cast<int>(std::round(resolution * 0.22));
  const int max_half = static_cast<int>(std::round(resolution * 0.31));
  std::vector<Record> corpus;
  corpus.reserve(n_images);
  for (int i = 0; i < n_images; ++i) {
    Attributes a;
    a.shape = rng.uniform_int(0, 2);
    a.color = rng.uniform_int(0, 3);
    a.background = rng.uniform_int(0, 2);
    a.center_x = resolution / 2 + rng.uniform_int(-jitter, jitter);
    a.center_y = resolution / 2 + rng.uniform_int(-jitter, jitter);
    a.half_size = rng.uniform_int(min_half, max_half);
    char id[32];
    std::snprintf(id, sizeof(id), "img_%05d", i);
    corpus.push_back(Record{id, render(a, resolution), a, render_mask(a, resolution)});
  }
  return corpus;
}

Lexicon shapes_lexicon() {
  Lexicon lex;
  for (auto s : kShapeNames) {
    lex.pos[std::string(s)] = PartOfSpeech::kNoun;
    for (auto o : kShapeNames) {
      if (o != s) lex.cohyponyms[std::string(s)].insert(std::string(o));
    }
  }
  for (auto c : kColorNames) {
    lex.pos[std::string(c)] = PartOfSpeech::kAdjective;
    for (auto o : kColorNames) {
      if (o != c) lex.cohyponyms[std::string(c)].insert(std::string(o));
    }
  }
  for (auto b : kBackgroundNames) {
    lex.pos[std::string(b)] = PartOfSpeech::kAdjective;
    for (auto o : kBackgroundNames) {
      if (o != b) lex.cohyponyms[std::string(b)].insert(std::string(o));
    }
  }
  lex.pos["background"] = PartOfSpeech::kNoun;
  lex.antonyms["white"] = {"black"};
  lex.antonyms["black"] = {"white"};
  return lex;
}

double color_membership(int color, double r, double g, double b, std::array<double, 3>* grad) {
  const Rgb p = kColors.at(color);
  const double dr = r - p.r;
  const double dg = g - p.g;
  const double db = b - p.b;
  const double r2 = kColorRadius * kColorRadius;
  const double u = 1.0 - (dr * dr + dg * dg + db * db) / r2;
  if (u <= 0.0) {
    if (grad) *grad = {0.0, 0.0, 0.0};
    return 0.0;
  }
  if (grad) {
    const double k = -4.0 * u / r2;
    *grad = {k * dr, k * dg, k * db};
  }
  return u * u;
}

Analysis analyze(const Image& image) {
  validate_image(image);
  const int h = image.height();
  const int w = image.width();
  Analysis out;
  out.foreground = Tensor(1, h, w);
  std::vector<char> binary(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double fg = 0.0;
      for (int c = 0; c < 4; ++c) {
        const double m = color_membership(c, image(0, y, x), image(1, y, x), image(2, y, x));
        out.color_mass[c] += m;
        fg += m;
      }
      out.foreground(0, y, x) = fg;
      binary[static_cast<std::size_t>(y) * w + x] = fg >= 0.5 ? 1 : 0;
    }
  }
  out.shape = classify_shape(largest_component(binary, h, w));
  const auto best = std::max_element(out.color_mass.begin(), out.color_mass.end());
  if (*best > 0.0) out.dominant_color = static_cast<int>(best - out.color_mass.begin());

  // Background: palette entry nearest to the mean border colour.
  double sum[3] = {0.0, 0.0, 0.0};
  int count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (y != 0 && y != h - 1 && x != 0 && x != w - 1) continue;
      for (int c = 0; c < 3; ++c) sum[c] += image(c, y, x);
      ++count;
    }
  }
  double best_d = 1e300;
  for (int b = 0; b < 3; ++b) {
    const Rgb p = kBackgrounds[b];
    const double d = std::pow(sum[0] / count - p.r, 2) + std::pow(sum[1] / count - p.g, 2) +
                     std::pow(sum[2] / count - p.b, 2);
    if (d < best_d) {
      best_d = d;
      out.background = b;
    }
  }
  return out;
}

Latent IdentityAutoencoder::encode(const Image& image) const { return image; }
Image IdentityAutoencoder::decode(const Latent& latent) const { return latent; }
Latent IdentityAutoencoder::decode_vjp(const Latent& latent, const Image& grad_image) const {
  require_same_shape(latent, grad_image, "identity decode_vjp");
  return grad_image;
}

PoolingAutoencoder::PoolingAutoencoder(int factor) : factor_(factor) {
  if (factor != 2 && factor != 4 && factor != 8) throw ParameterError("pooling factor must be 2, 4 or 8");
}

Latent PoolingAutoencoder::encode(const Image& image) const {
  const Shape ls = latent_shape(image.height(), image.width());
  Latent z(Shape{image.channels(), ls.height, ls.width});
  const double area = static_cast<double>(factor_) * factor_;
  for (int c = 0; c < z.channels(); ++c) {
    for (int y = 0; y < z.height(); ++y) {
      for (int x = 0; x < z.width(); ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < factor_; ++dy) {
          for (int dx = 0; dx < factor_; ++dx) acc += image(c, y * factor_ + dy, x * factor_ + dx);
        }
        z(c, y, x) = acc / area;
      }
    }
  }
  return z;
}

Image PoolingAutoencoder::decode(const Latent& latent) const {
  Image img(latent.channels(), latent.height() * factor_, latent.width() * factor_);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) img(c, y, x) = latent(c, y / factor_, x / factor_);
    }
  }
  return img;
}

Latent PoolingAutoencoder::decode_vjp(const Latent& latent, const Image& grad_image) const {
  if (grad_image.height() != latent.height() * factor_ || grad_image.width() != latent.width() * factor_ ||
      grad_image.channels() != latent.channels()) {
    throw ShapeError("pooling decode_vjp: gradient " + grad_image.shape().str() + " vs latent " +
                     latent.shape().str());
  }
  Latent g(latent.shape());
  for (int c = 0; c < grad_image.channels(); ++c) {
    for (int y = 0; y < grad_image.height(); ++y) {
      for (int x = 0; x < grad_image.width(); ++x) g(c, y / factor_, x / factor_) += grad_image(c, y, x);
    }
  }
  return g;
}

Conditioning BagOfWordsTextEncoder::encode(const std::string& text) const {
  std::vector<int> rows;
  for (const auto& w : words(text)) {
    if (auto s = shape_index(w)) {
      rows.push_back(*s);
    } else if (auto c = color_index(w)) {
      rows.push_back(3 + *c);
    } else if (auto b = background_index(w)) {
      rows.push_back(7 + *b);
    }
  }
  Conditioning cond(std::max<int>(1, static_cast<int>(rows.size())), dim());
  for (std::size_t i = 0; i < rows.size(); ++i) cond.at(static_cast<int>(i), rows[i]) = 1.0;
  return cond;
}

Embedding OracleEmbedder::embed_image(const Image& image) const {
  const Analysis a = analyze(image);
  std::array<double, 3> shapes{};
  if (a.shape) shapes[*a.shape] = 1.0;
  return normalized(compose(shapes, a.color_mass));
}

Embedding OracleEmbedder::embed_text(const std::string& text) const {
  if (words(text).empty()) throw ParameterError("embed_text: empty text");
  const ParsedText p = parse_attributes(text);
  return normalized(compose(p.shapes, p.colors));
}

Image OracleEmbedder::embed_image_vjp(const Image& image, std::span<const double> grad_embedding) const {
  if (grad_embedding.size() != static_cast<std::size_t>(kDim)) throw ShapeError("embed_image_vjp: bad gradient size");
  const Analysis a = analyze(image);
  std::array<double, 3> shapes{};
  if (a.shape) shapes[*a.shape] = 1.0;
  const std::vector<double> v = compose(shapes, a.color_mass);
  Image grad(image.shape());
  const double nc = norm(a.color_mass);
  if (nc == 0.0) return grad;  // colour block absent: embedding is locally constant

  double nv2 = 0.0;
  for (double x : v) nv2 += x * x;
  const double nv = std::sqrt(nv2);
  // e = v / |v|: de = (g - (g.e) e) / |v|.
  double ge = 0.0;
  for (int i = 0; i < kDim; ++i) ge += grad_embedding[i] * v[i] / nv;
  std::array<double, kDim> gv{};
  for (int i = 0; i < kDim; ++i) gv[i] = (grad_embedding[i] - ge * v[i] / nv) / nv;
  // colour block v_c = m / |m|.
  double gm_dot = 0.0;
  for (int k = 0; k < 4; ++k) gm_dot += gv[3 + k] * a.color_mass[k] / nc;
  std::array<double, 4> gm{};
  for (int k = 0; k < 4; ++k) gm[k] = (gv[3 + k] - gm_dot * a.color_mass[k] / nc) / nc;

  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      std::array<double, 3> dw{};
      for (int k = 0; k < 4; ++k) {
        if (gm[k] == 0.0) continue;
        color_membership(k, image(0, y, x), image(1, y, x), image(2, y, x), &dw);
        for (int c = 0; c < 3; ++c) grad(c, y, x) += gm[k] * dw[c];
      }
    }
  }
  return grad;
}

std::vector<double> MomentFeatures::extract(const Image& image) const {
  if (image.channels() != 3) throw ShapeError("moment features need a 3-channel image");
  std::vector<double> f(6, 0.0);
  const double n = static_cast<double>(image.shape().plane());
  for (int c = 0; c < 3; ++c) {
    const auto ch = image.channel(c);
    double mean = 0.0;
    for (double v : ch) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : ch) var += (v - mean) * (v - mean);
    f[c] = mean;
    f[3 + c] = var / n;
  }
  return f;
}

Image MomentFeatures::extract_vjp(const Image& image, std::span<const double> grad_features) const {
  if (grad_features.size() != 6) throw ShapeError("moment features gradient must have 6 entries");
  const std::vector<double> f = extract(image);
  const double n = static_cast<double>(image.shape().plane());
  Image grad(image.shape());
  for (int c = 0; c < 3; ++c) {
    const auto ch = image.channel(c);
    auto g = grad.channel(c);
    for (std::size_t p = 0; p < ch.size(); ++p) {
      g[p] = grad_features[c] / n + grad_features[3 + c] * 2.0 * (ch[p] - f[c]) / n;
    }
  }
  return grad;
}

std::string OracleCaptioner::caption(const Image& image) const {
  const Analysis a = analyze(image);
  const std::string color = a.dominant_color ? std::string(kColorNames[*a.dominant_color]) : "plain";
  const std::string shape = a.shape ? std::string(kShapeNames[*a.shape]) : "shape";
  return "a " + color + " " + shape + " on a " + std::string(kBackgroundNames[a.background]) + " background";
}

Tensor OracleSegmenter::segment(const Image& image, const std::string& prompt) const {
  const Analysis a = analyze(image);
  bool named = false;
  for (const auto& w : words(prompt)) {
    if (a.shape && shape_index(w) == a.shape) named = true;
    if (a.dominant_color && color_index(w) == a.dominant_color) named = true;
  }
  if (!named) return Tensor(1, image.height(), image.width());
  Tensor soft = a.foreground;
  for (double& v : soft.values()) v = std::clamp(v, 0.0, 1.0);
  return soft;
}

}  // namespace locedit::shapes

namespace locedit {

ProviderSet make_providers(const ProviderNames& names) {
  ProviderSet set;
  if (names.autoencoder == "identity") {
    set.autoencoder = std::make_shared<shapes::IdentityAutoencoder>();
  } else if (names.autoencoder == "avgpool2") {
    set.autoencoder = std::make_shared<shapes::PoolingAutoencoder>(2);
  } else if (names.autoencoder == "avgpool4") {
    set.autoencoder = std::make_shared<shapes::PoolingAutoencoder>(4);
  } else if (names.autoencoder == "avgpool8") {
    set.autoencoder = std::make_shared<shapes::PoolingAutoencoder>(8);
  } else {
    throw ParameterError("unknown autoencoder provider '" + names.autoencoder + "'");
  }
  if (names.embedder != "shapes_oracle") throw ParameterError("unknown embedder provider '" + names.embedder + "'");
  if (names.segmenter != "shapes_oracle") throw ParameterError("unknown segmenter provider '" + names.segmenter + "'");
  if (names.captioner != "shapes_oracle") throw ParameterError("unknown captioner provider '" + names.captioner + "'");
  if (names.features != "shapes_moments") throw ParameterError("unknown features provider '" + names.features + "'");
  set.text_encoder = std::make_shared<shapes::BagOfWordsTextEncoder>();
  set.embedder = std::make_shared<shapes::OracleEmbedder>();
  set.segmenter = std::make_shared<shapes::OracleSegmenter>();
  set.captioner = std::make_shared<shapes::OracleCaptioner>();
  set.features = std::make_shared<shapes::MomentFeatures>();
  return set;
}

}  // namespace locedit
