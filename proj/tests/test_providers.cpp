#include <gtest/gtest.h>

#include <cmath>

#include "locedit/image_io.hpp"
#include "locedit/providers.hpp"
#include "locedit/shapes_world.hpp"
#include "support.hpp"

using namespace locedit;
namespace sw = locedit::shapes;
using locedit::testing::uniform_tensor;

namespace {

constexpr int kRes = 32;

Image canonical(const std::string& shape, const std::string& color, const std::string& bg = "white") {
  return sw::render(sw::centered(*sw::shape_index(shape), *sw::color_index(color), *sw::background_index(bg), kRes),
                    kRes);
}

double cos_of(const Image& img, const std::string& text) {
  sw::OracleEmbedder e;
  return cosine(e.embed_image(img), e.embed_text(text));
}

Mask mask_of(std::vector<double> v, int h, int w) { return make_mask(Tensor(Shape{1, h, w}, std::move(v))); }

}  // namespace

TEST(Autoencoder, IdentityIsExact) {
  sw::IdentityAutoencoder ae;
  const Image x = uniform_tensor({3, 16, 16}, 1);
  EXPECT_EQ(ae.encode(x), x);
  EXPECT_EQ(ae.decode(x), x);
  EXPECT_EQ(ae.decode(ae.encode(x)), x);
  EXPECT_EQ(ae.latent_shape(16, 16), (Shape{3, 16, 16}));
}

TEST(Autoencoder, PoolingFixesConstantsAndAveragesBlocks) {
  sw::PoolingAutoencoder ae(2);
  const Image c(Shape{3, 16, 16}, 0.3);
  EXPECT_EQ(ae.decode(ae.encode(c)), c);
  Image x(Shape{3, 8, 8});
  x(0, 0, 0) = 1.0;
  x(0, 1, 1) = 1.0;
  const Latent z = ae.encode(x);
  EXPECT_EQ(z.shape(), (Shape{3, 4, 4}));
  EXPECT_DOUBLE_EQ(z(0, 0, 0), 0.5);
  EXPECT_DOUBLE_EQ(ae.decode(z)(0, 1, 0), 0.5);
  EXPECT_THROW(ae.encode(Image(Shape{3, 9, 8})), ShapeError);
  EXPECT_THROW(sw::PoolingAutoencoder(3), ParameterError);
}

TEST(Autoencoder, PoolingDecodeVjpIsTheAdjoint) {
  sw::PoolingAutoencoder ae(4);
  const Latent z = locedit::testing::random_tensor({3, 4, 4}, 2);
  const Image g = locedit::testing::random_tensor({3, 16, 16}, 3);
  // <decode(z), g> == <z, decode_vjp(z, g)>
  double lhs = 0.0, rhs = 0.0;
  const Image d = ae.decode(z);
  const Latent v = ae.decode_vjp(z, g);
  for (std::size_t i = 0; i < d.size(); ++i) lhs += d[i] * g[i];
  for (std::size_t i = 0; i < z.size(); ++i) rhs += z[i] * v[i];
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Embedder, OracleAlignmentExamples) {
  EXPECT_NEAR(cos_of(canonical("square", "red"), "a red square"), 1.0, 1e-12);
  EXPECT_NEAR(cos_of(canonical("circle", "blue"), "a red square"), 0.0, 1e-12);
  EXPECT_NEAR(cos_of(canonical("square", "red"), "a red circle"), 0.5, 1e-12);
}

TEST(Embedder, TextIsUnitNormAndRejectsEmpty) {
  sw::OracleEmbedder e;
  for (const char* t : {"a red square", "blue", "triangle on gray", "nothing known here"}) {
    double n = 0.0;
    for (double v : e.embed_text(t).values) n += v * v;
    EXPECT_NEAR(n, 1.0, 1e-12) << t;
  }
  EXPECT_THROW(e.embed_text(""), ParameterError);
  EXPECT_THROW(e.embed_text("  ... "), ParameterError);
}

// Oracle consistency swept over the whole vocabulary.
TEST(ShapesWorld, OracleConsistencyOverVocabulary) {
  sw::OracleEmbedder emb;
  sw::OracleCaptioner cap;
  sw::OracleSegmenter seg;
  for (int s = 0; s < 3; ++s) {
    for (int c = 0; c < 4; ++c) {
      for (int b = 0; b < 3; ++b) {
        const auto attrs = sw::centered(s, c, b, kRes);
        const Image img = sw::render(attrs, kRes);
        EXPECT_EQ(cap.caption(img), attrs.caption());
        const Embedding ie = emb.embed_image(img);
        double n = 0.0;
        for (double v : ie.values) n += v * v;
        EXPECT_NEAR(n, 1.0, 1e-9);
        EXPECT_NEAR(cosine(ie, ie), 1.0, 1e-9);
        EXPECT_NEAR(cosine(ie, emb.embed_text(attrs.caption())), 1.0, 1e-9) << attrs.caption();
        const Mask truth = sw::render_mask(attrs, kRes);
        EXPECT_EQ(binarize_mask(seg.segment(img, attrs.shape_name()), 0.5).data, truth.data);
        EXPECT_EQ(binarize_mask(seg.segment(img, attrs.color_name()), 0.5).data, truth.data);
        const Tensor miss = seg.segment(img, std::string(sw::kShapeNames[(s + 1) % 3]));
        EXPECT_EQ(miss.max_abs(), 0.0);
      }
    }
  }
}

TEST(Captioner, TemplateExamplesAndDeterminism) {
  sw::OracleCaptioner cap;
  EXPECT_EQ(cap.caption(canonical("square", "red")), "a red square on a white background");
  EXPECT_EQ(cap.caption(canonical("circle", "blue", "gray")), "a blue circle on a gray background");
  const Image img = canonical("triangle", "yellow", "black");
  EXPECT_EQ(cap.caption(img), cap.caption(img));
}

TEST(Segmenter, ValuesStayInUnitRange) {
  sw::OracleSegmenter seg;
  for (std::uint64_t k = 0; k < 5; ++k) {
    const Image noise = uniform_tensor({3, 16, 16}, k);
    for (const char* p : {"square", "red", "circle", "sky"}) {
      const Tensor m = seg.segment(noise, p);
      for (double v : m.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Masks, BinarizeExamples) {
  const Mask m = binarize_mask(Tensor(Shape{1, 1, 2}, {0.2, 0.7}), 0.5);
  EXPECT_EQ(m.data.values()[0], 0.0);
  EXPECT_EQ(m.data.values()[1], 1.0);
  EXPECT_FALSE(m.empty);
  const Mask all = binarize_mask(Tensor(Shape{1, 3, 3}, 0.5), 0.5);
  EXPECT_EQ(all.foreground_count(), 9u);
  const Mask none = binarize_mask(Tensor(Shape{1, 3, 3}, 0.1), 0.5);
  EXPECT_TRUE(none.empty);
  EXPECT_EQ(none.foreground_count(), 0u);
  EXPECT_THROW(binarize_mask(Tensor(Shape{1, 3, 3}), 0.0), ParameterError);
  EXPECT_THROW(binarize_mask(Tensor(Shape{1, 3, 3}), 1.0), ParameterError);
}

TEST(MasksProperty, BinarizeIsMonotoneInThreshold) {
  const Tensor soft = uniform_tensor({1, 16, 16}, 7);
  std::size_t prev = soft.size() + 1;
  for (double th = 0.05; th < 1.0; th += 0.05) {
    const Mask m = binarize_mask(soft, th);
    EXPECT_LE(m.foreground_count(), prev);
    prev = m.foreground_count();
  }
}

TEST(Masks, InvertExamplesAndInvolution) {
  const Mask m = mask_of({1, 0, 1}, 1, 3);
  EXPECT_EQ(invert_mask(m).data, Tensor(Shape{1, 1, 3}, {0, 1, 0}));
  EXPECT_TRUE(invert_mask(full_mask(4, 4, 1.0)).empty);
  for (std::uint64_t k = 0; k < 20; ++k) {
    const Mask r = binarize_mask(uniform_tensor({1, 8, 8}, k), 0.5);
    EXPECT_EQ(invert_mask(invert_mask(r)).data, r.data);
  }
}

TEST(Masks, MakeMaskRejectsNonBinary) {
  EXPECT_THROW(make_mask(Tensor(Shape{1, 2, 2}, 0.5)), ParameterError);
  EXPECT_THROW(make_mask(Tensor(Shape{2, 2, 2}, 1.0)), ShapeError);
}

TEST(Masks, ToLatentExamples) {
  const Mask r = binarize_mask(uniform_tensor({1, 8, 8}, 3), 0.5);
  EXPECT_EQ(mask_to_latent(r, 1), r.data);
  // [[1,1],[0,0]] averages to 0.5, which is foreground.
  EXPECT_EQ(mask_to_latent(mask_of({1, 1, 0, 0}, 2, 2), 2), Tensor(Shape{1, 1, 1}, 1.0));
  EXPECT_EQ(mask_to_latent(mask_of({1, 0, 0, 0}, 2, 2), 2), Tensor(Shape{1, 1, 1}, 0.0));
  for (int f : {1, 2, 4, 8}) {
    EXPECT_EQ(mask_to_latent(full_mask(16, 16, 1.0), f), Tensor(Shape{1, 16 / f, 16 / f}, 1.0));
    EXPECT_EQ(mask_to_latent(full_mask(16, 16, 0.0), f), Tensor(Shape{1, 16 / f, 16 / f}, 0.0));
  }
  EXPECT_THROW(mask_to_latent(full_mask(6, 6, 1.0), 4), ShapeError);
}

TEST(Features, MomentExamples) {
  sw::MomentFeatures f;
  EXPECT_EQ(f.extract(Image(Shape{3, 8, 8}, 0.0)), std::vector<double>(6, 0.0));
  const auto gray = f.extract(Image(Shape{3, 8, 8}, 0.5));
  const std::vector<double> want{0.5, 0.5, 0.5, 0, 0, 0};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(gray[i], want[i], 1e-15);
  const Image x = uniform_tensor({3, 8, 8}, 4);
  EXPECT_EQ(f.extract(x), f.extract(x));
}

TEST(Features, VjpMatchesFiniteDifferences) {
  sw::MomentFeatures f;
  const Image x = uniform_tensor({3, 8, 8}, 5);
  const std::vector<double> g{0.3, -0.2, 0.7, 1.1, -0.4, 0.25};
  const Image analytic = f.extract_vjp(x, g);
  auto objective = [&](const Image& im) {
    const auto v = f.extract(im);
    double s = 0.0;
    for (int i = 0; i < 6; ++i) s += v[i] * g[i];
    return s;
  };
  for (std::size_t i = 0; i < x.size(); i += 7) {
    Image p = x, m = x;
    p[i] += 1e-6;
    m[i] -= 1e-6;
    EXPECT_NEAR(analytic[i], (objective(p) - objective(m)) / 2e-6, 1e-7);
  }
}

TEST(Features, EmbedderVjpMatchesFiniteDifferencesOnColourAxis) {
  sw::OracleEmbedder e;
  // A square whose colour sits between red and its neighbours so memberships are fractional.
  Image img = canonical("square", "red");
  const Mask m = sw::render_mask(sw::centered(0, 0, 0, kRes), kRes);
  for (int y = 0; y < kRes; ++y) {
    for (int x = 0; x < kRes; ++x) {
      if (m.data(0, y, x) == 1.0) {
        img(0, y, x) = 0.85;
        img(1, y, x) = 0.2;
        img(2, y, x) = 0.15;
      }
    }
  }
  const std::vector<double> g{0, 0, 0, 0.5, -0.3, 0.2, 0.1, 0};
  const Image analytic = e.embed_image_vjp(img, g);
  auto objective = [&](const Image& im) {
    const auto v = e.embed_image(im).values;
    double s = 0.0;
    for (int i = 0; i < 8; ++i) s += v[i] * g[i];
    return s;
  };
  int checked = 0;
  for (int y = 10; y < 22; y += 3) {
    for (int c = 0; c < 3; ++c) {
      Image p = img, q = img;
      p(c, y, 16) += 1e-6;
      q(c, y, 16) -= 1e-6;
      const double fd = (objective(p) - objective(q)) / 2e-6;
      EXPECT_NEAR(analytic(c, y, 16), fd, 1e-6 + 1e-4 * std::abs(fd));
      ++checked;
    }
  }
  EXPECT_GT(checked, 0);
}

TEST(ShapesWorld, DeterministicAndInVocabulary) {
  const auto a = sw::make_shapes_world(7, 100, kRes);
  const auto b = sw::make_shapes_world(7, 100, kRes);
  ASSERT_EQ(a.size(), 100u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].image, b[i].image);
    EXPECT_EQ(a[i].mask.data, b[i].mask.data);
    EXPECT_LT(a[i].attributes.shape, 3);
    EXPECT_LT(a[i].attributes.color, 4);
    EXPECT_LT(a[i].attributes.background, 3);
  }
  EXPECT_NE(sw::make_shapes_world(8, 5, kRes)[0].image, a[0].image);
}

TEST(ShapesWorld, MaskEqualsBinarizedSegmentation) {
  sw::OracleSegmenter seg;
  for (const auto& r : sw::make_shapes_world(3, 40, kRes)) {
    EXPECT_EQ(binarize_mask(seg.segment(r.image, r.attributes.shape_name()), 0.5).data, r.mask.data) << r.id;
    EXPECT_FALSE(r.mask.empty);
  }
}

TEST(ProviderSet, RegistryAndValidation) {
  const ProviderSet p = make_providers(ProviderNames{});
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.autoencoder->downscale(), 2);
  ProviderNames bad;
  bad.embedder = "clip-vit";
  EXPECT_THROW(make_providers(bad), ParameterError);
  ProviderNames id;
  id.autoencoder = "identity";
  EXPECT_EQ(make_providers(id).autoencoder->downscale(), 1);
  ProviderSet missing = p;
  missing.segmenter.reset();
  EXPECT_THROW(missing.validate(), ParameterError);
}

TEST(ImageIo, PngRoundTrip) {
  locedit::testing::TempDir dir("png");
  Image img(Shape{3, 9, 11});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i % 256) / 255.0;
  write_png_image(dir / "a.png", img);
  EXPECT_EQ(read_png_image(dir / "a.png"), img);
  const Mask m = binarize_mask(uniform_tensor({1, 9, 11}, 1), 0.5);
  write_png_mask(dir / "m.png", m);
  EXPECT_EQ(read_png_mask(dir / "m.png").data, m.data);
  EXPECT_THROW(read_png_image(dir / "missing.png"), IoError);
}
