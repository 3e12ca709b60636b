#include <gtest/gtest.h>

#include <cmath>

#include "locedit/denoiser.hpp"
#include "locedit/editor.hpp"
#include "locedit/shapes_world.hpp"
#include "support.hpp"

using namespace locedit;
namespace sw = locedit::shapes;

namespace {

constexpr int kRes = 16;

ProviderSet identity_providers() {
  ProviderNames n;
  n.autoencoder = "identity";
  return make_providers(n);
}

ToyDenoiser random_model(Shape latent, int max_step, std::uint64_t seed = 1) {
  ToyDenoiserConfig c;
  c.latent = latent;
  c.hidden = 6;
  c.mid_dilations = {1};
  c.max_step = max_step;
  return ToyDenoiser(c, seed);
}

EditRequest request(const Image& img, std::uint64_t seed, double strength) {
  EditRequest r;
  r.image = img;
  r.prompt = "a blue circle on a white background";
  r.strength = strength;
  r.seed = seed;
  r.n_variants = 2;
  r.ddim_steps = 10;
  return r;
}

Latent scalar(double v) { return Latent(Shape{1, 1, 1}, std::vector<double>{v}); }

// Returns a constant depending on whether the conditioning is empty.
class SplitDenoiser final : public Denoiser {
 public:
  Latent predict(const Latent& z, int, const Conditioning& c) const override {
    const auto pooled = c.pooled();
    double s = 0.0;
    for (double v : pooled) s += v;
    return Latent(z.shape(), s == 0.0 ? 0.0 : 1.0);
  }
  Shape latent_shape() const override { return {1, 1, 1}; }
};

double mean_abs_diff_outside(const Image& a, const Image& b, const Mask& m) {
  double s = 0.0;
  int n = 0;
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < a.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) {
        if (m.data(0, y, x) != 0.0) continue;
        s += std::abs(a(c, y, x) - b(c, y, x));
        ++n;
      }
    }
  }
  return n ? s / n : 0.0;
}

}  // namespace

TEST(Guidance, Examples) {
  SplitDenoiser d;
  sw::BagOfWordsTextEncoder enc;
  const Conditioning cond = enc.encode("red"), uncond = enc.encode("");
  EXPECT_EQ(guided_eps(d, scalar(0), 5, cond, uncond, 0.0)[0], 0.0);
  EXPECT_EQ(guided_eps(d, scalar(0), 5, cond, uncond, 1.0)[0], 1.0);
  EXPECT_EQ(guided_eps(d, scalar(0), 5, cond, uncond, 7.5)[0], 7.5);
}

TEST(Guidance, CollapsesForRealModel) {
  const ToyDenoiser m = random_model({3, 8, 8}, 100);
  sw::BagOfWordsTextEncoder enc;
  const Latent z = locedit::testing::random_tensor({3, 8, 8}, 3);
  const auto c = enc.encode("a red square"), u = enc.encode("");
  EXPECT_EQ(guided_eps(m, z, 30, c, u, 0.0), m.predict(z, 30, u));
  EXPECT_LT(locedit::testing::max_rel_error(guided_eps(m, z, 30, c, u, 1.0), m.predict(z, 30, c)), 1e-12);
}

TEST(Blend, Examples) {
  const Latent zt(Shape{1, 1, 2}, {5, 5}), zs(Shape{1, 1, 2}, {9, 9});
  EXPECT_EQ(blend(zt, zs, Tensor(Shape{1, 1, 2}, {1, 0})), Latent(Shape{1, 1, 2}, {5, 9}));
  const Latent a = locedit::testing::random_tensor({3, 4, 4}, 1), b = locedit::testing::random_tensor({3, 4, 4}, 2);
  EXPECT_EQ(blend(a, b, Tensor(Shape{1, 4, 4}, 1.0)), a);
  EXPECT_EQ(blend(a, b, Tensor(Shape{1, 4, 4}, 0.0)), b);
  EXPECT_THROW(blend(a, b, Tensor(Shape{1, 4, 3}, 1.0)), ShapeError);
}

TEST(Edit, ZeroMaskReproducesInput) {
  const auto sched = default_toy_schedule();
  const ToyDenoiser m = random_model({3, kRes, kRes}, 100);
  const auto ps = identity_providers();
  const auto world = sw::make_shapes_world(1, 4, kRes);
  for (int k = 0; k < 4; ++k) {
    for (double s : {0.3, 0.7, 1.0}) {
      EditRequest r = request(world[k].image, k, s);
      r.use_mask = true;
      r.mask = full_mask(kRes, kRes, 0.0);
      const auto res = edit(r, m, sched, ps);
      ASSERT_EQ(res.warnings.size(), 1u);
      for (const auto& out : res.images) {
        for (std::size_t i = 0; i < out.size(); ++i) ASSERT_NEAR(out[i], world[k].image[i], 1e-6);
      }
    }
  }
}

TEST(Edit, OnesMaskMatchesUnmasked) {
  const auto sched = default_ldm_schedule();
  const ToyDenoiser m = random_model({3, kRes, kRes}, 1000);
  const auto ps = identity_providers();
  const auto world = sw::make_shapes_world(2, 3, kRes);
  for (int k = 0; k < 3; ++k) {
    EditRequest plain = request(world[k].image, 10 + k, 0.6);
    EditRequest masked = plain;
    masked.use_mask = true;
    masked.mask = full_mask(kRes, kRes, 1.0);
    const auto a = edit(plain, m, sched, ps), b = edit(masked, m, sched, ps);
    for (std::size_t v = 0; v < a.images.size(); ++v) EXPECT_EQ(a.images[v], b.images[v]);
  }
}

TEST(Edit, ZeroStrengthReturnsReconstruction) {
  const auto sched = default_toy_schedule();
  const auto world = sw::make_shapes_world(3, 1, kRes);
  const auto id = edit(request(world[0].image, 1, 0.0), random_model({3, kRes, kRes}, 100), sched, identity_providers());
  EXPECT_EQ(id.denoiser_calls, 0);
  for (const auto& out : id.images) EXPECT_EQ(out, world[0].image);
  const auto ps = make_providers({});
  const auto pooled = edit(request(world[0].image, 1, 0.0), random_model({3, kRes / 2, kRes / 2}, 100), sched, ps);
  for (const auto& out : pooled.images) {
    EXPECT_EQ(out, clamp_unit(ps.autoencoder->decode(ps.autoencoder->encode(world[0].image))));
  }
}

TEST(Edit, DenoiserCallsFollowStrength) {
  const auto sched = default_toy_schedule();
  const ToyDenoiser m = random_model({3, kRes, kRes}, 100);
  const Image img = sw::make_shapes_world(4, 1, kRes)[0].image;
  for (double s : {0.1, 0.25, 0.7, 1.0}) {
    EditRequest r = request(img, 0, s);
    r.n_variants = 3;
    const auto res = edit(r, m, sched, identity_providers());
    EXPECT_EQ(res.denoiser_calls, static_cast<long>(std::ceil(s * 10 - 1e-9)) * 2 * 3) << s;
    EXPECT_EQ(res.images.size(), 3u);
    EXPECT_EQ(res.variant_seeds.size(), 3u);
  }
}

TEST(Edit, DeterministicAndVariantsDiffer) {
  const auto sched = default_ldm_schedule();
  const ToyDenoiser m = random_model({3, kRes / 2, kRes / 2}, 1000);
  const auto ps = make_providers({});
  const auto rec = sw::make_shapes_world(5, 1, kRes)[0];
  EditRequest r = request(rec.image, 9, 0.8);
  r.diff_prompt = rec.attributes.shape_name();
  r.use_mask = true;
  const auto a = edit(r, m, sched, ps), b = edit(r, m, sched, ps);
  ASSERT_EQ(a.images.size(), 2u);
  for (std::size_t v = 0; v < 2; ++v) EXPECT_EQ(a.images[v], b.images[v]);
  EXPECT_NE(a.images[0], a.images[1]);
  EXPECT_EQ(a.variant_seeds[1], derive_seed(9, 1));
}

TEST(Edit, PredictedMaskComesFromSegmenter) {
  const auto sched = default_toy_schedule();
  const ToyDenoiser m = random_model({3, kRes, kRes}, 100);
  const auto rec = sw::make_shapes_world(6, 1, kRes)[0];
  EditRequest r = request(rec.image, 0, 0.5);
  r.use_mask = true;
  r.diff_prompt = rec.attributes.shape_name();
  const auto res = edit(r, m, sched, identity_providers());
  ASSERT_TRUE(res.mask_used.has_value());
  EXPECT_EQ(res.mask_used->data, rec.mask.data);
  EXPECT_TRUE(res.warnings.empty());
  // Explicit masks override the segmenter.
  r.mask = full_mask(kRes, kRes, 1.0);
  EXPECT_EQ(edit(r, m, sched, identity_providers()).mask_used->foreground_count(), static_cast<std::size_t>(kRes * kRes));
}

// Outside the mask the masked pipeline never does worse than the unmasked one.
TEST(EditProperty, MaskingPreservesBackground) {
  const auto sched = default_toy_schedule();
  const ToyDenoiser m = random_model({3, kRes, kRes}, 100, 4);
  const auto ps = identity_providers();
  for (const auto& rec : sw::make_shapes_world(7, 8, kRes)) {
    EditRequest plain = request(rec.image, 3, 0.7);
    EditRequest masked = plain;
    masked.use_mask = true;
    masked.diff_prompt = rec.attributes.shape_name();
    const auto a = edit(plain, m, sched, ps), b = edit(masked, m, sched, ps);
    for (std::size_t v = 0; v < a.images.size(); ++v) {
      EXPECT_LE(mean_abs_diff_outside(b.images[v], rec.image, rec.mask),
                mean_abs_diff_outside(a.images[v], rec.image, rec.mask));
    }
  }
}

TEST(Edit, ValidationErrors) {
  const auto sched = default_toy_schedule();
  const ToyDenoiser m = random_model({3, kRes, kRes}, 100);
  const Image img = sw::make_shapes_world(8, 1, kRes)[0].image;
  EditRequest r = request(img, 0, 1.2);
  EXPECT_THROW(edit(r, m, sched, identity_providers()), ParameterError);
  r = request(img, 0, 0.5);
  r.use_mask = true;
  EXPECT_THROW(edit(r, m, sched, identity_providers()), ParameterError);
  r = request(img, 0, 0.5);
  r.n_variants = 0;
  EXPECT_THROW(edit(r, m, sched, identity_providers()), ParameterError);
  r = request(img, 0, 0.5);
  r.guidance = -1;
  EXPECT_THROW(edit(r, m, sched, identity_providers()), ParameterError);
  r = request(img, 0, 0.5);
  r.use_mask = true;
  r.mask = full_mask(8, 8, 1.0);
  EXPECT_THROW(edit(r, m, sched, identity_providers()), ShapeError);
  // Latent shape mismatch between autoencoder and model.
  EXPECT_THROW(edit(request(img, 0, 0.5), m, sched, make_providers({})), ShapeError);
}

TEST(Edit, ResultManifestLayout) {
  EditResult r;
  r.plan = make_plan(100, 10, 0.5);
  r.variant_seeds = {1, 2};
  const auto j = result_manifest({{"prompt", "x"}}, r, {"variant_0.png", "variant_1.png"}, std::nullopt);
  std::vector<std::string> keys;
  for (const auto& [k, _] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"inputs", "plan", "outputs", "mask", "variant_seeds"}));
  EXPECT_TRUE(j["mask"].is_null());
  EXPECT_EQ(j["plan"].size(), 6u);
  EXPECT_EQ(result_manifest({}, r, {}, std::string("mask.png"))["mask"], "mask.png");
}
