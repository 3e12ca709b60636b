#include "locedit/editor.hpp"

#include <cmath>

#include "locedit/rng.hpp"

namespace locedit {

void EditRequest::validate() const {
  validate_image(image);
  if (!(strength >= 0.0 && strength <= 1.0)) throw ParameterError("strength must lie in [0, 1]");
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) throw ParameterError("guidance must be >= 0");
  if (n_variants < 1) throw ParameterError("n_variants must be >= 1");
  if (ddim_steps < 1) throw ParameterError("ddim_steps must be >= 1");
  if (use_mask && !mask && !diff_prompt) throw ParameterError("masked editing needs a diff prompt or a mask");
  if (mask && (mask->height() != image.height() || mask->width() != image.width())) {
    throw ShapeError("mask " + mask->data.shape().str() + " does not match image " + image.shape().str());
  }
}

Latent guided_eps(const Denoiser& model, const Latent& noisy, int t, const Conditioning& cond,
                  const Conditioning& uncond, double guidance) {
  const Latent eps_c = model.predict(noisy, t, cond);
  Latent eps_u = model.predict(noisy, t, uncond);
  require_same_shape(eps_c, eps_u, "guided_eps");
  for (std::size_t i = 0; i < eps_u.size(); ++i) eps_u[i] += guidance * (eps_c[i] - eps_u[i]);
  return eps_u;
}

Latent blend(const Latent& z_tilde, const Latent& z_src_t, const Tensor& m_lat) {
  require_same_shape(z_tilde, z_src_t, "blend");
  if (m_lat.channels() != 1 || m_lat.height() != z_tilde.height() || m_lat.width() != z_tilde.width()) {
    throw ShapeError("blend: mask " + m_lat.shape().str() + " does not match latent " + z_tilde.shape().str());
  }
  const std::size_t plane = z_tilde.shape().plane();
  Latent out(z_tilde.shape());
  for (int c = 0; c < z_tilde.channels(); ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t i = c * plane + p;
      out[i] = (1.0 - m_lat[p]) * z_src_t[i] + m_lat[p] * z_tilde[i];
    }
  }
  return out;
}

EditResult edit(const EditRequest& req, const Denoiser& model, const NoiseSchedule& sched,
                const ProviderSet& providers) {
  req.validate();
  providers.validate();
  const Autoencoder& ae = *providers.autoencoder;
  EditResult result;
  result.plan = make_plan(sched.max_step(), req.ddim_steps, req.strength);

  const Latent z1 = ae.encode(req.image);
  if (z1.shape() != model.latent_shape()) {
    throw ShapeError("image latent " + z1.shape().str() + " does not match denoiser " + model.latent_shape().str());
  }

  Tensor m_lat;
  if (req.use_mask) {
    if (req.mask) {
      result.mask_used = *req.mask;
    } else {
      const Tensor soft = providers.segmenter->segment(req.image, *req.diff_prompt);
      result.mask_used = binarize_mask(soft, req.mask_threshold, *req.diff_prompt);
    }
    m_lat = mask_to_latent(*result.mask_used, ae.downscale());
    if (m_lat.sum() == 0.0) {
      result.warnings.push_back("edit mask is empty; the output reproduces the source reconstruction");
    }
  }

  const Conditioning cond = providers.text_encoder->encode(req.prompt);
  const Conditioning uncond = providers.text_encoder->encode("");
  const int t_start = result.plan.steps.front();

  for (int v = 0; v < req.n_variants; ++v) {
    const std::uint64_t vseed = derive_seed(req.seed, static_cast<std::uint64_t>(v));
    result.variant_seeds.push_back(vseed);
    Rng rng(vseed);
    const Latent eps = rng.normal_tensor(z1.shape());

    Latent z_init;
    if (result.plan.transitions() == 0) {
      z_init = z1;
    } else if (result.plan.start_index == 0 && req.strength >= 1.0) {
      z_init = eps;
    } else {
      z_init = add_noise(z1, eps, t_start, sched);
    }

    EpsFn eps_fn = [&](const Latent& z, int t) {
      result.denoiser_calls += 2;
      return guided_eps(model, z, t, cond, uncond, req.guidance);
    };
    BlendHook hook;
    if (req.use_mask) {
      hook = [&](const Latent& z, int t_prev) {
        return blend(z, t_prev == 0 ? z1 : add_noise(z1, eps, t_prev, sched), m_lat);
      };
    }
    const Latent z0 = ddim_sample(eps_fn, z_init, result.plan, sched, hook);
    result.images.push_back(clamp_unit(ae.decode(z0)));
  }
  return result;
}

nlohmann::ordered_json result_manifest(const nlohmann::ordered_json& inputs, const EditResult& result,
                                       const std::vector<std::string>& outputs,
                                       const std::optional<std::string>& mask_path) {
  nlohmann::ordered_json j;
  j["inputs"] = inputs;
  j["plan"] = result.plan.steps;
  j["outputs"] = outputs;
  j["mask"] = mask_path ? nlohmann::ordered_json(*mask_path) : nlohmann::ordered_json(nullptr);
  j["variant_seeds"] = result.variant_seeds;
  return j;
}

}  // namespace locedit
