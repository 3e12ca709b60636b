#include "locedit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "locedit/image_io.hpp"

namespace locedit {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (steps < 0) throw ParameterError("train.steps must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("train.lr must be positive");
  if (!(lambda_perc >= 0.0) || !std::isfinite(lambda_perc)) throw ParameterError("train.lambda_perc must be >= 0");
  if (alternation_period < 1) throw ParameterError("train.alternation_period must be >= 1");
  if (batch_size != 1) throw ParameterError("train batch_size must be 1");
  if (ckpt_every < 0) throw ParameterError("train.ckpt_every must be >= 0");
  if (optimizer != "sgd" && optimizer != "adam") throw ParameterError("train.optimizer must be sgd or adam");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"steps", steps},
          {"lr", lr},
          {"lambda_perc", lambda_perc},
          {"seed", seed},
          {"alternation_period", alternation_period},
          {"batch_size", batch_size},
          {"ckpt_every", ckpt_every},
          {"optimizer", optimizer}};
}

void PretrainConfig::validate() const {
  if (steps < 0) throw ParameterError("pretrain steps must be >= 0");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ParameterError("pretrain lr must be positive");
  if (!(prompt_dropout >= 0.0 && prompt_dropout <= 1.0)) throw ParameterError("prompt_dropout must be in [0, 1]");
  if (optimizer != "sgd" && optimizer != "adam") throw ParameterError("optimizer must be sgd or adam");
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"steps", steps}, {"lr", lr}, {"seed", seed}, {"prompt_dropout", prompt_dropout}, {"optimizer", optimizer}};
}

std::vector<TrainingSample> load_training_samples(const std::vector<ManifestEntry>& entries) {
  std::vector<TrainingSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries) {
    TrainingSample s;
    s.id = e.id;
    s.source = read_png_image(e.source_path);
    s.target = read_png_image(e.target_path);
    s.source_mask = read_png_mask(e.source_mask_path);
    s.target_mask = read_png_mask(e.target_mask_path);
    if (s.source_mask.height() != s.source.height() || s.source_mask.width() != s.source.width() ||
        s.target_mask.height() != s.target.height() || s.target_mask.width() != s.target.width()) {
      throw ShapeError("triplet " + e.id + ": mask and image sizes differ");
    }
    s.edit_prompt = e.edit_prompt;
    s.diff_target = e.diff_target;
    out.push_back(std::move(s));
  }
  return out;
}

StepDraw draw_step(Rng& rng, Shape latent, int max_step) {
  StepDraw d;
  d.t = rng.uniform_int(1, max_step);
  d.eps1 = rng.normal_tensor(latent);
  return d;
}

ObjectiveResult evaluate_objective(const TrainableDenoiser& model, const TrainingSample& sample, const StepDraw& draw,
                                   const NoiseSchedule& sched, const ProviderSet& providers, double lambda_perc,
                                   bool with_grad) {
  const Autoencoder& ae = *providers.autoencoder;
  const ImageTextEmbedder& emb = *providers.embedder;
  const int t = draw.t;
  const int max_step = sched.max_step();

  const Latent z1 = ae.encode(sample.source);
  const Latent z2 = ae.encode(sample.target);
  const Latent zt = add_noise(z1, draw.eps1, t, sched);
  const Latent eps2 = target_noise(zt, z2, t, sched);
  const Conditioning cond = providers.text_encoder->encode(sample.edit_prompt);
  const auto tape = model.forward(zt, t, cond);
  const Latent& eps_pred = tape->output;
  const Latent z_hat = predict_clean(zt, eps_pred, t, sched);
  const Image x_hat = ae.decode(z_hat);

  const int f = ae.downscale();
  const Tensor m2_lat = mask_to_latent(sample.target_mask, f);
  const Tensor m1bar_lat = mask_to_latent(invert_mask(sample.source_mask), f);

  LossTerms terms;
  terms.l_paired = loss_paired(eps2, eps_pred);
  const MaskLoss ml = loss_mask(draw.eps1, eps2, eps_pred, m2_lat, m1bar_lat);
  terms.l_mask_fg = ml.fg;
  terms.l_mask_bg = ml.bg;
  if (!x_hat.all_finite()) {
    // Image-space terms are undefined; report NaN so the caller can print the noise terms.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    terms.l_global = terms.l_loc = terms.l_perc = nan;
    return {combine(terms, t, max_step, lambda_perc), {}};
  }
  terms.l_global = loss_global(x_hat, sample.edit_prompt, emb);
  terms.l_loc = loss_localised(x_hat, sample.diff_target, sample.source_mask, emb).value;
  terms.l_perc = loss_perceptual(x_hat, sample.target, sample.source_mask, sample.target_mask, *providers.features);

  ObjectiveResult out{combine(terms, t, max_step, lambda_perc), {}};
  if (!with_grad) return out;

  const double w = static_cast<double>(t) / max_step;
  Image g_img = loss_global_grad(x_hat, sample.edit_prompt, emb);
  g_img += loss_localised_grad(x_hat, sample.diff_target, sample.source_mask, emb);
  g_img *= 1.0 - w;
  if (lambda_perc != 0.0) {
    g_img += lambda_perc *
             loss_perceptual_grad(x_hat, sample.target, sample.source_mask, sample.target_mask, *providers.features);
  }
  const double ab = sched.alpha_bar(t);
  const double dz_deps = -std::sqrt(1.0 - ab) / std::sqrt(ab);
  Latent g_eps = loss_mask_grad(draw.eps1, eps2, eps_pred, m2_lat, m1bar_lat, w, w);
  g_eps += dz_deps * ae.decode_vjp(z_hat, g_img);
  out.grad = model.backward(*tape, g_eps);
  return out;
}

ParamGroup select_active_group(long step, int period) {
  if (period < 1) throw ParameterError("alternation period must be >= 1");
  if (step < 0) throw ParameterError("step must be >= 0");
  return (step / period) % 2 == 0 ? ParamGroup::kInput : ParamGroup::kMiddle;
}

namespace {

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  std::string name() const override { return "sgd"; }
  void update(std::span<double> params, std::span<const double> grad, const std::vector<ParamGroup>& labels,
              ParamGroup active) override {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (labels[i] == active) params[i] -= lr_ * grad[i];
    }
  }

 private:
  double lr_;
};

// Adam with bias correction counted per parameter group.
class Adam final : public Optimizer {
 public:
  explicit Adam(double lr) : lr_(lr) {}
  std::string name() const override { return "adam"; }
  void update(std::span<double> params, std::span<const double> grad, const std::vector<ParamGroup>& labels,
              ParamGroup active) override {
    if (m_.size() != params.size()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    const long k = ++count_[static_cast<int>(active)];
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(k));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(k));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (labels[i] != active) continue;
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  double lr_;
  std::vector<double> m_;
  std::vector<double> v_;
  long count_[3] = {0, 0, 0};
};

std::string describe(const LossBundle& b, long step) {
  std::ostringstream os;
  os << "non-finite loss at step " << step << " (t=" << b.t << "): l_paired=" << b.terms.l_paired
     << " l_global=" << b.terms.l_global << " l_fg=" << b.terms.l_mask_fg << " l_bg=" << b.terms.l_mask_bg
     << " l_perc=" << b.terms.l_perc << " l_loc=" << b.terms.l_loc << " total=" << b.total;
  return os.str();
}

bool bundle_finite(const LossBundle& b) {
  const auto& t = b.terms;
  return std::isfinite(t.l_paired) && std::isfinite(t.l_global) && std::isfinite(t.l_mask_fg) &&
         std::isfinite(t.l_mask_bg) && std::isfinite(t.l_perc) && std::isfinite(t.l_loc) && std::isfinite(b.total);
}

constexpr char kMagic[8] = {'L', 'O', 'C', 'E', 'D', 'I', 'T', '1'};
constexpr std::size_t kLossTail = 100;

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(const std::string& name, double lr) {
  if (name == "sgd") return std::make_unique<Sgd>(lr);
  if (name == "adam") return std::make_unique<Adam>(lr);
  throw ParameterError("unknown optimizer '" + name + "'");
}

fs::path Checkpoint::sidecar_path(const fs::path& path) {
  fs::path p = path;
  p += ".json";
  return p;
}

void Checkpoint::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::uint64_t n = params.size();
    out.write(kMagic, sizeof(kMagic));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  nlohmann::ordered_json side;
  side["model"] = model;
  side["schedule"] = schedule;
  side["config"] = config;
  side["step"] = step;
  side["loss_tail"] = loss_tail;
  std::ofstream out(sidecar_path(path), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint sidecar " + sidecar_path(path).string());
  out << side.dump(2) << '\n';
  if (!out) throw IoError("failed writing checkpoint sidecar " + sidecar_path(path).string());
}

Checkpoint Checkpoint::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  std::uint64_t n = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParameterError("not a checkpoint file: " + path.string());
  }
  const auto expected = static_cast<std::uintmax_t>(sizeof(magic) + sizeof(n) + n * sizeof(double));
  if (fs::file_size(path) != expected) throw ParameterError("checkpoint size does not match its header: " + path.string());
  Checkpoint ck;
  ck.params.resize(n);
  in.read(reinterpret_cast<char*>(ck.params.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint " + path.string());

  std::ifstream sin(sidecar_path(path));
  if (!sin) throw IoError("cannot read checkpoint sidecar " + sidecar_path(path).string());
  try {
    const nlohmann::json side = nlohmann::json::parse(sin);
    ck.model = side.at("model");
    ck.schedule = side.at("schedule");
    ck.config = side.at("config");
    ck.step = side.at("step").get<long>();
    ck.loss_tail = side.at("loss_tail").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError("invalid checkpoint sidecar: " + std::string(e.what()));
  }
  return ck;
}

std::unique_ptr<TrainableDenoiser> Checkpoint::make_model() const { return make_denoiser(model, params); }

NoiseSchedule Checkpoint::make_schedule() const { return NoiseSchedule::from_json(schedule); }

LossBundle train_step(const TrainingSample& sample, TrainableDenoiser& model, const NoiseSchedule& sched,
                      const ProviderSet& providers, const TrainConfig& cfg, Optimizer& optimizer, long step) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step)));
  const StepDraw draw = draw_step(rng, model.latent_shape(), sched.max_step());
  ObjectiveResult r = evaluate_objective(model, sample, draw, sched, providers, cfg.lambda_perc, true);
  const bool grad_ok = std::all_of(r.grad.begin(), r.grad.end(), [](double g) { return std::isfinite(g); });
  if (!bundle_finite(r.bundle) || !grad_ok) {
    std::string msg = describe(r.bundle, step);
    if (bundle_finite(r.bundle)) msg = "non-finite gradient at step " + std::to_string(step) + " (t=" +
                                       std::to_string(draw.t) + ")";
    throw NumericError(msg);
  }
  optimizer.update(model.mutable_parameters(), r.grad, model.group_labels(),
                   select_active_group(step, cfg.alternation_period));
  return r.bundle;
}

Checkpoint fit(const std::vector<TrainingSample>& samples, TrainableDenoiser& model, const ProviderSet& providers,
               const NoiseSchedule& sched, const TrainConfig& cfg, const FitOutputs& outputs,
               std::vector<LossBundle>* history) {
  cfg.validate();
  providers.validate();
  if (samples.empty()) throw ParameterError("fit: no training samples");

  auto optimizer = make_optimizer(cfg.optimizer, cfg.lr);
  std::ofstream log;
  if (!outputs.loss_log.empty()) {
    if (outputs.loss_log.has_parent_path()) fs::create_directories(outputs.loss_log.parent_path());
    log.open(outputs.loss_log, std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write loss log " + outputs.loss_log.string());
  }

  Checkpoint ck;
  ck.model = model.architecture();
  ck.schedule = sched.to_json();
  ck.config = cfg.to_json();
  auto snapshot = [&](long step) {
    ck.params.assign(model.parameters().begin(), model.parameters().end());
    ck.step = step;
    if (!outputs.checkpoint.empty()) ck.save(outputs.checkpoint);
  };

  std::vector<std::size_t> order(samples.size());
  for (long step = 0; step < cfg.steps; ++step) {
    const std::size_t pos = static_cast<std::size_t>(step) % samples.size();
    if (pos == 0) {
      const std::uint64_t epoch = static_cast<std::uint64_t>(step) / samples.size();
      std::iota(order.begin(), order.end(), std::size_t{0});
      Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, "shuffle"), epoch));
      std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    }
    const LossBundle b = train_step(samples[order[pos]], model, sched, providers, cfg, *optimizer, step);
    if (history) history->push_back(b);
    ck.loss_tail.push_back(b.total);
    if (ck.loss_tail.size() > kLossTail) ck.loss_tail.erase(ck.loss_tail.begin());
    if (log.is_open()) {
      log << b.log_row(step).dump() << '\n';
      if (!log) throw IoError("failed writing loss log " + outputs.loss_log.string());
    }
    if (cfg.ckpt_every > 0 && (step + 1) % cfg.ckpt_every == 0 && step + 1 < cfg.steps) snapshot(step + 1);
  }
  snapshot(cfg.steps);
  return ck;
}

std::vector<double> pretrain(const std::vector<CaptionedImage>& corpus, TrainableDenoiser& model,
                             const ProviderSet& providers, const NoiseSchedule& sched, const PretrainConfig& cfg) {
  cfg.validate();
  providers.validate();
  if (corpus.empty()) throw ParameterError("pretrain: empty corpus");
  std::vector<Latent> latents;
  std::vector<Conditioning> conds;
  for (const auto& item : corpus) {
    latents.push_back(providers.autoencoder->encode(item.image));
    const std::string caption = item.caption.empty() ? providers.captioner->caption(item.image) : item.caption;
    conds.push_back(providers.text_encoder->encode(caption));
  }
  const Conditioning uncond = providers.text_encoder->encode("");
  auto optimizer = make_optimizer(cfg.optimizer, cfg.lr);
  std::vector<ParamGroup> labels(model.parameter_count(), ParamGroup::kOther);

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(cfg.steps));
  for (long step = 0; step < cfg.steps; ++step) {
    Rng rng(derive_seed(derive_seed(cfg.seed, "pretrain"), static_cast<std::uint64_t>(step)));
    const std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(corpus.size()) - 1));
    const StepDraw draw = draw_step(rng, model.latent_shape(), sched.max_step());
    const bool drop = rng.uniform() < cfg.prompt_dropout;
    const Latent zt = add_noise(latents[i], draw.eps1, draw.t, sched);
    const auto tape = model.forward(zt, draw.t, drop ? uncond : conds[i]);
    const double loss = loss_paired(draw.eps1, tape->output);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss during pretraining at step " + std::to_string(step) +
                         " (t=" + std::to_string(draw.t) + ")");
    }
    const std::vector<double> grad = model.backward(*tape, loss_paired_grad(draw.eps1, tape->output));
    optimizer->update(model.mutable_parameters(), grad, labels, ParamGroup::kOther);
    losses.push_back(loss);
  }
  return losses;
}

}  // namespace locedit
