#include "locedit/denoiser.hpp"

#include <cmath>
#include <numbers>

#include "locedit/rng.hpp"

namespace locedit {

std::string to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kInput:
      return "input_layers";
    case ParamGroup::kMiddle:
      return "middle_layers";
    case ParamGroup::kOther:
      break;
  }
  return "other";
}

ParamGroup parse_param_group(const std::string& name) {
  if (name == "input_layers") return ParamGroup::kInput;
  if (name == "middle_layers") return ParamGroup::kMiddle;
  if (name == "other") return ParamGroup::kOther;
  throw ParameterError("unknown parameter group '" + name + "'");
}

std::vector<ParamGroup> TrainableDenoiser::group_labels() const {
  std::vector<ParamGroup> labels(parameter_count(), ParamGroup::kOther);
  for (const auto& seg : segments()) {
    for (std::size_t i = 0; i < seg.size; ++i) labels[seg.offset + i] = seg.group;
  }
  return labels;
}

nlohmann::json ToyDenoiserConfig::to_json() const {
  return {{"kind", "toy_conv"},
          {"latent", {latent.channels, latent.height, latent.width}},
          {"hidden", hidden},
          {"mid_dilations", mid_dilations},
          {"time_features", time_features},
          {"cond_dim", cond_dim},
          {"T", max_step}};
}

ToyDenoiserConfig ToyDenoiserConfig::from_json(const nlohmann::json& j) {
  try {
    ToyDenoiserConfig c;
    const auto shape = j.at("latent").get<std::vector<int>>();
    if (shape.size() != 3) throw ParameterError("latent shape must have 3 entries");
    c.latent = Shape{shape[0], shape[1], shape[2]};
    c.hidden = j.at("hidden").get<int>();
    c.mid_dilations = j.at("mid_dilations").get<std::vector<int>>();
    c.time_features = j.at("time_features").get<int>();
    c.cond_dim = j.at("cond_dim").get<int>();
    c.max_step = j.at("T").get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("invalid denoiser architecture: ") + e.what());
  }
}

namespace {

constexpr int kKernel = 3;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// 3x3 "same" convolution with zero padding = dilation. Weights are [out][in][3][3].
Tensor conv_forward(const Tensor& in, const double* w, const double* b, int out_channels, int dilation) {
  const int h = in.height();
  const int wd = in.width();
  Tensor out(out_channels, h, wd);
  for (int o = 0; o < out_channels; ++o) {
    auto dst = out.channel(o);
    std::fill(dst.begin(), dst.end(), b[o]);
    for (int i = 0; i < in.channels(); ++i) {
      const auto src = in.channel(i);
      for (int ky = 0; ky < kKernel; ++ky) {
        const int dy = (ky - 1) * dilation;
        for (int kx = 0; kx < kKernel; ++kx) {
          const int dx = (kx - 1) * dilation;
          const double k = w[((o * in.channels() + i) * kKernel + ky) * kKernel + kx];
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(wd, wd - dx);
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            double* drow = dst.data() + static_cast<std::size_t>(y) * wd;
            const double* srow = src.data() + static_cast<std::size_t>(y + dy) * wd + dx;
            for (int x = x0; x < x1; ++x) drow[x] += k * srow[x];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients; returns the input gradient when `grad_in` is non-null.
void conv_backward(const Tensor& in, const double* w, const Tensor& grad_out, int dilation, double* gw, double* gb,
                   Tensor* grad_in) {
  const int h = in.height();
  const int wd = in.width();
  const int out_channels = grad_out.channels();
  if (grad_in) *grad_in = Tensor(in.shape());
  for (int o = 0; o < out_channels; ++o) {
    const auto g = grad_out.channel(o);
    double bias_acc = 0.0;
    for (double v : g) bias_acc += v;
    gb[o] += bias_acc;
    for (int i = 0; i < in.channels(); ++i) {
      const auto src = in.channel(i);
      for (int ky = 0; ky < kKernel; ++ky) {
        const int dy = (ky - 1) * dilation;
        for (int kx = 0; kx < kKernel; ++kx) {
          const int dx = (kx - 1) * dilation;
          const std::size_t widx = ((o * in.channels() + i) * kKernel + ky) * kKernel + kx;
          const double k = w[widx];
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(wd, wd - dx);
          double acc = 0.0;
          for (int y = std::max(0, -dy); y < std::min(h, h - dy); ++y) {
            const double* grow = g.data() + static_cast<std::size_t>(y) * wd;
            const double* srow = src.data() + static_cast<std::size_t>(y + dy) * wd + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * srow[x];
            if (grad_in) {
              double* irow = grad_in->channel(i).data() + static_cast<std::size_t>(y + dy) * wd + dx;
              for (int x = x0; x < x1; ++x) irow[x] += k * grow[x];
            }
          }
          gw[widx] += acc;
        }
      }
    }
  }
}

struct ToyTape final : TrainableDenoiser::Tape {
  Tensor input;
  std::vector<double> embedding;
  // Per layer: conv output, FiLM scale/shift, pre-activation and block output.
  std::vector<Tensor> conv_out;
  std::vector<std::vector<double>> gamma;
  std::vector<std::vector<double>> beta;
  std::vector<Tensor> pre_act;
  std::vector<Tensor> hidden;
};

}  // namespace

ToyDenoiser::ToyDenoiser(ToyDenoiserConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  if (config_.hidden < 1 || config_.latent.numel() == 0 || config_.time_features < 0 ||
      config_.time_features % 2 != 0 || config_.cond_dim < 0 || config_.max_step < 1) {
    throw ParameterError("invalid toy denoiser configuration");
  }
  const int hidden = config_.hidden;
  const std::size_t emb = static_cast<std::size_t>(config_.time_features + config_.cond_dim);
  auto add_layer = [&](const std::string& prefix, ParamGroup group, int in_channels, int dilation) {
    Layer l;
    l.in_channels = in_channels;
    l.dilation = dilation;
    l.conv_w = add_segment(prefix + ".conv.weight", group, static_cast<std::size_t>(hidden) * in_channels * 9);
    l.conv_b = add_segment(prefix + ".conv.bias", group, hidden);
    l.film_w = add_segment(prefix + ".film.weight", group, 2 * hidden * emb);
    l.film_b = add_segment(prefix + ".film.bias", group, 2 * hidden);
    layers_.push_back(l);
  };
  add_layer("input", ParamGroup::kInput, config_.latent.channels, 1);
  for (std::size_t i = 0; i < config_.mid_dilations.size(); ++i) {
    if (config_.mid_dilations[i] < 1) throw ParameterError("dilation must be >= 1");
    add_layer("mid" + std::to_string(i), ParamGroup::kMiddle, hidden, config_.mid_dilations[i]);
  }
  out_w_ = add_segment("output.conv.weight", ParamGroup::kOther,
                       static_cast<std::size_t>(config_.latent.channels) * hidden * 9);
  out_b_ = add_segment("output.conv.bias", ParamGroup::kOther, config_.latent.channels);

  Rng rng(derive_seed(init_seed, "toy-denoiser-init"));
  auto fill = [&](std::size_t offset, std::size_t size, double stddev) {
    for (std::size_t i = 0; i < size; ++i) params_[offset + i] = stddev * rng.normal();
  };
  for (const Layer& l : layers_) {
    fill(l.conv_w, static_cast<std::size_t>(hidden) * l.in_channels * 9, 1.0 / std::sqrt(9.0 * l.in_channels));
    fill(l.film_w, 2 * hidden * emb, emb == 0 ? 0.0 : 0.5 / std::sqrt(static_cast<double>(emb)));
  }
  fill(out_w_, static_cast<std::size_t>(config_.latent.channels) * hidden * 9, 0.5 / std::sqrt(9.0 * hidden));
}

std::size_t ToyDenoiser::add_segment(const std::string& name, ParamGroup group, std::size_t size) {
  const std::size_t offset = params_.size();
  segments_.push_back(ParamSegment{name, group, offset, size});
  params_.resize(offset + size, 0.0);
  return offset;
}

std::vector<double> ToyDenoiser::embed(int t, const Conditioning& cond) const {
  if (cond.dim != config_.cond_dim) {
    throw ShapeError("conditioning dim " + std::to_string(cond.dim) + " does not match denoiser " +
                     std::to_string(config_.cond_dim));
  }
  std::vector<double> e;
  e.reserve(config_.time_features + config_.cond_dim);
  const double phase = std::numbers::pi * static_cast<double>(t) / config_.max_step;
  for (int k = 0; k < config_.time_features / 2; ++k) {
    const double f = std::ldexp(phase, k);
    e.push_back(std::sin(f));
    e.push_back(std::cos(f));
  }
  const auto pooled = cond.pooled();
  e.insert(e.end(), pooled.begin(), pooled.end());
  return e;
}

std::unique_ptr<TrainableDenoiser::Tape> ToyDenoiser::forward(const Latent& noisy, int t,
                                                               const Conditioning& cond) const {
  if (noisy.shape() != config_.latent) {
    throw ShapeError("denoiser input " + noisy.shape().str() + " does not match " + config_.latent.str());
  }
  auto tape = std::make_unique<ToyTape>();
  tape->input = noisy;
  tape->embedding = embed(t, cond);
  const int hidden = config_.hidden;
  const std::size_t emb = tape->embedding.size();
  const double* p = params_.data();

  const Tensor* x = &tape->input;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    Tensor a = conv_forward(*x, p + l.conv_w, p + l.conv_b, hidden, l.dilation);
    std::vector<double> gamma(hidden);
    std::vector<double> beta(hidden);
    for (int c = 0; c < 2 * hidden; ++c) {
      double v = p[l.film_b + c];
      for (std::size_t k = 0; k < emb; ++k) v += p[l.film_w + c * emb + k] * tape->embedding[k];
      (c < hidden ? gamma[c] : beta[c - hidden]) = v;
    }
    Tensor u(a.shape());
    Tensor hid = li == 0 ? Tensor(a.shape()) : *x;
    const std::size_t plane = a.shape().plane();
    for (int c = 0; c < hidden; ++c) {
      for (std::size_t q = 0; q < plane; ++q) {
        const std::size_t i = c * plane + q;
        u[i] = a[i] * (1.0 + gamma[c]) + beta[c];
        hid[i] += silu(u[i]);
      }
    }
    tape->conv_out.push_back(std::move(a));
    tape->gamma.push_back(std::move(gamma));
    tape->beta.push_back(std::move(beta));
    tape->pre_act.push_back(std::move(u));
    tape->hidden.push_back(std::move(hid));
    x = &tape->hidden.back();
  }
  tape->output = conv_forward(*x, p + out_w_, p + out_b_, config_.latent.channels, 1);
  return tape;
}

std::vector<double> ToyDenoiser::backward(const Tape& base_tape, const Latent& grad_output) const {
  const auto* tape = dynamic_cast<const ToyTape*>(&base_tape);
  if (tape == nullptr) throw ParameterError("backward: tape was not produced by this denoiser");
  require_same_shape(tape->output, grad_output, "denoiser backward");
  const int hidden = config_.hidden;
  const std::size_t emb = tape->embedding.size();
  const double* p = params_.data();
  std::vector<double> grad(params_.size(), 0.0);

  Tensor dh;
  conv_backward(tape->hidden.back(), p + out_w_, grad_output, 1, grad.data() + out_w_, grad.data() + out_b_, &dh);

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const Tensor& a = tape->conv_out[li];
    const Tensor& u = tape->pre_act[li];
    const auto& gamma = tape->gamma[li];
    const std::size_t plane = a.shape().plane();
    Tensor da(a.shape());
    std::vector<double> dfilm(2 * hidden, 0.0);
    for (int c = 0; c < hidden; ++c) {
      double dg = 0.0;
      double dbeta = 0.0;
      for (std::size_t q = 0; q < plane; ++q) {
        const std::size_t i = c * plane + q;
        const double du = dh[i] * silu_grad(u[i]);
        da[i] = du * (1.0 + gamma[c]);
        dg += du * a[i];
        dbeta += du;
      }
      dfilm[c] = dg;
      dfilm[hidden + c] = dbeta;
    }
    for (int c = 0; c < 2 * hidden; ++c) {
      grad[l.film_b + c] += dfilm[c];
      for (std::size_t k = 0; k < emb; ++k) grad[l.film_w + c * emb + k] += dfilm[c] * tape->embedding[k];
    }
    const Tensor& layer_in = li == 0 ? tape->input : tape->hidden[li - 1];
    if (li == 0) {
      conv_backward(layer_in, p + l.conv_w, da, l.dilation, grad.data() + l.conv_w, grad.data() + l.conv_b, nullptr);
    } else {
      Tensor dx;
      conv_backward(layer_in, p + l.conv_w, da, l.dilation, grad.data() + l.conv_w, grad.data() + l.conv_b, &dx);
      dx += dh;  // residual path
      dh = std::move(dx);
    }
  }
  return grad;
}

nlohmann::json ToyDenoiser::architecture() const { return config_.to_json(); }

std::unique_ptr<TrainableDenoiser> make_denoiser(const nlohmann::json& architecture, std::span<const double> params) {
  if (architecture.value("kind", std::string()) != "toy_conv") {
    throw ParameterError("unknown denoiser kind in architecture");
  }
  auto model = std::make_unique<ToyDenoiser>(ToyDenoiserConfig::from_json(architecture), 0);
  if (params.size() != model->parameter_count()) {
    throw ParameterError("parameter count " + std::to_string(params.size()) + " does not match architecture (" +
                         std::to_string(model->parameter_count()) + ")");
  }
  std::copy(params.begin(), params.end(), model->mutable_parameters().begin());
  return model;
}

}  // namespace locedit
