#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "locedit/diffusion.hpp"

namespace locedit {

// Parameter partition used by alternating fine-tuning.
enum class ParamGroup { kInput, kMiddle, kOther };

std::string to_string(ParamGroup group);
ParamGroup parse_param_group(const std::string& name);

struct ParamSegment {
  std::string name;
  ParamGroup group = ParamGroup::kOther;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// A noise predictor with a flat parameter vector and an explicit backward pass.
class TrainableDenoiser : public Denoiser {
 public:
  // Whatever a forward pass must retain for backward().
  struct Tape {
    virtual ~Tape() = default;
    Latent output;
  };

  virtual std::span<const double> parameters() const = 0;
  virtual std::span<double> mutable_parameters() = 0;
  virtual const std::vector<ParamSegment>& segments() const = 0;

  virtual std::unique_ptr<Tape> forward(const Latent& noisy, int t, const Conditioning& cond) const = 0;
  // Gradient w.r.t. every parameter given the gradient w.r.t. the forward output.
  virtual std::vector<double> backward(const Tape& tape, const Latent& grad_output) const = 0;

  // Enough to rebuild the architecture; parameters travel separately.
  virtual nlohmann::json architecture() const = 0;

  Latent predict(const Latent& noisy, int t, const Conditioning& cond) const override {
    return forward(noisy, t, cond)->output;
  }

  std::size_t parameter_count() const { return parameters().size(); }
  // Per-parameter group labels expanded from segments().
  std::vector<ParamGroup> group_labels() const;
};

struct ToyDenoiserConfig {
  Shape latent{3, 16, 16};
  int hidden = 32;
  std::vector<int> mid_dilations{1, 2, 4, 8};
  int time_features = 8;  // even: sin/cos pairs at doubling frequencies
  int cond_dim = 10;
  int max_step = 100;

  nlohmann::json to_json() const;
  static ToyDenoiserConfig from_json(const nlohmann::json& j);
};

// conv3x3 -> FiLM(t, text) -> SiLU, then residual [conv3x3 -> FiLM -> SiLU] blocks, then conv3x3.
// Groups: the first conv + FiLM are "input", the residual blocks are "middle", the output conv is
// "other".
class ToyDenoiser final : public TrainableDenoiser {
 public:
  ToyDenoiser(ToyDenoiserConfig config, std::uint64_t init_seed);

  Shape latent_shape() const override { return config_.latent; }
  std::span<const double> parameters() const override { return params_; }
  std::span<double> mutable_parameters() override { return params_; }
  const std::vector<ParamSegment>& segments() const override { return segments_; }

  std::unique_ptr<Tape> forward(const Latent& noisy, int t, const Conditioning& cond) const override;
  std::vector<double> backward(const Tape& tape, const Latent& grad_output) const override;
  nlohmann::json architecture() const override;

  const ToyDenoiserConfig& config() const { return config_; }

 private:
  struct Layer {
    std::size_t conv_w = 0;
    std::size_t conv_b = 0;
    std::size_t film_w = 0;
    std::size_t film_b = 0;
    int in_channels = 0;
    int dilation = 1;
  };

  std::size_t add_segment(const std::string& name, ParamGroup group, std::size_t size);
  std::vector<double> embed(int t, const Conditioning& cond) const;

  ToyDenoiserConfig config_;
  std::vector<ParamSegment> segments_;
  std::vector<double> params_;
  std::vector<Layer> layers_;  // layers_[0] is the input layer, the rest are residual blocks
  std::size_t out_w_ = 0;
  std::size_t out_b_ = 0;
};

// Rebuilds a denoiser from architecture() output and a parameter vector.
std::unique_ptr<TrainableDenoiser> make_denoiser(const nlohmann::json& architecture, std::span<const double> params);

}  // namespace locedit
