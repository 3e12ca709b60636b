#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "locedit/providers.hpp"

namespace locedit {

// Per-pixel SSIM with an 11x11 Gaussian window (sigma 1.5) truncated and renormalised at the
// borders, L = 1, averaged over channels. Returns [1, H, W].
Tensor ssim_map(const Image& a, const Image& b);
double ssim_global(const Image& a, const Image& b);
// Mean of the SSIM map over mask == 1; UndefinedMetricError for an empty mask.
double ssim_region(const Image& a, const Image& b, const Mask& mask);

// 100 * max(0, cos); with `rescale` the cosine is first multiplied by 2.5.
double clip_score(const Image& image, const std::string& text, const ImageTextEmbedder& embedder,
                  bool rescale = false);

// Frechet distance between Gaussian fits (unbiased covariance) of two feature sets given
// as rows. ParameterError for fewer than two rows or mismatched widths, NumericError for
// non-finite input.
double fid(const std::vector<std::vector<double>>& features_a, const std::vector<std::vector<double>>& features_b);

struct EvalRecord {
  std::string id;
  Image source;
  Image edited;
  std::string edit_prompt;
  Mask gt_mask;
};

struct MetricsReport {
  double clip_score_pct = 0.0;
  std::optional<double> fid;  // needs at least two scored records
  double ssim_m_pct = 0.0;
  double ssim_mbar_pct = 0.0;
  int n = 0;
  std::map<std::string, std::string> skipped;  // id -> reason

  nlohmann::ordered_json to_json() const;
};

MetricsReport evaluate(const std::vector<EvalRecord>& records, const ProviderSet& providers, bool clip_rescale = false);

// Aligned text table: method, CLIPScore (%), FID, SSIM-M (%), SSIM-M̄ (%), n.
std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace locedit
