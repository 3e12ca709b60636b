#include "locedit/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace locedit {

namespace {

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

// Separable Gaussian smoothing; each 1-D pass renormalises over the in-bounds taps.
std::vector<double> smooth(const std::vector<double>& in, int h, int w) {
  double g[2 * kRadius + 1];
  for (int k = -kRadius; k <= kRadius; ++k) g[k + kRadius] = std::exp(-(k * k) / (2.0 * kSigma * kSigma));
  std::vector<double> tmp(in.size());
  std::vector<double> out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      double norm = 0.0;
      for (int k = std::max(-kRadius, -x); k <= std::min(kRadius, w - 1 - x); ++k) {
        acc += g[k + kRadius] * in[static_cast<std::size_t>(y) * w + x + k];
        norm += g[k + kRadius];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = acc / norm;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      double norm = 0.0;
      for (int k = std::max(-kRadius, -y); k <= std::min(kRadius, h - 1 - y); ++k) {
        acc += g[k + kRadius] * tmp[static_cast<std::size_t>(y + k) * w + x];
        norm += g[k + kRadius];
      }
      out[static_cast<std::size_t>(y) * w + x] = acc / norm;
    }
  }
  return out;
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

Tensor ssim_map(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.size() == 0) throw ShapeError("ssim: empty image");
  const int h = a.height();
  const int w = a.width();
  const std::size_t plane = a.shape().plane();
  Tensor out(1, h, w);
  for (int c = 0; c < a.channels(); ++c) {
    const auto xa = to_vector(a.channel(c));
    const auto xb = to_vector(b.channel(c));
    std::vector<double> aa(plane), bb(plane), ab(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = xa[i] * xa[i];
      bb[i] = xb[i] * xb[i];
      ab[i] = xa[i] * xb[i];
    }
    const auto mu_a = smooth(xa, h, w);
    const auto mu_b = smooth(xb, h, w);
    const auto s_aa = smooth(aa, h, w);
    const auto s_bb = smooth(bb, h, w);
    const auto s_ab = smooth(ab, h, w);
    for (std::size_t i = 0; i < plane; ++i) {
      const double va = s_aa[i] - mu_a[i] * mu_a[i];
      const double vb = s_bb[i] - mu_b[i] * mu_b[i];
      const double cov = s_ab[i] - mu_a[i] * mu_b[i];
      const double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
      const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
      out[i] += num / den;
    }
  }
  out *= 1.0 / a.channels();
  return out;
}

double ssim_global(const Image& a, const Image& b) { return ssim_map(a, b).mean(); }

double ssim_region(const Image& a, const Image& b, const Mask& mask) {
  if (mask.height() != a.height() || mask.width() != a.width()) {
    throw ShapeError("ssim_region: mask does not match image");
  }
  const Tensor map = ssim_map(a, b);
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (mask.data[i] != 0.0) {
      acc += map[i];
      ++n;
    }
  }
  if (n == 0) throw UndefinedMetricError("ssim_region: empty mask");
  return acc / static_cast<double>(n);
}

double clip_score(const Image& image, const std::string& text, const ImageTextEmbedder& embedder, bool rescale) {
  const double c = cosine(embedder.embed_image(image), embedder.embed_text(text));
  return 100.0 * std::max(0.0, (rescale ? 2.5 : 1.0) * c);
}

namespace {

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Gaussian fit(const std::vector<std::vector<double>>& rows, std::size_t dim) {
  if (rows.size() < 2) throw ParameterError("fid: each feature set needs at least two rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (r.size() != dim) throw ParameterError("fid: feature rows differ in width");
    for (std::size_t j = 0; j < dim; ++j) {
      if (!std::isfinite(r[j])) throw NumericError("fid: non-finite feature value");
      x(i, static_cast<Eigen::Index>(j)) = r[j];
    }
  }
  Gaussian g;
  g.mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - g.mean.transpose();
  g.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  return g;
}

// Symmetric square root with clipping of slightly negative eigenvalues.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -tol) throw NumericError("fid: covariance product has a negative eigenvalue");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double fid(const std::vector<std::vector<double>>& features_a, const std::vector<std::vector<double>>& features_b) {
  if (features_a.empty() || features_b.empty()) throw ParameterError("fid: each feature set needs at least two rows");
  const std::size_t dim = features_a.front().size();
  if (dim == 0) throw ParameterError("fid: features must have at least one dimension");
  const Gaussian a = fit(features_a, dim);
  const Gaussian b = fit(features_b, dim);
  const Eigen::MatrixXd ra = sqrt_psd(a.cov);
  const double cross = sqrt_psd(ra * b.cov * ra).trace();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
  return std::max(0.0, d);
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["clip_score_pct"] = clip_score_pct;
  j["fid"] = fid ? nlohmann::ordered_json(*fid) : nlohmann::ordered_json(nullptr);
  j["ssim_m_pct"] = ssim_m_pct;
  j["ssim_mbar_pct"] = ssim_mbar_pct;
  j["n"] = n;
  j["skipped"] = skipped;
  return j;
}

MetricsReport evaluate(const std::vector<EvalRecord>& records, const ProviderSet& providers, bool clip_rescale) {
  if (records.empty()) throw ParameterError("evaluate: no records");
  MetricsReport rep;
  std::vector<std::vector<double>> f_edit;
  std::vector<std::vector<double>> f_src;
  double clip = 0.0;
  double ssim_m = 0.0;
  double ssim_mbar = 0.0;
  for (const auto& r : records) {
    double c = 0.0;
    double m = 0.0;
    double mbar = 0.0;
    try {
      m = ssim_region(r.source, r.edited, r.gt_mask);
      mbar = ssim_region(r.source, r.edited, invert_mask(r.gt_mask));
      c = clip_score(r.edited, r.edit_prompt, *providers.embedder, clip_rescale);
    } catch (const UndefinedMetricError& e) {
      rep.skipped[r.id] = e.what();
      continue;
    }
    clip += c;
    ssim_m += m;
    ssim_mbar += mbar;
    f_edit.push_back(providers.features->extract(r.edited));
    f_src.push_back(providers.features->extract(r.source));
    ++rep.n;
  }
  if (rep.n == 0) return rep;
  rep.clip_score_pct = clip / rep.n;
  rep.ssim_m_pct = 100.0 * ssim_m / rep.n;
  rep.ssim_mbar_pct = 100.0 * ssim_mbar / rep.n;
  if (rep.n >= 2) rep.fid = fid(f_edit, f_src);
  return rep;
}

std::string format_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  const std::vector<std::string> head{"method", "CLIPScore (%)", "FID", "SSIM-M (%)", "SSIM-M̄ (%)", "n"};
  std::vector<std::vector<std::string>> cells{head};
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << v;
    return os.str();
  };
  for (const auto& [name, r] : rows) {
    cells.push_back({name, fmt(r.clip_score_pct), r.fid ? fmt(*r.fid) : "n/a", fmt(r.ssim_m_pct),
                     fmt(r.ssim_mbar_pct), std::to_string(r.n)});
  }
  // Display width: the combining macron takes no column.
  auto width = [](const std::string& s) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const auto ch = static_cast<unsigned char>(s[i]);
      if ((ch & 0xC0) == 0x80) continue;
      if (ch == 0xCC && i + 1 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x84) continue;
      ++n;
    }
    return n;
  };
  std::vector<std::size_t> widths(head.size(), 0);
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], width(row[i]));
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      const std::string pad(widths[i] - width(row[i]), ' ');
      if (i == 0) {
        os << row[i] << pad;
      } else {
        os << "  " << pad << row[i];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace locedit
