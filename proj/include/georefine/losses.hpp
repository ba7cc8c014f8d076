#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "georefine/geometry.hpp"
#include "georefine/image.hpp"

namespace georefine {

/// Weights of the smoothness, map-point and consistency terms (photometric weight is 1).
struct LossWeights {
  double lambda_s = 1.0e-4;
  double lambda_m = 5.0e-2;
  double lambda_c = 1.0e-1;

  void validate() const {
    if (!(lambda_s >= 0.0 && lambda_m >= 0.0 && lambda_c >= 0.0)) {
      throw Error(ErrorCode::invalid_argument, "loss weights must be nonnegative");
    }
  }
};

/// Source frames used to supervise one target frame.
struct SnippetFrameSet {
  int target_id = 0;
  std::vector<int> source_ids;

  void validate() const {
    if (source_ids.empty()) throw Error(ErrorCode::invalid_argument, "snippet has no sources");
    for (std::size_t a = 0; a < source_ids.size(); ++a) {
      if (source_ids[a] == target_id) throw Error(ErrorCode::invalid_argument, "snippet contains its target");
      for (std::size_t b = a + 1; b < source_ids.size(); ++b) {
        if (source_ids[a] == source_ids[b]) throw Error(ErrorCode::invalid_argument, "duplicate snippet source");
      }
    }
  }
};

/// Map point seen in the target frame: pixel and its depth according to SLAM.
struct MapPointObservation {
  Vec2 pixel = Vec2::Zero();
  double slam_depth = 0.0;
};

/// dL/d(log D) for the target frame. Zero at invalid pixels.
using DepthGradient = Grid<double>;

/// A source view as seen by the losses. A null image (or depth) marks the frame as missing.
struct SourceView {
  int frame_id = 0;
  const ImageGrid* image = nullptr;
  const DepthMap* depth = nullptr;
  SE3Pose pose;
};

struct TermResult {
  double value = 0.0;
  std::size_t count = 0;
  DepthGradient gradient;
  std::vector<int> skipped_sources;
  Grid<double> per_pixel;  // composed per-pixel term before averaging (consistency only), NaN where undefined
};

struct LossBreakdown {
  double l_p = 0.0;
  double l_s = 0.0;
  double l_m = 0.0;
  double l_c = 0.0;
  double total = 0.0;
  std::size_t count_p = 0;
  std::size_t count_s = 0;
  std::size_t count_m = 0;
  std::size_t count_c = 0;
};

enum class ConsistencyComposition {
  minimum,  // per-pixel min over sources (occlusion-aware)
  average,  // per-pixel mean over sources
};

inline constexpr double kSsimC1 = 1.0e-4;
inline constexpr double kSsimC2 = 9.0e-4;
inline constexpr double kPhotometricAlpha = 0.85;

namespace detail {

inline int clamp_index(int v, int n) { return std::clamp(v, 0, n - 1); }

/// 3x3 window (clamped at the image border) around (x, y), as flat pixel indices.
inline std::array<std::size_t, 9> window3x3(int x, int y, int w, int h) {
  std::array<std::size_t, 9> idx{};
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      idx[k++] = static_cast<std::size_t>(clamp_index(y + dy, h)) * w + clamp_index(x + dx, w);
    }
  }
  return idx;
}

struct SsimTerms {
  double mu_x, mu_y, a, b, c, d;
  double value() const { return (a * b) / (c * d); }
};

inline SsimTerms ssim_terms(const std::array<double, 9>& xs, const std::array<double, 9>& ys) {
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (int k = 0; k < 9; ++k) {
    sx += xs[k];
    sy += ys[k];
    sxx += xs[k] * xs[k];
    syy += ys[k] * ys[k];
    sxy += xs[k] * ys[k];
  }
  const double mx = sx / 9.0;
  const double my = sy / 9.0;
  const double vx = sxx / 9.0 - mx * mx;
  const double vy = syy / 9.0 - my * my;
  const double cxy = sxy / 9.0 - mx * my;
  return {mx, my, 2.0 * mx * my + kSsimC1, 2.0 * cxy + kSsimC2, mx * mx + my * my + kSsimC1,
          vx + vy + kSsimC2};
}

inline void gather(const ImageGrid& img, const std::array<std::size_t, 9>& idx, int c, std::array<double, 9>& out) {
  const auto& v = img.values();
  const int ch = img.channels();
  for (int k = 0; k < 9; ++k) out[k] = v[idx[k] * ch + c];
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

/// Photometric error map and the gradient of Σ_valid pe w.r.t. every warped intensity.
struct PhotometricEval {
  Grid<double> pe;
  Mask valid;
  std::size_t count = 0;
  std::vector<double> d_sum_d_warp;  // interleaved like the image
};

inline PhotometricEval photometric_eval(const ImageGrid& target, const ImageGrid& warped, const Mask& warp_valid,
                                        bool with_gradient) {
  const int w = target.width();
  const int h = target.height();
  const int ch = target.channels();
  PhotometricEval out{Grid<double>(w, h, 0.0), Mask(w, h, 0), 0, {}};
  if (with_gradient) out.d_sum_d_warp.assign(static_cast<std::size_t>(w) * h * ch, 0.0);
  std::array<double, 9> xs{}, ys{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto idx = window3x3(x, y, w, h);
      bool ok = true;
      for (auto i : idx) ok = ok && warp_valid[i] != 0;
      if (!ok) continue;
      double pe = 0.0;
      for (int c = 0; c < ch; ++c) {
        gather(target, idx, c, xs);
        gather(warped, idx, c, ys);
        const SsimTerms s = ssim_terms(xs, ys);
        const double diff = ys[4] - xs[4];
        pe += kPhotometricAlpha / 2.0 * (1.0 - s.value()) + (1.0 - kPhotometricAlpha) * std::abs(diff);
        if (!with_gradient) continue;
        const double cd = s.c * s.d;
        const double ab = s.a * s.b;
        for (int k = 0; k < 9; ++k) {
          const double da = 2.0 * s.mu_x / 9.0;
          const double db = 2.0 * (xs[k] - s.mu_x) / 9.0;
          const double dc = 2.0 * s.mu_y / 9.0;
          const double dd = 2.0 * (ys[k] - s.mu_y) / 9.0;
          const double ds = (da * s.b + s.a * db) / cd - ab * (dc * s.d + s.c * dd) / (cd * cd);
          double g = -kPhotometricAlpha / 2.0 * ds;
          if (k == 4) g += (1.0 - kPhotometricAlpha) * sign(diff);
          out.d_sum_d_warp[idx[k] * ch + c] += g / ch;
        }
      }
      out.pe(x, y) = pe / ch;
      out.valid(x, y) = 1;
      ++out.count;
    }
  }
  return out;
}

inline void check_same_size(const ImageGrid& a, const ImageGrid& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
    throw Error(ErrorCode::resolution_mismatch, "images differ in size or channel count");
  }
}

}  // namespace detail

/// Per-pixel SSIM (averaged over channels) using 3x3 box windows clamped at the border.
inline Grid<double> ssim(const ImageGrid& a, const ImageGrid& b) {
  detail::check_same_size(a, b);
  const int w = a.width();
  const int h = a.height();
  Grid<double> out(w, h, 0.0);
  std::array<double, 9> xs{}, ys{};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto idx = detail::window3x3(x, y, w, h);
      double acc = 0.0;
      for (int c = 0; c < a.channels(); ++c) {
        detail::gather(a, idx, c, xs);
        detail::gather(b, idx, c, ys);
        acc += detail::ssim_terms(xs, ys).value();
      }
      out(x, y) = acc / a.channels();
    }
  }
  return out;
}

struct PhotometricError {
  Grid<double> pe;
  Mask valid;
  std::size_t count = 0;
};

/// pe = α/2 (1 - SSIM) + (1 - α) |I_i - I_warp|, averaged over channels. A pixel is scored only
/// when its whole (clamped) 3x3 window is valid.
inline PhotometricError photometric_error(const ImageGrid& target, const ImageGrid& warped, const Mask& valid) {
  detail::check_same_size(target, warped);
  if (!valid.same_shape(target.width(), target.height())) {
    throw Error(ErrorCode::resolution_mismatch, "mask does not match image");
  }
  auto eval = detail::photometric_eval(target, warped, valid, false);
  if (eval.count == 0) throw Error(ErrorCode::no_valid_pixels, "photometric error has no valid pixels");
  return {std::move(eval.pe), std::move(eval.valid), eval.count};
}

/// L_p = Σ_j mean_p pe(I_i, I_{j→i}); gradient w.r.t. log target depth.
/// With `visibility_ratio` v > 0, a pixel is dropped for source j unless the source depth is valid
/// around its reprojection and the ratio source depth / reprojected depth lies in [v, 1/v].
inline TermResult loss_photometric(const ImageGrid& target_image, const DepthMap& target_depth,
                                   const SE3Pose& target_pose, std::span<const SourceView> sources,
                                   const CameraIntrinsics& k, double visibility_ratio = 0.0) {
  const int w = k.width;
  const int h = k.height;
  TermResult out{0.0, 0, DepthGradient(w, h, 0.0), {}, {}};
  std::size_t missing = 0;
  for (const auto& src : sources) {
    if (src.image == nullptr) {
      out.skipped_sources.push_back(src.frame_id);
      ++missing;
      continue;
    }
    const SE3Pose t = relative_pose(target_pose, src.pose);
    WarpResult warp = warp_source_to_target(*src.image, target_depth, t, k);
    if (visibility_ratio > 0.0 && src.depth != nullptr) {
      const ConsistencyRatio vis = consistency_ratio(target_depth, *src.depth, t, k);
      for (std::size_t i = 0; i < warp.valid.size(); ++i) {
        if (!warp.valid[i]) continue;
        if (!vis.valid[i] || vis.ratio[i] < visibility_ratio || vis.ratio[i] > 1.0 / visibility_ratio) {
          warp.valid[i] = 0;
        }
      }
    }
    const auto eval = detail::photometric_eval(target_image, warp.image, warp.valid, true);
    if (eval.count == 0) {
      out.skipped_sources.push_back(src.frame_id);
      continue;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < eval.pe.size(); ++i) {
      if (eval.valid[i]) sum += eval.pe[i];
    }
    const double inv_n = 1.0 / static_cast<double>(eval.count);
    out.value += sum * inv_n;
    out.count += eval.count;
    const int ch = target_image.channels();
    for (std::size_t i = 0; i < out.gradient.size(); ++i) {
      if (!warp.valid[i]) continue;
      double g = 0.0;
      for (int c = 0; c < ch; ++c) g += eval.d_sum_d_warp[i * ch + c] * warp.jacobian[i * ch + c];
      out.gradient[i] += g * inv_n * target_depth.values[i];
    }
  }
  if (!sources.empty() && missing == sources.size()) {
    throw Error(ErrorCode::missing_sources, "every photometric source frame is missing");
  }
  return out;
}

/// Edge-aware smoothness of the mean-normalized inverse depth, forward differences.
inline TermResult loss_smoothness(const DepthMap& depth, const ImageGrid& image) {
  const int w = depth.width();
  const int h = depth.height();
  if (image.width() != w || image.height() != h) {
    throw Error(ErrorCode::resolution_mismatch, "image and depth differ in size");
  }
  TermResult out{0.0, 0, DepthGradient(w, h, 0.0), {}, {}};
  Grid<double> inv(w, h, 0.0);
  double sum_inv = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    if (!depth.valid[i]) continue;
    inv[i] = 1.0 / depth.values[i];
    sum_inv += inv[i];
    ++n;
  }
  if (n == 0) throw Error(ErrorCode::no_valid_pixels, "smoothness needs at least one valid depth");
  const double mean_inv = sum_inv / static_cast<double>(n);

  const int ch = image.channels();
  auto edge_weight = [&](int x0, int y0, int x1, int y1) {
    double g = 0.0;
    for (int c = 0; c < ch; ++c) g += std::abs(image.at(x1, y1, c) - image.at(x0, y0, c));
    return std::exp(-g / ch);
  };

  // dL/d(normalized inverse depth), accumulated per pixel.
  Grid<double> d_norm(w, h, 0.0);
  for (int axis = 0; axis < 2; ++axis) {
    const int dx = axis == 0 ? 1 : 0;
    const int dy = axis == 0 ? 0 : 1;
    double sum = 0.0;
    std::size_t pairs = 0;
    for (int y = 0; y + dy < h; ++y) {
      for (int x = 0; x + dx < w; ++x) {
        if (depth.is_valid(x, y) && depth.is_valid(x + dx, y + dy)) ++pairs;
      }
    }
    if (pairs == 0) continue;
    const double inv_pairs = 1.0 / static_cast<double>(pairs);
    for (int y = 0; y + dy < h; ++y) {
      for (int x = 0; x + dx < w; ++x) {
        if (!depth.is_valid(x, y) || !depth.is_valid(x + dx, y + dy)) continue;
        const double diff = (inv(x + dx, y + dy) - inv(x, y)) / mean_inv;
        const double wgt = edge_weight(x, y, x + dx, y + dy);
        sum += std::abs(diff) * wgt;
        const double g = detail::sign(diff) * wgt * inv_pairs;
        d_norm(x + dx, y + dy) += g;
        d_norm(x, y) -= g;
      }
    }
    out.value += sum * inv_pairs;
    out.count += pairs;
  }
  // Chain through d* = d / mean(d) and d = exp(-log D).
  double coupling = 0.0;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    if (depth.valid[i]) coupling += d_norm[i] * inv[i];
  }
  coupling /= static_cast<double>(n) * mean_inv * mean_inv;
  for (std::size_t i = 0; i < inv.size(); ++i) {
    if (!depth.valid[i]) continue;
    const double d_inv = d_norm[i] / mean_inv - coupling;
    out.gradient[i] = -d_inv * inv[i];
  }
  return out;
}

/// Mean |D(n) - D_slam(n)| over observations, nearest-pixel lookup.
inline TermResult loss_mappoint(const DepthMap& depth, std::span<const MapPointObservation> observations) {
  const int w = depth.width();
  const int h = depth.height();
  TermResult out{0.0, 0, DepthGradient(w, h, 0.0), {}, {}};
  std::vector<std::pair<std::size_t, double>> used;
  used.reserve(observations.size());
  for (const auto& obs : observations) {
    const long x = std::lround(obs.pixel.x());
    const long y = std::lround(obs.pixel.y());
    if (x < 0 || y < 0 || x >= w || y >= h) continue;
    if (!depth.is_valid(static_cast<int>(x), static_cast<int>(y)) || !(obs.slam_depth > 0.0)) continue;
    used.emplace_back(depth.values.index(static_cast<int>(x), static_cast<int>(y)), obs.slam_depth);
  }
  if (used.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(used.size());
  for (const auto& [i, slam] : used) {
    const double diff = depth.values[i] - slam;
    out.value += std::abs(diff) * inv_n;
    out.gradient[i] += detail::sign(diff) * inv_n * depth.values[i];
  }
  out.count = used.size();
  return out;
}

/// Per-pixel |1 - r_j| composed over sources (min or mean), averaged over pixels with a candidate.
/// Source depths are constants; ties in the min go to the earliest source.
inline TermResult loss_consistency(const DepthMap& target_depth, const SE3Pose& target_pose,
                                   std::span<const SourceView> sources, const CameraIntrinsics& k,
                                   ConsistencyComposition composition = ConsistencyComposition::minimum) {
  const int w = k.width;
  const int h = k.height;
  TermResult out{0.0, 0, DepthGradient(w, h, 0.0), {}, {}};
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<double> best_grad(n, 0.0);
  std::vector<double> sum(n, 0.0);
  std::vector<double> sum_grad(n, 0.0);
  std::vector<int> candidates(n, 0);
  for (const auto& src : sources) {
    if (src.depth == nullptr) {
      out.skipped_sources.push_back(src.frame_id);
      continue;
    }
    const auto cr = consistency_ratio(target_depth, *src.depth, relative_pose(target_pose, src.pose), k);
    for (std::size_t i = 0; i < n; ++i) {
      if (!cr.valid[i]) continue;
      const double c = std::abs(1.0 - cr.ratio[i]);
      const double g = -detail::sign(1.0 - cr.ratio[i]) * cr.d_ratio_d_depth[i] * target_depth.values[i];
      ++candidates[i];
      sum[i] += c;
      sum_grad[i] += g;
      if (c < best[i]) {
        best[i] = c;
        best_grad[i] = g;
      }
    }
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += candidates[i] > 0;
  out.per_pixel = Grid<double>(w, h, std::numeric_limits<double>::quiet_NaN());
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) {
    if (candidates[i] == 0) continue;
    if (composition == ConsistencyComposition::minimum) {
      out.per_pixel[i] = best[i];
      out.gradient[i] = best_grad[i] * inv;
    } else {
      out.per_pixel[i] = sum[i] / candidates[i];
      out.gradient[i] = sum_grad[i] / candidates[i] * inv;
    }
    out.value += out.per_pixel[i] * inv;
  }
  out.count = count;
  return out;
}

/// Everything one refinement step needs about the target frame.
struct LossInput {
  const ImageGrid* image = nullptr;
  const DepthMap* depth = nullptr;
  SE3Pose pose;
  std::span<const SourceView> sources;
  std::span<const MapPointObservation> observations;
  const CameraIntrinsics* intrinsics = nullptr;
  ConsistencyComposition composition = ConsistencyComposition::minimum;
  /// Photometric occlusion test threshold; 0 disables it.
  double visibility_ratio = 0.0;
};

struct TotalLoss {
  LossBreakdown breakdown;
  DepthGradient gradient;
};

/// L = L_p + λs L_s + λm L_m + λc L_c, with the identically weighted gradient.
inline TotalLoss total_loss(const LossInput& in, const LossWeights& weights) {
  weights.validate();
  if (in.image == nullptr || in.depth == nullptr || in.intrinsics == nullptr) {
    throw Error(ErrorCode::invalid_argument, "loss input is incomplete");
  }
  const auto& k = *in.intrinsics;
  const TermResult p = loss_photometric(*in.image, *in.depth, in.pose, in.sources, k, in.visibility_ratio);
  const TermResult s = loss_smoothness(*in.depth, *in.image);
  const TermResult m = loss_mappoint(*in.depth, in.observations);
  const TermResult c = loss_consistency(*in.depth, in.pose, in.sources, k, in.composition);
  TotalLoss out;
  auto& b = out.breakdown;
  b.l_p = p.value;
  b.l_s = s.value;
  b.l_m = m.value;
  b.l_c = c.value;
  b.count_p = p.count;
  b.count_s = s.count;
  b.count_m = m.count;
  b.count_c = c.count;
  b.total = b.l_p + weights.lambda_s * b.l_s + weights.lambda_m * b.l_m + weights.lambda_c * b.l_c;
  out.gradient = DepthGradient(k.width, k.height, 0.0);
  for (std::size_t i = 0; i < out.gradient.size(); ++i) {
    out.gradient[i] = p.gradient[i] + weights.lambda_s * s.gradient[i] + weights.lambda_m * m.gradient[i] +
                      weights.lambda_c * c.gradient[i];
  }
  return out;
}

}  // namespace georefine
