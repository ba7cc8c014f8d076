#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "georefine/error.hpp"
#include "georefine/geometry.hpp"
#include "georefine/image.hpp"
#include "georefine/io.hpp"

namespace georefine::metrics {

inline constexpr double kMinEvalDepth = 0.1;
inline constexpr double kMaxEvalDepth = 80.0;

enum class DepthAlignment { none, per_frame_median };

struct DepthMetrics {
  double mae = 0.0;
  double abs_rel = 0.0;
  double rmse = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double sq_rel = 0.0;
  double rmse_log = 0.0;
  std::size_t num_pixels = 0;
  double scale = 1.0;  // factor applied to the prediction
};

inline double median(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorCode::insufficient_data, "median of an empty set");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

/// Eigen-protocol depth errors over pixels valid in both maps with gt inside [0.1, 80] m.
inline DepthMetrics depth_metrics(const DepthMap& pred, const DepthMap& gt,
                                  DepthAlignment align = DepthAlignment::none) {
  if (pred.width() != gt.width() || pred.height() != gt.height()) {
    throw Error(ErrorCode::resolution_mismatch, "prediction and ground truth differ in size");
  }
  std::vector<double> p, g;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    if (!pred.valid[i] || !gt.valid[i]) continue;
    const double d = gt.values[i];
    if (d < kMinEvalDepth || d > kMaxEvalDepth) continue;
    p.push_back(pred.values[i]);
    g.push_back(d);
  }
  if (p.empty()) throw Error(ErrorCode::no_valid_pixels, "no co-valid pixels to evaluate");
  DepthMetrics m;
  if (align == DepthAlignment::per_frame_median) m.scale = median(g) / median(p);
  const double n = static_cast<double>(p.size());
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i] * m.scale;
    const double err = pi - g[i];
    m.mae += std::abs(err);
    m.abs_rel += std::abs(err) / g[i];
    m.sq_rel += err * err / g[i];
    m.rmse += err * err;
    const double le = std::log(pi) - std::log(g[i]);
    m.rmse_log += le * le;
    const double ratio = std::max(pi / g[i], g[i] / pi);
    d1 += ratio < 1.25;
    d2 += ratio < 1.25 * 1.25;
    d3 += ratio < 1.25 * 1.25 * 1.25;
  }
  m.mae /= n;
  m.abs_rel /= n;
  m.sq_rel /= n;
  m.rmse = std::sqrt(m.rmse / n);
  m.rmse_log = std::sqrt(m.rmse_log / n);
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  m.num_pixels = p.size();
  return m;
}

inline DepthMetrics mean_metrics(const std::vector<DepthMetrics>& rows) {
  if (rows.empty()) throw Error(ErrorCode::insufficient_data, "no metric rows to average");
  DepthMetrics m;
  for (const auto& r : rows) {
    m.mae += r.mae;
    m.abs_rel += r.abs_rel;
    m.rmse += r.rmse;
    m.delta1 += r.delta1;
    m.delta2 += r.delta2;
    m.delta3 += r.delta3;
    m.sq_rel += r.sq_rel;
    m.rmse_log += r.rmse_log;
    m.num_pixels += r.num_pixels;
  }
  const double n = static_cast<double>(rows.size());
  for (double* v : {&m.mae, &m.abs_rel, &m.rmse, &m.delta1, &m.delta2, &m.delta3, &m.sq_rel, &m.rmse_log}) *v /= n;
  return m;
}

/// "frame_id,mae,abs_rel,rmse,d1,d2,d3" rows plus a "mean" row; `extended` appends sq_rel and rmse_log.
inline std::string depth_csv(const std::map<int, DepthMetrics>& rows, bool extended = false) {
  std::string out = "frame_id,mae,abs_rel,rmse,d1,d2,d3";
  if (extended) out += ",sq_rel,rmse_log";
  out += "\n";
  auto line = [&](const std::string& id, const DepthMetrics& m) {
    out += id;
    for (double v : {m.mae, m.abs_rel, m.rmse, m.delta1, m.delta2, m.delta3}) out += "," + io::fixed(v, 6);
    if (extended) out += "," + io::fixed(m.sq_rel, 6) + "," + io::fixed(m.rmse_log, 6);
    out += "\n";
  };
  std::vector<DepthMetrics> all;
  for (const auto& [id, m] : rows) {
    line(std::to_string(id), m);
    all.push_back(m);
  }
  if (!all.empty()) line("mean", mean_metrics(all));
  return out;
}

struct PoseMetrics {
  double ate_rmse = 0.0;
  double rpe = 0.0;
  std::size_t num_poses = 0;
  double scale = 1.0;  // similarity scale applied to the estimate
};

namespace detail {

inline constexpr double kStampTolerance = 1e-6;

/// Pairs of (estimate, ground truth) poses with matching timestamps, in time order.
inline std::vector<std::pair<io::StampedPose, io::StampedPose>> associate(const std::vector<io::StampedPose>& est,
                                                                           const std::vector<io::StampedPose>& gt) {
  std::vector<std::pair<io::StampedPose, io::StampedPose>> out;
  for (const auto& e : est) {
    const auto it = std::find_if(gt.begin(), gt.end(), [&](const io::StampedPose& g) {
      return std::abs(g.timestamp - e.timestamp) < kStampTolerance;
    });
    if (it != gt.end()) out.emplace_back(e, *it);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first.timestamp < b.first.timestamp; });
  return out;
}

}  // namespace detail

/// RMSE of camera-center residuals, optionally after a closed-form similarity alignment.
inline PoseMetrics ate_rmse(const std::vector<io::StampedPose>& est, const std::vector<io::StampedPose>& gt,
                            bool with_sim3_alignment) {
  const auto pairs = detail::associate(est, gt);
  if (pairs.empty() || (with_sim3_alignment && pairs.size() < 3)) {
    throw Error(ErrorCode::insufficient_data, "ATE needs " + std::string(with_sim3_alignment ? "3" : "1") +
                                                  " matched poses, got " + std::to_string(pairs.size()));
  }
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd a(3, n), b(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.col(i) = pairs[i].first.pose.center();
    b.col(i) = pairs[i].second.pose.center();
  }
  PoseMetrics m;
  m.num_poses = pairs.size();
  Eigen::Matrix4d s = Eigen::Matrix4d::Identity();
  if (with_sim3_alignment) {
    const double spread = (a.colwise() - a.rowwise().mean()).squaredNorm();
    if (spread > 1e-18) {
      s = Eigen::umeyama(a, b, true);
      m.scale = s.block<3, 1>(0, 0).norm();
    } else {
      // All estimated centers coincide: only the offset is observable.
      s.block<3, 1>(0, 3) = b.rowwise().mean() - a.rowwise().mean();
    }
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 aligned = s.block<3, 3>(0, 0) * a.col(i) + s.block<3, 1>(0, 3);
    sum += (aligned - b.col(i)).squaredNorm();
  }
  m.ate_rmse = std::sqrt(sum / static_cast<double>(n));
  return m;
}

/// RMSE of relative-translation errors over `delta_t` windows, per second.
inline PoseMetrics rpe(const std::vector<io::StampedPose>& est, const std::vector<io::StampedPose>& gt,
                       double delta_t) {
  if (!(delta_t > 0.0)) throw Error(ErrorCode::invalid_argument, "RPE window must be positive");
  const auto pairs = detail::associate(est, gt);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const double dt = pairs[j].first.timestamp - pairs[i].first.timestamp;
      if (std::abs(dt - delta_t) > detail::kStampTolerance) continue;
      // Relative motions expressed as world-from-camera steps.
      const SE3Pose rel_est = pairs[i].first.pose * pairs[j].first.pose.inverse();
      const SE3Pose rel_gt = pairs[i].second.pose * pairs[j].second.pose.inverse();
      const SE3Pose err = rel_gt.inverse() * rel_est;
      sum += err.translation().squaredNorm();
      ++count;
    }
  }
  if (count == 0) throw Error(ErrorCode::insufficient_data, "trajectory does not span the RPE window");
  PoseMetrics m;
  m.rpe = std::sqrt(sum / static_cast<double>(count)) / delta_t;
  m.num_poses = pairs.size();
  return m;
}

}  // namespace georefine::metrics
