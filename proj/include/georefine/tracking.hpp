#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "georefine/geometry.hpp"
#include "georefine/image.hpp"
#include "georefine/losses.hpp"
#include "georefine/synthworld.hpp"

namespace georefine::tracking {

using synth::FlowField;

inline constexpr int kPatchRadius = 3;
inline constexpr int kPatchSize = 2 * kPatchRadius + 1;
using Descriptor = std::array<double, kPatchSize * kPatchSize>;

/// Tracked image point with a 7x7 intensity patch. `detected` is false for features created by
/// flow continuation; those only carry a track forward and never enter pose or triangulation.
struct Feature {
  Vec2 pixel = Vec2::Zero();
  Descriptor descriptor{};
  int track_id = -1;
  bool detected = true;
};

struct Match {
  Feature feature_prev;
  Vec2 pixel_curr = Vec2::Zero();
  double descriptor_residual = 0.0;
  bool created = false;  // no candidate found, a new feature was spawned at the prediction
  std::optional<double> depth_prev;
};

struct MapPoint {
  int id = -1;
  Vec3 position = Vec3::Zero();
  int observation_count = 0;
  double mean_reprojection_error = 0.0;
};

struct ScaleEstimate {
  double s = 1.0;
  double residual_rms = 0.0;
  std::size_t num_points = 0;
};

enum class TrackStatus { ok, lost };

struct TrackedFrame {
  int frame_id = 0;
  double timestamp = 0.0;
  SE3Pose pose;
  int inlier_count = 0;
  TrackStatus status = TrackStatus::lost;
  int iterations = 0;
  double cost = 0.0;
  std::vector<double> cost_trace;  // objective after every accepted iteration
  std::optional<double> applied_scale;  // set when this frame rescaled the map and trajectory
};

// ---------------------------------------------------------------------------------------------
// Descriptors and flow sampling

inline bool patch_in_bounds(const Vec2& p, int width, int height) {
  return p.x() >= kPatchRadius && p.y() >= kPatchRadius && p.x() <= width - 1 - kPatchRadius &&
         p.y() <= height - 1 - kPatchRadius;
}

inline std::optional<Descriptor> extract_descriptor(const ImageGrid& image, const Vec2& p) {
  if (!patch_in_bounds(p, image.width(), image.height())) return std::nullopt;
  Descriptor d{};
  int k = 0;
  for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
    for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
      const auto b = Bilinear::at(p.x() + dx, p.y() + dy, image.width(), image.height());
      double acc = 0.0;
      for (int c = 0; c < image.channels(); ++c) {
        acc += b->sample([&](int x, int y) { return image.at(x, y, c); });
      }
      d[k++] = acc / image.channels();
    }
  }
  return d;
}

inline double descriptor_residual(const Descriptor& a, const Descriptor& b) {
  double ssd = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ssd += (a[i] - b[i]) * (a[i] - b[i]);
  return ssd;
}

inline std::optional<Feature> make_feature(const ImageGrid& image, const Vec2& p, int track_id) {
  auto d = extract_descriptor(image, p);
  if (!d) return std::nullopt;
  return Feature{p, *d, track_id, true};
}

/// Bilinear flow lookup; nullopt if any footprint corner is invalid or outside the grid.
inline std::optional<Vec2> sample_flow(const Grid<Vec2>& flow, const Mask& valid, const Vec2& p) {
  const auto b = Bilinear::at(p.x(), p.y(), flow.width(), flow.height());
  if (!b || !b->footprint_valid(valid)) return std::nullopt;
  return Vec2(b->sample([&](int x, int y) { return flow(x, y).x(); }),
              b->sample([&](int x, int y) { return flow(x, y).y(); }));
}

/// ‖F_fwd(p) + F_bwd(p + F_fwd(p))‖, or nullopt where either lookup is invalid.
inline std::optional<double> forward_backward_error(const FlowField& flow, const Vec2& p) {
  const auto fwd = sample_flow(flow.forward, flow.forward_valid, p);
  if (!fwd) return std::nullopt;
  const auto bwd = sample_flow(flow.backward, flow.backward_valid, p + *fwd);
  if (!bwd) return std::nullopt;
  return (*fwd + *bwd).norm();
}

struct FlowMatchParams {
  double radius = 1.0;        // px
  double fb_threshold = 1.0;  // px
};

/// Propagates `features_prev` by the forward flow and picks, among the current detections within
/// `radius` of the prediction, the one with the smallest SSD residual. Without a candidate a new
/// feature is spawned at the prediction with the previous descriptor. Matches whose
/// forward-backward error exceeds the threshold are dropped. Each detection is used at most once.
inline std::vector<Match> flow_match(std::span<const Feature> features_prev, const FlowField& flow,
                                     const ImageGrid& image_curr, std::span<const Vec2> detections,
                                     const FlowMatchParams& params = {}) {
  std::vector<Match> matches;
  if (features_prev.empty()) return matches;
  std::vector<std::optional<Descriptor>> det_desc(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) det_desc[i] = extract_descriptor(image_curr, detections[i]);

  struct Claim {
    std::size_t match;
    double residual;
  };
  std::vector<std::optional<Claim>> claimed(detections.size());
  std::vector<long> match_detection;
  for (const auto& f : features_prev) {
    const auto fb = forward_backward_error(flow, f.pixel);
    if (!fb || *fb > params.fb_threshold) continue;
    const Vec2 predicted = f.pixel + *sample_flow(flow.forward, flow.forward_valid, f.pixel);
    long best = -1;
    double best_res = 0.0;
    for (std::size_t i = 0; i < detections.size(); ++i) {
      if (!det_desc[i] || (detections[i] - predicted).norm() > params.radius) continue;
      const double r = descriptor_residual(f.descriptor, *det_desc[i]);
      if (best < 0 || r < best_res) {
        best = static_cast<long>(i);
        best_res = r;
      }
    }
    Match m;
    m.feature_prev = f;
    if (best >= 0) {
      m.pixel_curr = detections[best];
      m.descriptor_residual = best_res;
      const auto& c = claimed[best];
      if (c && c->residual <= best_res) continue;
      if (c) match_detection[c->match] = -2;  // displaced by a better match
      claimed[best] = Claim{matches.size(), best_res};
    } else {
      if (!patch_in_bounds(predicted, image_curr.width(), image_curr.height())) continue;
      m.pixel_curr = predicted;
      m.created = true;
    }
    matches.push_back(m);
    match_detection.push_back(best);
  }
  std::vector<Match> out;
  out.reserve(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    if (match_detection[i] != -2) out.push_back(matches[i]);
  }
  return out;
}

/// Keeps the ceil(0.1 N_t) matches with the smallest residual; ties go to raster order of the
/// current pixel.
inline std::vector<Match> subsample_matches(std::span<const Match> matches, std::size_t n_total_features,
                                            double ratio = 0.1) {
  if (n_total_features == 0) throw Error(ErrorCode::invalid_argument, "N_t must be at least 1");
  const auto keep = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n_total_features) - 1e-12));
  std::vector<Match> sorted(matches.begin(), matches.end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const Match& a, const Match& b) {
    if (a.descriptor_residual != b.descriptor_residual) return a.descriptor_residual < b.descriptor_residual;
    if (a.pixel_curr.y() != b.pixel_curr.y()) return a.pixel_curr.y() < b.pixel_curr.y();
    return a.pixel_curr.x() < b.pixel_curr.x();
  });
  if (sorted.size() > keep) sorted.resize(keep);
  return sorted;
}

// ---------------------------------------------------------------------------------------------
// Gauss-Newton pose

struct GaussNewtonOptions {
  double huber_delta = 1.0;     // px
  int max_iterations = 50;
  double min_increment = 1e-10;
  double inlier_threshold = 1.0;  // px
  int min_inliers = 6;
  int max_halvings = 20;
  bool refine_inliers = true;  // re-solve on the final inlier set once
};

namespace detail {

inline double huber(double r, double delta) {
  return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
}

inline double reprojection_cost(std::span<const Vec3> points, std::span<const Vec2> pixels, const SE3Pose& pose,
                                const CameraIntrinsics& k, double delta) {
  constexpr double kBehindPenalty = 1e3;
  double cost = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 p = pose * points[i];
    if (!(p.z() > 0.0)) {
      cost += huber(kBehindPenalty, delta);
      continue;
    }
    const Vec2 r(k.fx * p.x() / p.z() + k.cx - pixels[i].x(), k.fy * p.y() / p.z() + k.cy - pixels[i].y());
    cost += huber(r.norm(), delta);
  }
  return cost;
}

}  // namespace detail

/// Minimizes Σ huber(‖π(T X_n) - u_n‖) over T with left-multiplied twist increments and step
/// halving. `points` live in the reference frame whose transform into the current camera is T.
inline TrackedFrame estimate_pose_gn(std::span<const Vec3> points, std::span<const Vec2> pixels,
                                     const CameraIntrinsics& k, const SE3Pose& init,
                                     const GaussNewtonOptions& opt = {}) {
  if (points.size() != pixels.size()) throw Error(ErrorCode::invalid_argument, "points and pixels differ in count");
  TrackedFrame out;
  out.pose = init;
  if (static_cast<int>(points.size()) < opt.min_inliers) {
    out.status = TrackStatus::lost;
    return out;
  }
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  SE3Pose pose = init;
  double cost = detail::reprojection_cost(points, pixels, pose, k, opt.huber_delta);
  out.cost_trace.push_back(cost);
  for (int it = 0; it < opt.max_iterations; ++it) {
    Mat6 h = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 p = pose * points[i];
      if (!(p.z() > 0.0)) continue;
      const double iz = 1.0 / p.z();
      const Vec2 r(k.fx * p.x() * iz + k.cx - pixels[i].x(), k.fy * p.y() * iz + k.cy - pixels[i].y());
      const double rn = r.norm();
      const double w = rn <= opt.huber_delta ? 1.0 : opt.huber_delta / rn;
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz, 0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = Mat3::Identity();
      dp.rightCols<3>() = -skew(p);
      const Eigen::Matrix<double, 2, 6> j = dproj * dp;
      h.noalias() += w * j.transpose() * j;
      b.noalias() += w * j.transpose() * r;
    }
    const Vec6 xi = h.ldlt().solve(-b);
    if (!xi.allFinite()) break;
    ++out.iterations;
    double scale = 1.0;
    bool accepted = false;
    for (int hv = 0; hv <= opt.max_halvings; ++hv, scale *= 0.5) {
      const SE3Pose candidate = se3_exp(scale * xi) * pose;
      const double c = detail::reprojection_cost(points, pixels, candidate, k, opt.huber_delta);
      if (c <= cost) {
        pose = candidate;
        cost = c;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    out.cost_trace.push_back(cost);
    if ((scale * xi).norm() < opt.min_increment) break;
  }
  if (opt.refine_inliers) {
    std::vector<Vec3> in_pts;
    std::vector<Vec2> in_px;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Vec3 p = pose * points[i];
      if (p.z() > 0.0 && (project(k, p) - pixels[i]).norm() < opt.inlier_threshold) {
        in_pts.push_back(points[i]);
        in_px.push_back(pixels[i]);
      }
    }
    if (in_pts.size() < points.size() && static_cast<int>(in_pts.size()) >= opt.min_inliers) {
      GaussNewtonOptions inner = opt;
      inner.refine_inliers = false;
      const auto polished = estimate_pose_gn(in_pts, in_px, k, pose, inner);
      out.iterations += polished.iterations;
      pose = polished.pose;
      cost = detail::reprojection_cost(points, pixels, pose, k, opt.huber_delta);
    }
  }
  out.pose = pose;
  out.cost = cost;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 p = pose * points[i];
    if (!(p.z() > 0.0)) continue;
    if ((project(k, p) - pixels[i]).norm() < opt.inlier_threshold) ++out.inlier_count;
  }
  out.status = out.inlier_count >= opt.min_inliers ? TrackStatus::ok : TrackStatus::lost;
  return out;
}

/// Pose of the current frame relative to the previous one from matches whose previous-frame depth
/// is either attached to the match or read from `depth_prev`.
inline TrackedFrame estimate_pose_gn(std::span<const Match> matches, const DepthMap& depth_prev,
                                     const CameraIntrinsics& k, const SE3Pose& init,
                                     const GaussNewtonOptions& opt = {}) {
  std::vector<Vec3> points;
  std::vector<Vec2> pixels;
  for (const auto& m : matches) {
    std::optional<double> d = m.depth_prev;
    if (!d) {
      const auto b = Bilinear::at(m.feature_prev.pixel.x(), m.feature_prev.pixel.y(), depth_prev.width(),
                                  depth_prev.height());
      if (b && b->footprint_valid(depth_prev.valid)) d = b->sample([&](int x, int y) { return depth_prev.values(x, y); });
    }
    if (!d || !(*d > 0.0)) continue;
    points.push_back(backproject(k, m.feature_prev.pixel, *d));
    pixels.push_back(m.pixel_curr);
  }
  return estimate_pose_gn(points, pixels, k, init, opt);
}

// ---------------------------------------------------------------------------------------------
// Triangulation and map filtering

struct Observation {
  int frame_id = 0;
  Vec2 pixel = Vec2::Zero();
};

struct TrackObservations {
  int id = -1;
  std::vector<Observation> observations;
};

struct TriangulationOptions {
  int min_obs = 5;
  double max_error = 1.0;          // px
  double min_angle_deg = 0.5;
};

/// Midpoint of the closest points of two world rays, or nullopt for near-parallel rays.
inline std::optional<Vec3> midpoint_triangulate(const Vec3& ca, const Vec3& da, const Vec3& cb, const Vec3& db,
                                                double min_angle_rad) {
  const Vec3 a = da.normalized();
  const Vec3 b = db.normalized();
  const double cosang = std::clamp(a.dot(b), -1.0, 1.0);
  if (std::acos(cosang) < min_angle_rad) return std::nullopt;
  const Vec3 w0 = ca - cb;
  const double bb = a.dot(b);
  const double d = a.dot(w0);
  const double e = b.dot(w0);
  const double denom = 1.0 - bb * bb;
  const double sa = (bb * e - d) / denom;
  const double sb = (e - bb * d) / denom;
  if (!(sa > 0.0) || !(sb > 0.0)) return std::nullopt;
  return 0.5 * ((ca + sa * a) + (cb + sb * b));
}

/// Averages midpoint triangulations over all observation pairs with enough parallax and reports
/// the mean reprojection error over all observations.
inline std::optional<MapPoint> triangulate_track(const TrackObservations& track, const std::map<int, SE3Pose>& poses,
                                                 const CameraIntrinsics& k, double min_angle_deg = 0.5) {
  const double min_angle = min_angle_deg * std::numbers::pi / 180.0;
  std::vector<std::pair<Vec3, Vec3>> rays;  // center, world direction
  std::vector<const Observation*> used;
  for (const auto& o : track.observations) {
    const auto it = poses.find(o.frame_id);
    if (it == poses.end()) continue;
    const SE3Pose& pose = it->second;
    rays.emplace_back(pose.center(), pose.rotation().conjugate() * k.ray(o.pixel.x(), o.pixel.y()));
    used.push_back(&o);
  }
  if (rays.size() < 2) return std::nullopt;
  Vec3 sum = Vec3::Zero();
  int pairs = 0;
  for (std::size_t a = 0; a < rays.size(); ++a) {
    for (std::size_t b = a + 1; b < rays.size(); ++b) {
      if (auto x = midpoint_triangulate(rays[a].first, rays[a].second, rays[b].first, rays[b].second, min_angle)) {
        sum += *x;
        ++pairs;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  MapPoint mp;
  mp.id = track.id;
  mp.position = sum / pairs;
  mp.observation_count = static_cast<int>(used.size());
  double err = 0.0;
  for (const auto* o : used) {
    const Vec3 xc = poses.at(o->frame_id) * mp.position;
    if (!(xc.z() > 0.0)) return std::nullopt;
    err += (project(k, xc) - o->pixel).norm();
  }
  mp.mean_reprojection_error = err / static_cast<double>(used.size());
  return mp;
}

inline bool passes_map_filter(const MapPoint& mp, const TriangulationOptions& opt) {
  return mp.observation_count >= opt.min_obs && mp.mean_reprojection_error <= opt.max_error;
}

/// Triangulates every candidate and drops those seen in fewer than `min_obs` keyframes or with a
/// mean reprojection error above `max_error`.
inline std::vector<MapPoint> triangulate_and_filter(std::span<const TrackObservations> tracks,
                                                    const std::map<int, SE3Pose>& poses, const CameraIntrinsics& k,
                                                    const TriangulationOptions& opt = {}) {
  std::vector<MapPoint> out;
  for (const auto& t : tracks) {
    if (static_cast<int>(t.observations.size()) < opt.min_obs) continue;
    auto mp = triangulate_track(t, poses, k, opt.min_angle_deg);
    if (mp && passes_map_filter(*mp, opt)) out.push_back(*mp);
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Scale

/// argmin_s Σ (d - s d̂)², closed form.
inline ScaleEstimate estimate_scale(std::span<const double> d, std::span<const double> d_hat) {
  if (d.size() != d_hat.size() || d.empty()) {
    throw Error(ErrorCode::invalid_argument, "scale needs equally sized, nonempty depth lists");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    num += d[i] * d_hat[i];
    den += d_hat[i] * d_hat[i];
  }
  if (!(den > 0.0)) throw Error(ErrorCode::degenerate_scale, "SLAM depths are all zero");
  ScaleEstimate e;
  e.s = num / den;
  e.num_points = d.size();
  double ss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) ss += (d[i] - e.s * d_hat[i]) * (d[i] - e.s * d_hat[i]);
  e.residual_rms = std::sqrt(ss / static_cast<double>(d.size()));
  return e;
}

inline double scale_objective(std::span<const double> d, std::span<const double> d_hat, double s) {
  double ss = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) ss += (d[i] - s * d_hat[i]) * (d[i] - s * d_hat[i]);
  return ss;
}

/// Multiplies map positions and pose translations by s. Rotations are untouched.
inline void apply_scale(std::span<MapPoint> points, std::span<SE3Pose> poses, double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::invalid_argument, "scale must be positive");
  for (auto& p : points) p.position *= s;
  for (auto& p : poses) p.set_translation(s * p.translation());
}

// ---------------------------------------------------------------------------------------------
// Two-view initialization helpers

/// Rotation R with b ≈ R a for unit bearing pairs (Kabsch, no translation).
inline Mat3 fit_rotation(std::span<const Vec3> a, std::span<const Vec3> b) {
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < a.size(); ++i) h += b[i].normalized() * a[i].normalized().transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

/// Relative pose (unit translation) from normalized correspondences x_b ~ R x_a + t via the
/// eight-point essential matrix; the decomposition with most points in front of both views wins.
inline std::optional<SE3Pose> essential_pose(std::span<const Vec3> rays_a, std::span<const Vec3> rays_b) {
  const std::size_t n = rays_a.size();
  if (n < 8) return std::nullopt;
  Eigen::MatrixXd a(n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 xa = rays_a[i] / rays_a[i].z();
    const Vec3 xb = rays_b[i] / rays_b[i].z();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a(static_cast<Eigen::Index>(i), 3 * r + c) = xb[r] * xa[c];
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd e = svd.matrixV().col(8);
  Mat3 em;
  em << e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8];
  Eigen::JacobiSVD<Mat3> es(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = es.matrixU();
  Mat3 v = es.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const std::array<Mat3, 2> rs{u * w * v.transpose(), u * w.transpose() * v.transpose()};
  const std::array<Vec3, 2> ts{u.col(2), -u.col(2)};
  std::optional<SE3Pose> best;
  int best_front = -1;
  for (const auto& r : rs) {
    for (const auto& t : ts) {
      const SE3Pose cand(r, t);
      // Camera a at the origin, camera b = cand; count points in front of both.
      const Vec3 cb = cand.center();
      int front = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec3 db = cand.rotation().conjugate() * rays_b[i];
        auto x = midpoint_triangulate(Vec3::Zero(), rays_a[i], cb, db, 0.0);
        if (x && x->z() > 0.0 && (cand * *x).z() > 0.0) ++front;
      }
      if (front > best_front) {
        best_front = front;
        best = cand;
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------------------------
// Sequential tracker

struct TrackerConfig {
  FlowMatchParams flow;
  double n_f_ratio = 0.1;
  TriangulationOptions map_filter;
  GaussNewtonOptions gn;
  bool prgbd = false;
  int scale_align_keyframes = 5;
  double rotation_only_threshold = 1.0;  // px RMS; above it the two views have parallax
  double recovery_radius = 5.0;          // px, projection search after a loss
};

/// One frame as seen by the tracker. `flow` links the previous input frame to this one.
struct TrackerInput {
  int frame_id = 0;
  double timestamp = 0.0;
  const ImageGrid* image = nullptr;
  std::span<const Vec2> detections;
  const FlowField* flow = nullptr;
  const DepthMap* cnn_depth = nullptr;  // monocular scale alignment
  bool inject_lost = false;
};

/// Flow-guided monocular (or pRGBD) front-end. Frames are pushed in order; poses are
/// camera-from-world in the tracker's own world frame (the first frame's camera).
class Tracker {
 public:
  /// Depth of a frame for pRGBD mode (refined if published, otherwise the initial prediction).
  using DepthProvider = std::function<const DepthMap*(int frame_id)>;

  Tracker(CameraIntrinsics k, TrackerConfig cfg) : k_(k), cfg_(std::move(cfg)) {}

  void set_depth_provider(DepthProvider p) { depth_provider_ = std::move(p); }

  TrackedFrame track(const TrackerInput& in) {
    if (in.image == nullptr) throw Error(ErrorCode::invalid_argument, "tracker input has no image");
    TrackedFrame out;
    out.frame_id = in.frame_id;
    out.timestamp = in.timestamp;
    if (in.inject_lost) {
      mark_lost();
      ++lost_frames_;
      return out;
    }
    if (!has_prev_) {
      out = start(in);
    } else if (lost_) {
      out = recover(in);
    } else if (!cfg_.prgbd && !initialized_) {
      out = track_uninitialized(in);
    } else {
      out = track_mapped(in);
    }
    if (out.status == TrackStatus::lost) {
      mark_lost();
      ++lost_frames_;
    }
    return out;
  }

  const std::map<int, SE3Pose>& poses() const noexcept { return poses_; }
  std::map<int, SE3Pose>& poses() noexcept { return poses_; }
  bool initialized() const noexcept { return initialized_ || cfg_.prgbd; }
  int lost_frames() const noexcept { return lost_frames_; }

  /// Map points passing the observation-count and reprojection filter.
  std::vector<MapPoint> map_points() const {
    std::vector<MapPoint> out;
    for (const auto& [id, t] : tracks_) {
      if (t.point && passes_map_filter(*t.point, cfg_.map_filter)) out.push_back(*t.point);
    }
    return out;
  }

  /// Observation history of a track (map point ids are track ids).
  const TrackObservations* track(int id) const {
    const auto it = tracks_.find(id);
    return it == tracks_.end() ? nullptr : &it->second.obs;
  }

  /// Filtered map points observed in `frame_id`, as pixel + SLAM depth pairs.
  std::vector<MapPointObservation> observations_in(int frame_id) const {
    std::vector<MapPointObservation> out;
    const auto pit = poses_.find(frame_id);
    if (pit == poses_.end()) return out;
    for (const auto& [id, t] : tracks_) {
      if (!t.point || !passes_map_filter(*t.point, cfg_.map_filter)) continue;
      for (const auto& o : t.obs.observations) {
        if (o.frame_id != frame_id) continue;
        const double z = (pit->second * t.point->position).z();
        if (z > 0.0) out.push_back({o.pixel, z});
      }
    }
    return out;
  }

 private:
  struct Track {
    TrackObservations obs;
    std::optional<MapPoint> point;
  };

  void mark_lost() {
    lost_ = has_prev_;
    features_.clear();
  }

  int new_track() {
    const int id = next_track_++;
    tracks_[id].obs.id = id;
    return id;
  }

  void observe(int track_id, int frame_id, const Vec2& pixel) {
    tracks_[track_id].obs.observations.push_back({frame_id, pixel});
  }

  TrackedFrame start(const TrackerInput& in) {
    TrackedFrame out;
    out.frame_id = in.frame_id;
    out.timestamp = in.timestamp;
    out.pose = SE3Pose::identity();
    features_.clear();
    for (const auto& p : in.detections) {
      if (auto f = make_feature(*in.image, p, new_track())) {
        observe(f->track_id, in.frame_id, p);
        features_.push_back(*f);
      }
    }
    out.inlier_count = static_cast<int>(features_.size());
    out.status = TrackStatus::ok;
    accept(in, out.pose);
    ref_frame_ = in.frame_id;
    return out;
  }

  void accept(const TrackerInput& in, const SE3Pose& pose) {
    if (has_prev_) velocity_ = relative_pose(prev_pose_, pose);
    poses_[in.frame_id] = pose;
    prev_pose_ = pose;
    prev_frame_ = in.frame_id;
    has_prev_ = true;
    lost_ = false;
  }

  /// Carries matched and created features into the new frame and opens tracks for unmatched
  /// detections.
  void advance_features(const TrackerInput& in, const std::vector<Match>& matches, bool record) {
    std::vector<Feature> next;
    std::vector<char> used(in.detections.size(), 0);
    for (const auto& m : matches) {
      if (m.created) {
        // A spawned feature opens a fresh track; it is not an observation of the old one.
        Feature f = m.feature_prev;
        f.pixel = m.pixel_curr;
        f.detected = false;
        f.track_id = new_track();
        next.push_back(f);
        continue;
      }
      for (std::size_t i = 0; i < in.detections.size(); ++i) {
        if (in.detections[i] == m.pixel_curr) used[i] = 1;
      }
      if (auto f = make_feature(*in.image, m.pixel_curr, m.feature_prev.track_id)) {
        if (record) observe(f->track_id, in.frame_id, m.pixel_curr);
        next.push_back(*f);
      }
    }
    for (std::size_t i = 0; i < in.detections.size(); ++i) {
      if (used[i]) continue;
      if (auto f = make_feature(*in.image, in.detections[i], new_track())) {
        if (record) observe(f->track_id, in.frame_id, in.detections[i]);
        next.push_back(*f);
      }
    }
    features_ = std::move(next);
  }

  static std::vector<Vec2> detection_pixels(const std::vector<Match>& matches) {
    std::vector<Vec2> out;
    for (const auto& m : matches) out.push_back(m.pixel_curr);
    return out;
  }

  /// Monocular, before the map exists: rotation-only tracking until the reference view and the
  /// current view show parallax, then essential-matrix initialization.
  TrackedFrame track_uninitialized(const TrackerInput& in) {
    TrackedFrame out;
    out.frame_id = in.frame_id;
    out.timestamp = in.timestamp;
    if (in.flow == nullptr) return out;
    auto matches = flow_match(features_, *in.flow, *in.image, in.detections, cfg_.flow);
    std::vector<Vec3> a, b;
    for (const auto& m : matches) {
      if (m.created || !m.feature_prev.detected) continue;
      a.push_back(k_.ray(m.feature_prev.pixel.x(), m.feature_prev.pixel.y()));
      b.push_back(k_.ray(m.pixel_curr.x(), m.pixel_curr.y()));
    }
    if (static_cast<int>(a.size()) < cfg_.gn.min_inliers) return out;
    const Mat3 r = fit_rotation(a, b);
    int inliers = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if ((project(k_, r * a[i]) - project(k_, b[i])).norm() < cfg_.gn.inlier_threshold) ++inliers;
    }
    const SE3Pose rot_pose = SE3Pose(r, Vec3::Zero()) * prev_pose_;
    advance_features(in, matches, true);
    out.pose = rot_pose;
    out.inlier_count = inliers;
    out.status = TrackStatus::ok;

    // Parallax against the reference frame.
    std::vector<Vec3> ra, rb;
    std::vector<int> ids;
    for (const auto& [id, t] : tracks_) {
      const Observation* oa = nullptr;
      const Observation* ob = nullptr;
      for (const auto& o : t.obs.observations) {
        if (o.frame_id == ref_frame_) oa = &o;
        if (o.frame_id == in.frame_id) ob = &o;
      }
      if (!oa || !ob) continue;
      ra.push_back(k_.ray(oa->pixel.x(), oa->pixel.y()));
      rb.push_back(k_.ray(ob->pixel.x(), ob->pixel.y()));
      ids.push_back(id);
    }
    if (ra.size() < 8) {
      accept(in, rot_pose);
      ref_frame_ = in.frame_id;
      return out;
    }
    const Mat3 rr = fit_rotation(ra, rb);
    double ss = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) ss += (project(k_, rr * ra[i]) - project(k_, rb[i])).squaredNorm();
    if (std::sqrt(ss / static_cast<double>(ra.size())) <= cfg_.rotation_only_threshold) {
      if (inliers < cfg_.gn.min_inliers) out.status = TrackStatus::lost;
      else accept(in, rot_pose);
      return out;
    }
    const auto rel = essential_pose(ra, rb);
    if (!rel) {
      out.status = TrackStatus::lost;
      return out;
    }
    const SE3Pose ref_pose = poses_.at(ref_frame_);
    out.pose = *rel * ref_pose;
    accept(in, out.pose);
    initialized_ = true;
    retriangulate();
    // Keep only frames that are consistent with the new map: the reference and this one.
    for (auto it = poses_.begin(); it != poses_.end();) {
      if (it->first != ref_frame_ && it->first != in.frame_id && it->first > ref_frame_) it = poses_.erase(it);
      else ++it;
    }
    out.inlier_count = count_inliers(in.frame_id);
    align_scale(in, out);
    out.pose = poses_.at(in.frame_id);
    return out;
  }

  int count_inliers(int frame_id) const {
    int n = 0;
    const SE3Pose& pose = poses_.at(frame_id);
    for (const auto& [id, t] : tracks_) {
      if (!t.point) continue;
      for (const auto& o : t.obs.observations) {
        if (o.frame_id != frame_id) continue;
        const Vec3 xc = pose * t.point->position;
        if (xc.z() > 0.0 && (project(k_, xc) - o.pixel).norm() < cfg_.gn.inlier_threshold) ++n;
      }
    }
    return n;
  }

  void retriangulate() {
    for (auto& [id, t] : tracks_) {
      if (t.obs.observations.size() < 2) continue;
      t.point = triangulate_track(t.obs, poses_, k_, cfg_.map_filter.min_angle_deg);
    }
  }

  /// Eq. (1) alignment against the CNN depth of the current frame, pooled over the alignment
  /// window, applied to the whole map and trajectory.
  void align_scale(const TrackerInput& in, TrackedFrame& out) {
    if (cfg_.prgbd || scale_steps_ >= cfg_.scale_align_keyframes || in.cnn_depth == nullptr) return;
    const SE3Pose& pose = poses_.at(in.frame_id);
    for (const auto& [id, t] : tracks_) {
      if (!t.point || t.point->mean_reprojection_error > cfg_.map_filter.max_error) continue;
      for (const auto& o : t.obs.observations) {
        if (o.frame_id != in.frame_id) continue;
        const double z = (pose * t.point->position).z();
        const auto b = Bilinear::at(o.pixel.x(), o.pixel.y(), in.cnn_depth->width(), in.cnn_depth->height());
        if (!(z > 0.0) || !b || !b->footprint_valid(in.cnn_depth->valid)) continue;
        scale_d_.push_back(b->sample([&](int x, int y) { return in.cnn_depth->values(x, y); }));
        scale_d_hat_.push_back(z);
      }
    }
    if (scale_d_.empty()) return;
    const ScaleEstimate est = estimate_scale(scale_d_, scale_d_hat_);
    if (!(est.s > 0.0)) return;
    std::vector<MapPoint> pts;
    std::vector<int> ids;
    for (auto& [id, t] : tracks_) {
      if (t.point) {
        pts.push_back(*t.point);
        ids.push_back(id);
      }
    }
    std::vector<SE3Pose> ps;
    for (const auto& [f, p] : poses_) ps.push_back(p);
    apply_scale(pts, ps, est.s);
    for (std::size_t i = 0; i < ids.size(); ++i) tracks_[ids[i]].point = pts[i];
    std::size_t i = 0;
    for (auto& [f, p] : poses_) p = ps[i++];
    prev_pose_ = poses_.at(prev_frame_);
    velocity_.set_translation(est.s * velocity_.translation());
    for (auto& v : scale_d_hat_) v *= est.s;
    ++scale_steps_;
    out.applied_scale = est.s;
  }

  std::optional<double> depth_for_match(const Match& m) const {
    if (cfg_.prgbd) {
      const DepthMap* d = depth_provider_ ? depth_provider_(prev_frame_) : nullptr;
      if (d == nullptr) return std::nullopt;
      const auto b = Bilinear::at(m.feature_prev.pixel.x(), m.feature_prev.pixel.y(), d->width(), d->height());
      if (!b || !b->footprint_valid(d->valid)) return std::nullopt;
      return b->sample([&](int x, int y) { return d->values(x, y); });
    }
    const auto it = tracks_.find(m.feature_prev.track_id);
    if (it == tracks_.end() || !it->second.point) return std::nullopt;
    if (it->second.point->mean_reprojection_error > cfg_.map_filter.max_error) return std::nullopt;
    const double z = (prev_pose_ * it->second.point->position).z();
    if (!(z > 0.0)) return std::nullopt;
    return z;
  }

  TrackedFrame track_mapped(const TrackerInput& in) {
    TrackedFrame out;
    out.frame_id = in.frame_id;
    out.timestamp = in.timestamp;
    if (in.flow == nullptr) return out;
    const std::size_t n_total = features_.size();
    auto matches = flow_match(features_, *in.flow, *in.image, in.detections, cfg_.flow);
    std::vector<Match> eligible;
    for (auto& m : matches) {
      if (m.created || !m.feature_prev.detected) continue;
      m.depth_prev = depth_for_match(m);
      if (m.depth_prev) eligible.push_back(m);
    }
    if (static_cast<int>(eligible.size()) < cfg_.gn.min_inliers || n_total == 0) return out;
    auto subset = subsample_matches(eligible, n_total, cfg_.n_f_ratio);
    if (static_cast<int>(subset.size()) < cfg_.gn.min_inliers) {
      subset.assign(eligible.begin(), eligible.begin() + cfg_.gn.min_inliers);
    }
    const DepthMap no_depth;
    const TrackedFrame initial = estimate_pose_gn(subset, no_depth, k_, velocity_, cfg_.gn);
    const SE3Pose init = initial.status == TrackStatus::ok ? initial.pose : velocity_;
    TrackedFrame rel = estimate_pose_gn(eligible, no_depth, k_, init, cfg_.gn);
    out = rel;
    out.frame_id = in.frame_id;
    out.timestamp = in.timestamp;
    if (rel.status != TrackStatus::ok) return out;
    out.pose = rel.pose * prev_pose_;
    advance_features(in, matches, true);
    accept(in, out.pose);
    retriangulate();
    align_scale(in, out);
    out.pose = poses_.at(in.frame_id);
    return out;
  }

  /// Projection search of map points from a constant-velocity prediction.
  TrackedFrame recover(const TrackerInput& in) {
    TrackedFrame out;
    out.frame_id = in.frame_id;
    out.timestamp = in.timestamp;
    const int gap = std::max(1, in.frame_id - prev_frame_);
    SE3Pose predicted = prev_pose_;
    for (int i = 0; i < gap; ++i) predicted = velocity_ * predicted;
    std::vector<Vec3> points;
    std::vector<Vec2> pixels;
    std::vector<std::pair<int, Vec2>> links;
    std::vector<char> used(in.detections.size(), 0);
    for (const auto& [id, t] : tracks_) {
      if (!t.point || t.point->mean_reprojection_error > cfg_.map_filter.max_error) continue;
      const Vec3 xc = predicted * t.point->position;
      if (!(xc.z() > 0.0)) continue;
      const Vec2 proj = project(k_, xc);
      long best = -1;
      double best_d = cfg_.recovery_radius;
      for (std::size_t i = 0; i < in.detections.size(); ++i) {
        const double d = (in.detections[i] - proj).norm();
        if (!used[i] && d <= best_d) {
          best = static_cast<long>(i);
          best_d = d;
        }
      }
      if (best < 0) continue;
      used[best] = 1;
      points.push_back(t.point->position);
      pixels.push_back(in.detections[best]);
      links.emplace_back(id, in.detections[best]);
    }
    TrackedFrame res = estimate_pose_gn(points, pixels, k_, predicted, cfg_.gn);
    out.inlier_count = res.inlier_count;
    out.iterations = res.iterations;
    out.cost = res.cost;
    out.cost_trace = res.cost_trace;
    out.status = res.status;
    if (res.status != TrackStatus::ok) return out;
    out.pose = res.pose;
    std::vector<Feature> next;
    std::vector<char> linked(in.detections.size(), 0);
    for (const auto& [id, px] : links) {
      if ((project(k_, res.pose * tracks_.at(id).point->position) - px).norm() >= cfg_.gn.inlier_threshold) continue;
      if (auto f = make_feature(*in.image, px, id)) {
        observe(id, in.frame_id, px);
        next.push_back(*f);
        for (std::size_t i = 0; i < in.detections.size(); ++i) {
          if (in.detections[i] == px) linked[i] = 1;
        }
      }
    }
    for (std::size_t i = 0; i < in.detections.size(); ++i) {
      if (linked[i]) continue;
      if (auto f = make_feature(*in.image, in.detections[i], new_track())) {
        observe(f->track_id, in.frame_id, in.detections[i]);
        next.push_back(*f);
      }
    }
    features_ = std::move(next);
    // The velocity across the gap is spread evenly so the motion model stays per-frame.
    const SE3Pose span = relative_pose(prev_pose_, out.pose);
    Eigen::AngleAxisd aa(span.rotation());
    const SE3Pose per_frame(Eigen::Quaterniond(Eigen::AngleAxisd(aa.angle() / gap, aa.axis())),
                            span.translation() / gap);
    poses_[in.frame_id] = out.pose;
    prev_pose_ = out.pose;
    prev_frame_ = in.frame_id;
    lost_ = false;
    velocity_ = per_frame;
    retriangulate();
    return out;
  }

  CameraIntrinsics k_;
  TrackerConfig cfg_;
  DepthProvider depth_provider_;
  std::map<int, Track> tracks_;
  std::vector<Feature> features_;
  std::map<int, SE3Pose> poses_;
  SE3Pose prev_pose_;
  SE3Pose velocity_;
  int prev_frame_ = -1;
  int ref_frame_ = -1;
  int next_track_ = 0;
  bool has_prev_ = false;
  bool lost_ = false;
  bool initialized_ = false;
  int scale_steps_ = 0;
  int lost_frames_ = 0;
  std::vector<double> scale_d_;
  std::vector<double> scale_d_hat_;
};

}  // namespace georefine::tracking
