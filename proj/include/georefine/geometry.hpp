#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "georefine/error.hpp"
#include "georefine/image.hpp"

namespace georefine {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera. Pixel centers sit at integer coordinates.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error(ErrorCode::invalid_argument, "focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      throw Error(ErrorCode::invalid_argument, "principal point outside the image");
    }
  }

  bool in_bounds(const Vec2& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1;
  }

  /// Normalized viewing ray through pixel (u, v) with unit z.
  Vec3 ray(double u, double v) const { return Vec3((u - cx) / fx, (v - cy) / fy, 1.0); }

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Rigid transform x -> R x + t. Camera poses are stored camera-from-world.
class SE3Pose {
 public:
  SE3Pose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}
  SE3Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
      : rotation_(rotation.normalized()), translation_(translation) {}
  SE3Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(Eigen::Quaterniond(rotation).normalized()), translation_(translation) {}

  static SE3Pose identity() { return {}; }
  static SE3Pose from_translation(const Vec3& t) { return {Eigen::Quaterniond::Identity(), t}; }

  const Eigen::Quaterniond& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }
  Mat3 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  void set_translation(const Vec3& t) { translation_ = t; }

  Vec3 transform(const Vec3& x) const { return rotation_ * x + translation_; }
  Vec3 operator*(const Vec3& x) const { return transform(x); }

  /// (this ∘ other)(x) = this(other(x)); quaternion renormalized after composition.
  SE3Pose operator*(const SE3Pose& other) const {
    return {(rotation_ * other.rotation_).normalized(), rotation_ * other.translation_ + translation_};
  }

  SE3Pose inverse() const {
    const Eigen::Quaterniond inv = rotation_.conjugate();
    return {inv, -(inv * translation_)};
  }

  /// World position of the camera center for a camera-from-world pose.
  Vec3 center() const { return -(rotation_.conjugate() * translation_); }

  double rotation_angle() const {
    const double w = std::min(1.0, std::abs(rotation_.w()));
    return 2.0 * std::acos(w);
  }

  bool is_approx(const SE3Pose& other, double tol) const {
    return rotation_.angularDistance(other.rotation_) <= tol &&
           (translation_ - other.translation_).norm() <= tol;
  }

 private:
  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Exponential map of a twist (rho = translation part, phi = rotation part).
inline SE3Pose se3_exp(const Eigen::Matrix<double, 6, 1>& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 phi = xi.tail<3>();
  const double theta = phi.norm();
  const Mat3 w = skew(phi);
  Mat3 v;
  Eigen::Quaterniond q;
  if (theta < 1e-8) {
    v = Mat3::Identity() + 0.5 * w;
    q = Eigen::Quaterniond(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
  } else {
    const double t2 = theta * theta;
    v = Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * w + (theta - std::sin(theta)) / (t2 * theta) * w * w;
    q = Eigen::Quaterniond(Eigen::AngleAxisd(theta, phi / theta));
  }
  return {q.normalized(), v * rho};
}

inline Vec2 project(const CameraIntrinsics& k, const Vec3& x) {
  if (!(x.z() > 0.0)) throw Error(ErrorCode::behind_camera, "point has non-positive depth");
  return {k.fx * x.x() / x.z() + k.cx, k.fy * x.y() / x.z() + k.cy};
}

inline Vec3 backproject(const CameraIntrinsics& k, const Vec2& p, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorCode::invalid_depth, "depth must be positive and finite");
  }
  return k.ray(p.x(), p.y()) * depth;
}

/// Transform taking camera-i coordinates to camera-j coordinates (pose_j ∘ pose_i⁻¹).
inline SE3Pose relative_pose(const SE3Pose& pose_i, const SE3Pose& pose_j) {
  return pose_j * pose_i.inverse();
}

/// Synthesized source image in the target view.
struct WarpResult {
  ImageGrid image;
  Mask valid;
  /// d(sampled intensity)/d(target depth), interleaved like `image` (1/meter). Zero where invalid.
  std::vector<double> jacobian;
  /// Sampling location in the source image, kept for diagnostics and occlusion reasoning.
  Grid<Vec2> source_pixel;

  double jacobian_at(int x, int y, int c = 0) const {
    return jacobian[(static_cast<std::size_t>(y) * image.width() + x) * image.channels() + c];
  }
};

namespace detail {

inline void check_resolution(const CameraIntrinsics& k, int width, int height, const char* what) {
  if (width != k.width || height != k.height) {
    throw Error(ErrorCode::resolution_mismatch, std::string(what) + " does not match intrinsics");
  }
}

/// Target pixel -> source frame point, its pixel, and their derivatives w.r.t. the target depth.
struct Reprojection {
  Vec3 point;      // in the source camera frame
  Vec3 d_point;    // d point / d depth
  Vec2 pixel;
  Vec2 d_pixel;    // d pixel / d depth
};

inline bool reproject(const CameraIntrinsics& k, const Mat3& r, const Vec3& t, int x, int y, double depth,
                      Reprojection& out) {
  out.d_point = r * k.ray(x, y);
  out.point = out.d_point * depth + t;
  const double z = out.point.z();
  if (!(z > 0.0)) return false;
  out.pixel = Vec2(k.fx * out.point.x() / z + k.cx, k.fy * out.point.y() / z + k.cy);
  // Written in terms of t so that a pure rotation gives an exactly zero derivative.
  const double inv_z2 = 1.0 / (z * z);
  const Vec3& dp = out.d_point;
  out.d_pixel = Vec2(k.fx * (dp.x() * t.z() - t.x() * dp.z()) * inv_z2, k.fy * (dp.y() * t.z() - t.y() * dp.z()) * inv_z2);
  return true;
}

}  // namespace detail

/// Samples `source` at the reprojection of every valid target pixel through `target_to_source`.
inline WarpResult warp_source_to_target(const ImageGrid& source, const DepthMap& target_depth,
                                        const SE3Pose& target_to_source, const CameraIntrinsics& k) {
  detail::check_resolution(k, source.width(), source.height(), "source image");
  detail::check_resolution(k, target_depth.width(), target_depth.height(), "target depth");
  const int w = k.width;
  const int h = k.height;
  const int channels = source.channels();
  WarpResult out{ImageGrid(w, h, channels), Mask(w, h, 0),
                 std::vector<double>(static_cast<std::size_t>(w) * h * channels, 0.0),
                 Grid<Vec2>(w, h, Vec2::Zero())};
  const Mat3 r = target_to_source.rotation_matrix();
  const Vec3& t = target_to_source.translation();
  detail::Reprojection rp;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!target_depth.is_valid(x, y)) continue;
      if (!detail::reproject(k, r, t, x, y, target_depth.values(x, y), rp)) continue;
      const auto footprint = Bilinear::at(rp.pixel.x(), rp.pixel.y(), w, h);
      if (!footprint) continue;
      out.valid(x, y) = 1;
      out.source_pixel(x, y) = rp.pixel;
      for (int c = 0; c < channels; ++c) {
        double value, du, dv;
        footprint->sample([&](int sx, int sy) { return source.at(sx, sy, c); }, value, du, dv);
        out.image.at(x, y, c) = value;
        out.jacobian[(static_cast<std::size_t>(y) * w + x) * channels + c] = du * rp.d_pixel.x() + dv * rp.d_pixel.y();
      }
    }
  }
  return out;
}

/// Per-pixel ratio r = d̂_j / ẑ_j between the source depth sampled at the reprojection and the
/// transformed target point's depth. |1 - r| equals |1 - D̃_i / D_i| for the warped depth D̃_i = D_i r.
struct ConsistencyRatio {
  Grid<double> ratio;
  Mask valid;
  Grid<double> d_ratio_d_depth;  // w.r.t. the target depth, source depth held constant
};

inline ConsistencyRatio consistency_ratio(const DepthMap& target_depth, const DepthMap& source_depth,
                                          const SE3Pose& target_to_source, const CameraIntrinsics& k) {
  detail::check_resolution(k, target_depth.width(), target_depth.height(), "target depth");
  detail::check_resolution(k, source_depth.width(), source_depth.height(), "source depth");
  const int w = k.width;
  const int h = k.height;
  ConsistencyRatio out{Grid<double>(w, h, 0.0), Mask(w, h, 0), Grid<double>(w, h, 0.0)};
  const Mat3 r = target_to_source.rotation_matrix();
  const Vec3& t = target_to_source.translation();
  detail::Reprojection rp;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!target_depth.is_valid(x, y)) continue;
      if (!detail::reproject(k, r, t, x, y, target_depth.values(x, y), rp)) continue;
      const auto footprint = Bilinear::at(rp.pixel.x(), rp.pixel.y(), w, h);
      if (!footprint || !footprint->footprint_valid(source_depth.valid)) continue;
      double sampled, du, dv;
      footprint->sample([&](int sx, int sy) { return source_depth.values(sx, sy); }, sampled, du, dv);
      const double z = rp.point.z();
      const double d_sampled = du * rp.d_pixel.x() + dv * rp.d_pixel.y();
      out.valid(x, y) = 1;
      out.ratio(x, y) = sampled / z;
      out.d_ratio_d_depth(x, y) = (d_sampled * z - sampled * rp.d_point.z()) / (z * z);
    }
  }
  return out;
}

}  // namespace georefine
