#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "georefine/geometry.hpp"
#include "georefine/image.hpp"
#include "georefine/rng.hpp"

namespace georefine::synth {

enum class PrimitiveKind { textured_plane, sphere, box };

/// Procedural albedo: smooth checker plus gradient noise, evaluated in surface coordinates (m).
struct Texture {
  double base = 0.5;
  double checker_period = 1.0;
  double checker_amplitude = 0.3;
  double noise_scale = 0.5;
  double noise_amplitude = 0.15;
  std::uint64_t seed = 1;
};

/// `pose` is world-from-object. Planes span |x| <= extent.x, |y| <= extent.y at object z = 0 with
/// normal +z; spheres use extent.x as radius; boxes are axis-aligned with half-sizes `extent`.
struct ScenePrimitive {
  PrimitiveKind kind = PrimitiveKind::textured_plane;
  SE3Pose pose;
  Vec3 extent = Vec3::Ones();
  Texture texture;
};

struct Scene {
  std::vector<ScenePrimitive> primitives;
  Vec3 light_direction = Vec3(0.3, -0.5, -1.0).normalized();  // towards the light
  double ambient = 0.35;
  /// Distinctive surface points that the synthetic keypoint detector reports.
  std::vector<Vec3> landmarks;
};

struct Hit {
  double depth = 0.0;  // camera z of the hit
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec2 uv = Vec2::Zero();
  int primitive = -1;
};

namespace detail {

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

inline Vec2 lattice_gradient(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL +
                                                       static_cast<std::uint64_t>(iy)));
  const double angle = static_cast<double>(h >> 11) * (2.0 * std::numbers::pi / 9007199254740992.0);
  return {std::cos(angle), std::sin(angle)};
}

/// 2-D gradient noise, roughly in [-0.7, 0.7].
inline double gradient_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = x - fx;
  const double ty = y - fy;
  auto corner = [&](int dx, int dy) {
    const Vec2 g = lattice_gradient(ix + dx, iy + dy, seed);
    return g.x() * (tx - dx) + g.y() * (ty - dy);
  };
  const double u = fade(tx);
  const double v = fade(ty);
  const double a = corner(0, 0) + u * (corner(1, 0) - corner(0, 0));
  const double b = corner(0, 1) + u * (corner(1, 1) - corner(0, 1));
  return a + v * (b - a);
}

inline Vec3 to_object(const SE3Pose& world_from_object, const Vec3& x) {
  return world_from_object.rotation().conjugate() * (x - world_from_object.translation());
}

inline Vec3 dir_to_object(const SE3Pose& world_from_object, const Vec3& d) {
  return world_from_object.rotation().conjugate() * d;
}

}  // namespace detail

inline double texture_value(const Texture& tex, const Vec2& uv) {
  if (tex.checker_amplitude == 0.0 && tex.noise_amplitude == 0.0) return tex.base;
  const double k = std::numbers::pi / (0.5 * tex.checker_period);
  const double checker = std::sin(k * uv.x()) * std::sin(k * uv.y());
  const double n1 = detail::gradient_noise(uv.x() / tex.noise_scale, uv.y() / tex.noise_scale, tex.seed);
  const double n2 = detail::gradient_noise(uv.x() / (0.5 * tex.noise_scale), uv.y() / (0.5 * tex.noise_scale),
                                           tex.seed + 17);
  const double v = tex.base + tex.checker_amplitude * checker + tex.noise_amplitude * (n1 + 0.5 * n2);
  return std::clamp(v, 0.0, 1.0);
}

/// Nearest intersection of the world ray origin + s * dir (s > 0). The hit's `depth` field holds
/// s, which equals camera z when dir has unit camera-z component.
inline std::optional<Hit> intersect(const ScenePrimitive& prim, const Vec3& origin, const Vec3& dir) {
  const Vec3 o = detail::to_object(prim.pose, origin);
  const Vec3 d = detail::dir_to_object(prim.pose, dir);
  constexpr double kMin = 1e-9;
  Hit hit;
  switch (prim.kind) {
    case PrimitiveKind::textured_plane: {
      if (d.z() == 0.0) return std::nullopt;
      const double s = -o.z() / d.z();
      if (!(s > kMin)) return std::nullopt;
      const Vec3 p = o + s * d;
      if (std::abs(p.x()) > prim.extent.x() || std::abs(p.y()) > prim.extent.y()) return std::nullopt;
      hit.depth = s;
      hit.uv = Vec2(p.x(), p.y());
      hit.normal = prim.pose.rotation() * Vec3::UnitZ();
      break;
    }
    case PrimitiveKind::sphere: {
      const double r = prim.extent.x();
      const double a = d.squaredNorm();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc = b * b - a * c;
      if (disc < 0.0) return std::nullopt;
      const double sq = std::sqrt(disc);
      double s = (-b - sq) / a;
      if (!(s > kMin)) s = (-b + sq) / a;
      if (!(s > kMin)) return std::nullopt;
      const Vec3 p = o + s * d;
      const Vec3 n = p / r;
      hit.depth = s;
      hit.uv = Vec2(r * std::atan2(n.x(), -n.z()), r * std::asin(std::clamp(n.y(), -1.0, 1.0)));
      hit.normal = prim.pose.rotation() * n;
      break;
    }
    case PrimitiveKind::box: {
      double t_near = -std::numeric_limits<double>::infinity();
      double t_far = std::numeric_limits<double>::infinity();
      int axis_near = -1;
      int axis_far = -1;
      for (int ax = 0; ax < 3; ++ax) {
        if (d[ax] == 0.0) {
          if (std::abs(o[ax]) > prim.extent[ax]) return std::nullopt;
          continue;
        }
        double t0 = (-prim.extent[ax] - o[ax]) / d[ax];
        double t1 = (prim.extent[ax] - o[ax]) / d[ax];
        if (t0 > t1) std::swap(t0, t1);
        if (t0 > t_near) { t_near = t0; axis_near = ax; }
        if (t1 < t_far) { t_far = t1; axis_far = ax; }
      }
      if (t_near > t_far) return std::nullopt;
      double s = t_near;
      int axis = axis_near;
      if (!(s > kMin)) { s = t_far; axis = axis_far; }
      if (!(s > kMin) || axis < 0) return std::nullopt;
      const Vec3 p = o + s * d;
      Vec3 n = Vec3::Zero();
      n[axis] = p[axis] > 0.0 ? 1.0 : -1.0;
      const int a1 = (axis + 1) % 3;
      const int a2 = (axis + 2) % 3;
      hit.depth = s;
      hit.uv = Vec2(p[a1] + 10.0 * axis + (n[axis] > 0 ? 5.0 : 0.0), p[a2]);
      hit.normal = prim.pose.rotation() * n;
      break;
    }
  }
  hit.point = origin + hit.depth * dir;
  return hit;
}

inline std::optional<Hit> cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  std::optional<Hit> best;
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    auto hit = intersect(scene.primitives[i], origin, dir);
    if (hit && (!best || hit->depth < best->depth)) {
      hit->primitive = static_cast<int>(i);
      best = hit;
    }
  }
  return best;
}

/// Ray through subpixel (u, v) of a camera-from-world pose; the hit depth is camera z.
inline std::optional<Hit> cast_pixel(const Scene& scene, const SE3Pose& pose, const CameraIntrinsics& k, double u,
                                     double v) {
  const Eigen::Quaterniond world_from_cam = pose.rotation().conjugate();
  return cast_ray(scene, pose.center(), world_from_cam * k.ray(u, v));
}

inline double shade(const Scene& scene, const Hit& hit) {
  const double albedo = texture_value(scene.primitives[hit.primitive].texture, hit.uv);
  const double lambert = std::max(0.0, hit.normal.dot(scene.light_direction));
  return std::clamp(albedo * (scene.ambient + (1.0 - scene.ambient) * lambert), 0.0, 1.0);
}

struct RenderResult {
  ImageGrid image;
  DepthMap depth;
  Grid<int> primitive;  // -1 where the ray misses
};

/// Lambertian render: nearest hit wins, misses are black with invalid depth.
inline RenderResult render(const Scene& scene, const SE3Pose& pose, const CameraIntrinsics& k) {
  if (scene.primitives.empty()) throw Error(ErrorCode::invalid_argument, "scene is empty");
  RenderResult out{ImageGrid(k.width, k.height, 1), DepthMap(k.width, k.height), Grid<int>(k.width, k.height, -1)};
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const auto hit = cast_pixel(scene, pose, k, x, y);
      if (!hit) continue;
      out.image.at(x, y) = shade(scene, *hit);
      out.depth.set(x, y, hit->depth);
      out.primitive(x, y) = hit->primitive;
    }
  }
  return out;
}

/// Unsigned distance from a world point to the nearest primitive surface.
inline double distance_to_surface(const Scene& scene, const Vec3& x) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) {
    const Vec3 l = prim.pose.inverse() * x;
    double d = 0.0;
    switch (prim.kind) {
      case PrimitiveKind::textured_plane: {
        const double dx = std::max(std::abs(l.x()) - prim.extent.x(), 0.0);
        const double dy = std::max(std::abs(l.y()) - prim.extent.y(), 0.0);
        d = std::sqrt(dx * dx + dy * dy + l.z() * l.z());
        break;
      }
      case PrimitiveKind::sphere:
        d = std::abs(l.norm() - prim.extent.x());
        break;
      case PrimitiveKind::box: {
        const Vec3 q = l.cwiseAbs() - prim.extent;
        d = std::abs(q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0));
        break;
      }
    }
    best = std::min(best, d);
  }
  return best;
}

/// Dense optical flow between two views with validity masks.
struct FlowField {
  Grid<Vec2> forward;
  Grid<Vec2> backward;
  Mask forward_valid;
  Mask backward_valid;
};

/// Exact flow of subpixel `p` from view a to view b, or nullopt when p misses the scene, leaves
/// the image, or is occluded in b.
inline std::optional<Vec2> flow_at(const Scene& scene, const SE3Pose& pose_a, const SE3Pose& pose_b,
                                   const CameraIntrinsics& k, const Vec2& p) {
  const auto hit = cast_pixel(scene, pose_a, k, p.x(), p.y());
  if (!hit) return std::nullopt;
  const Vec3 xb = relative_pose(pose_a, pose_b) * backproject(k, p, hit->depth);
  if (!(xb.z() > 0.0)) return std::nullopt;
  const Vec2 q = project(k, xb);
  if (!k.in_bounds(q)) return std::nullopt;
  const auto hit_b = cast_pixel(scene, pose_b, k, q.x(), q.y());
  if (!hit_b || std::abs(hit_b->depth - xb.z()) > 1e-6 * xb.z()) return std::nullopt;
  return q - p;
}

inline FlowField ground_truth_flow(const Scene& scene, const SE3Pose& pose_a, const SE3Pose& pose_b,
                                   const CameraIntrinsics& k) {
  FlowField f{Grid<Vec2>(k.width, k.height, Vec2::Zero()), Grid<Vec2>(k.width, k.height, Vec2::Zero()),
              Mask(k.width, k.height, 0), Mask(k.width, k.height, 0)};
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      if (auto fw = flow_at(scene, pose_a, pose_b, k, Vec2(x, y))) {
        f.forward(x, y) = *fw;
        f.forward_valid(x, y) = 1;
      }
      if (auto bw = flow_at(scene, pose_b, pose_a, k, Vec2(x, y))) {
        f.backward(x, y) = *bw;
        f.backward_valid(x, y) = 1;
      }
    }
  }
  return f;
}

/// Adds isotropic Gaussian noise (pixels) to every valid flow vector.
inline void perturb_flow(FlowField& flow, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return;
  for (std::size_t i = 0; i < flow.forward.size(); ++i) {
    const Vec2 nf(gaussian(rng), gaussian(rng));
    const Vec2 nb(gaussian(rng), gaussian(rng));
    if (flow.forward_valid[i]) flow.forward[i] += sigma * nf;
    if (flow.backward_valid[i]) flow.backward[i] += sigma * nb;
  }
}

/// Subpixel keypoint with the landmark it images (detector ground truth, unknown to the tracker).
struct Keypoint {
  Vec2 pixel = Vec2::Zero();
  int landmark = -1;
};

/// Synthetic detector: visible landmark projections at least `margin` px inside the image. Two
/// visible landmarks closer than `min_separation` px are both dropped, so every keypoint is
/// unambiguous in its neighborhood.
inline std::vector<Keypoint> detect_keypoints(const Scene& scene, const SE3Pose& pose, const CameraIntrinsics& k,
                                              double margin = 4.0, double min_separation = 3.0) {
  std::vector<Keypoint> cands;
  for (std::size_t i = 0; i < scene.landmarks.size(); ++i) {
    const Vec3 xc = pose * scene.landmarks[i];
    if (!(xc.z() > 0.05)) continue;
    const Vec2 p = project(k, xc);
    if (p.x() < margin || p.y() < margin || p.x() > k.width - 1 - margin || p.y() > k.height - 1 - margin) continue;
    const auto hit = cast_pixel(scene, pose, k, p.x(), p.y());
    if (!hit || std::abs(hit->depth - xc.z()) > 1e-6 * xc.z()) continue;
    cands.push_back({p, static_cast<int>(i)});
  }
  std::vector<Keypoint> out;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    bool isolated = true;
    for (std::size_t j = 0; j < cands.size() && isolated; ++j) {
      isolated = i == j || (cands[i].pixel - cands[j].pixel).norm() >= min_separation;
    }
    if (isolated) out.push_back(cands[i]);
  }
  std::stable_sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    return a.pixel.y() != b.pixel.y() ? a.pixel.y() < b.pixel.y() : a.pixel.x() < b.pixel.x();
  });
  return out;
}

/// Parameters of the synthetic corruption applied to the pipeline inputs.
struct NoiseModel {
  double depth_amplitude = 0.175;   // a in D' = D (1 + a f)
  double depth_wavelength = 24.0;   // pixels
  double flow_sigma = 0.0;          // pixels
  double pose_translation_sigma = 0.0;  // meters
  double pose_rotation_sigma = 0.0;     // radians
  std::uint64_t seed = 7;

  void validate() const {
    if (depth_amplitude < 0.0 || depth_wavelength <= 0.0 || flow_sigma < 0.0 || pose_translation_sigma < 0.0 ||
        pose_rotation_sigma < 0.0) {
      throw Error(ErrorCode::invalid_argument, "noise amplitudes must be nonnegative");
    }
  }
};

/// Mean |f| of the corruption field; with a = 0.175 the relative depth error averages 0.14.
inline constexpr double kCorruptionMeanAbs = 0.8;

/// Smooth field in [-1, 1] with mean |f| = kCorruptionMeanAbs over the valid pixels.
inline Grid<double> corruption_field(const Mask& valid, double wavelength, std::uint64_t seed) {
  const int w = valid.width();
  const int h = valid.height();
  std::mt19937_64 rng(seed);
  constexpr int kWaves = 6;
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::array<Wave, kWaves> waves{};
  for (auto& wave : waves) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double lambda = wavelength * uniform(rng, 0.7, 1.5);
    const double kk = 2.0 * std::numbers::pi / lambda;
    wave = {kk * std::cos(angle), kk * std::sin(angle), uniform(rng, 0.0, 2.0 * std::numbers::pi),
            uniform(rng, 0.5, 1.0)};
  }
  Grid<double> g(w, h, 0.0);
  double sum = 0.0, sum2 = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& wave : waves) v += wave.amp * std::cos(wave.kx * x + wave.ky * y + wave.phase);
      g(x, y) = v;
      if (valid(x, y)) {
        sum += v;
        sum2 += v * v;
        ++n;
      }
    }
  }
  if (n == 0) return g;
  const double mean = sum / n;
  const double sd = std::sqrt(std::max(sum2 / n - mean * mean, 1e-12));
  for (auto& v : g.data()) v = (v - mean) / sd;
  auto mean_abs = [&](double beta) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (valid[i]) acc += std::abs(std::tanh(beta * g[i]));
    }
    return acc / n;
  };
  double lo = 0.0, hi = 64.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_abs(mid) < kCorruptionMeanAbs ? lo : hi) = mid;
  }
  const double beta = 0.5 * (lo + hi);
  for (auto& v : g.data()) v = std::tanh(beta * v);
  return g;
}

/// D'(p) = D(p) (1 + a f(p)), clamped into (1e-3, 1e3).
inline DepthMap corrupt_depth(const DepthMap& depth, const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  if (noise.depth_amplitude == 0.0) return depth;
  const Grid<double> f = corruption_field(depth.valid, noise.depth_wavelength, seed);
  DepthMap out = depth;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!out.valid[i]) continue;
    out.values[i] = std::clamp(depth.values[i] * (1.0 + noise.depth_amplitude * f[i]), 1.0001e-3, 0.9999e3);
  }
  return out;
}

enum class TrajectoryKind { orbit, line, pure_rotation, static_camera };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::orbit;
  int num_frames = 10;
  double speed = 0.1;  // rad/frame for orbit and pure_rotation, m/frame for line
  double radius = 1.0;
  Vec3 center = Vec3(0.0, 0.2, 1.3);  // orbit center / look-at point
  double start_angle = -0.45;
  double frame_interval = 0.1;  // seconds
  std::uint64_t seed = 0;

  void validate() const {
    if (num_frames < 2) throw Error(ErrorCode::invalid_argument, "trajectory needs at least 2 frames");
  }
};

/// Camera-from-world pose of a camera at `position` looking at `target` (camera y points down).
inline SE3Pose look_at(const Vec3& position, const Vec3& target) {
  const Vec3 z = (target - position).normalized();
  Vec3 x = Vec3::UnitY().cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 world_from_cam;
  world_from_cam.col(0) = x;
  world_from_cam.col(1) = y;
  world_from_cam.col(2) = z;
  const Mat3 r = world_from_cam.transpose();
  return {r, -(r * position)};
}

inline std::vector<SE3Pose> generate_trajectory(const TrajectorySpec& spec) {
  spec.validate();
  std::vector<SE3Pose> poses;
  poses.reserve(spec.num_frames);
  const Vec3 eye = spec.center - Vec3(0.0, 0.0, spec.radius);
  for (int i = 0; i < spec.num_frames; ++i) {
    switch (spec.kind) {
      case TrajectoryKind::orbit: {
        const double a = spec.start_angle + spec.speed * i;
        const Vec3 pos = spec.center + spec.radius * Vec3(std::sin(a), 0.0, -std::cos(a));
        poses.push_back(look_at(pos, spec.center));
        break;
      }
      case TrajectoryKind::line: {
        const Vec3 pos = eye + Vec3(spec.speed * i, 0.0, 0.0);
        poses.push_back(look_at(pos, pos + Vec3(0.0, 0.0, 1.0)));
        break;
      }
      case TrajectoryKind::pure_rotation: {
        const double a = spec.start_angle + spec.speed * i;
        poses.push_back(look_at(eye, eye + Vec3(std::sin(a), 0.0, std::cos(a))));
        break;
      }
      case TrajectoryKind::static_camera:
        poses.push_back(look_at(eye, spec.center));
        break;
    }
  }
  return poses;
}

/// Pose with seeded translation/rotation jitter applied on the left.
inline SE3Pose jitter_pose(const SE3Pose& pose, const NoiseModel& noise, std::mt19937_64& rng) {
  Eigen::Matrix<double, 6, 1> xi;
  for (int i = 0; i < 3; ++i) xi[i] = noise.pose_translation_sigma * gaussian(rng);
  for (int i = 3; i < 6; ++i) xi[i] = noise.pose_rotation_sigma * gaussian(rng);
  return se3_exp(xi) * pose;
}

inline void scatter_landmarks(Scene& scene, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> areas;
  double total = 0.0;
  for (const auto& p : scene.primitives) {
    double a = 0.0;
    switch (p.kind) {
      case PrimitiveKind::textured_plane: a = 4.0 * p.extent.x() * p.extent.y(); break;
      case PrimitiveKind::sphere: a = 4.0 * std::numbers::pi * p.extent.x() * p.extent.x(); break;
      case PrimitiveKind::box:
        a = 8.0 * (p.extent.x() * p.extent.y() + p.extent.y() * p.extent.z() + p.extent.x() * p.extent.z());
        break;
    }
    areas.push_back(a);
    total += a;
  }
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& p = scene.primitives[i];
    const int n = static_cast<int>(std::lround(count * areas[i] / total));
    for (int j = 0; j < n; ++j) {
      Vec3 local;
      switch (p.kind) {
        case PrimitiveKind::textured_plane:
          local = Vec3(uniform(rng, -p.extent.x(), p.extent.x()), uniform(rng, -p.extent.y(), p.extent.y()), 0.0);
          break;
        case PrimitiveKind::sphere: {
          Vec3 d(gaussian(rng), gaussian(rng), gaussian(rng));
          local = p.extent.x() * d.normalized();
          break;
        }
        case PrimitiveKind::box: {
          const int face = static_cast<int>(uniform01(rng) * 6.0) % 6;
          const int ax = face / 2;
          local = Vec3(uniform(rng, -1, 1) * p.extent.x(), uniform(rng, -1, 1) * p.extent.y(),
                       uniform(rng, -1, 1) * p.extent.z());
          local[ax] = (face % 2 ? 1.0 : -1.0) * p.extent[ax];
          break;
        }
      }
      scene.landmarks.push_back(p.pose * local);
    }
  }
}

/// A named, fully specified synthetic sequence.
struct Fixture {
  std::string name;
  Scene scene;
  TrajectorySpec trajectory;
  CameraIntrinsics intrinsics;
  NoiseModel noise;
};

inline CameraIntrinsics standard_intrinsics() { return {64.0, 64.0, 32.0, 32.0, 64, 64}; }

/// Three textured walls of a 2 x 2 x 2 m box (back, left, floor) and one sphere in front of the
/// back wall. `textured = false` gives the uniform-albedo negative control.
inline Scene standard_scene(std::uint64_t seed, bool textured = true) {
  Scene s;
  auto wall = [&](const Mat3& r, const Vec3& t, std::uint64_t tex_seed) {
    ScenePrimitive p;
    p.kind = PrimitiveKind::textured_plane;
    p.pose = SE3Pose(r, t);
    p.extent = Vec3(1.0, 1.0, 0.0);
    p.texture.seed = tex_seed;
    if (!textured) p.texture.checker_amplitude = p.texture.noise_amplitude = 0.0;
    s.primitives.push_back(p);
  };
  Mat3 back;  // normal -z, facing the camera
  back << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  Mat3 left;  // normal +x
  left << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  Mat3 floor;  // normal -y (up)
  floor << 1, 0, 0, 0, 0, -1, 0, 1, 0;
  const SeedSplitter seeds(seed);
  wall(back, Vec3(0.0, 0.0, 2.0), seeds.derive("texture", 0));
  wall(left, Vec3(-1.0, 0.0, 1.0), seeds.derive("texture", 1));
  wall(floor, Vec3(0.0, 1.0, 1.0), seeds.derive("texture", 2));
  ScenePrimitive ball;
  ball.kind = PrimitiveKind::sphere;
  ball.pose = SE3Pose::from_translation(Vec3(0.1, 0.35, 1.45));
  ball.extent = Vec3(0.3, 0.3, 0.3);
  ball.texture.seed = seeds.derive("texture", 3);
  ball.texture.checker_period = 0.6;
  ball.texture.noise_scale = 0.3;
  if (!textured) ball.texture.checker_amplitude = ball.texture.noise_amplitude = 0.0;
  s.primitives.push_back(ball);
  scatter_landmarks(s, 900, seeds.derive("landmarks"));
  return s;
}

inline Fixture make_fixture(const std::string& name, std::uint64_t seed = 1) {
  Fixture f;
  f.name = name;
  f.intrinsics = standard_intrinsics();
  f.noise.seed = SeedSplitter(seed).derive("noise");
  f.trajectory.seed = seed;
  if (name == "standard") {
    f.scene = standard_scene(seed);
  } else if (name == "pure_rotation") {
    f.scene = standard_scene(seed);
    f.trajectory.kind = TrajectoryKind::pure_rotation;
    f.trajectory.speed = 0.06;
    f.trajectory.start_angle = -0.27;
  } else if (name == "static") {
    f.scene = standard_scene(seed);
    f.trajectory.kind = TrajectoryKind::static_camera;
  } else if (name == "uniform") {
    f.scene = standard_scene(seed, false);
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown fixture '" + name + "'");
  }
  return f;
}

inline const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names{"standard", "pure_rotation", "static", "uniform"};
  return names;
}

}  // namespace georefine::synth
