#include <random>

#include <gtest/gtest.h>

#include "georefine/geometry.hpp"
#include "georefine/synthworld.hpp"
#include "support.hpp"

using namespace georefine;

namespace {

CameraIntrinsics k100() { return {100.0, 100.0, 50.0, 50.0, 101, 101}; }

SE3Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  Eigen::Matrix<double, 6, 1> xi;
  for (int i = 0; i < 6; ++i) xi[i] = n(rng);
  return se3_exp(xi);
}

}  // namespace

TEST(Project, PrincipalRay) { EXPECT_TRUE(project(k100(), Vec3(0, 0, 1)).isApprox(Vec2(50, 50))); }

TEST(Project, OffAxis) { EXPECT_TRUE(project(k100(), Vec3(0.5, 0, 1)).isApprox(Vec2(100, 50))); }

TEST(Project, AnisotropicFocal) {
  const CameraIntrinsics k{200.0, 100.0, 64.0, 48.0, 128, 96};
  const Vec2 p = project(k, Vec3(0.1, -0.2, 2.0));
  EXPECT_NEAR(p.x(), 74.0, 1e-12);
  EXPECT_NEAR(p.y(), 38.0, 1e-12);
}

TEST(Project, BehindCameraRejected) {
  EXPECT_THROW(project(k100(), Vec3(0, 0, 0)), Error);
  EXPECT_THROW(project(k100(), Vec3(1, 0, -1)), Error);
}

TEST(Backproject, Examples) {
  EXPECT_TRUE(backproject(k100(), Vec2(50, 50), 3.0).isApprox(Vec3(0, 0, 3)));
  EXPECT_TRUE(backproject(k100(), Vec2(150, 50), 2.0).isApprox(Vec3(2, 0, 2)));
  EXPECT_THROW(backproject(k100(), Vec2(1, 1), 0.0), Error);
  EXPECT_THROW(backproject(k100(), Vec2(1, 1), -2.0), Error);
}

TEST(Backproject, RoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 100.0), d(0.1, 100.0);
  for (int i = 0; i < 1000; ++i) {
    const Vec2 p(u(rng), u(rng));
    EXPECT_LT((project(k100(), backproject(k100(), p, d(rng))) - p).norm(), 1e-12);
  }
}

TEST(Intrinsics, Validation) {
  EXPECT_NO_THROW(k100().validate());
  EXPECT_THROW((CameraIntrinsics{0.0, 1.0, 0.0, 0.0, 4, 4}.validate()), Error);
  EXPECT_THROW((CameraIntrinsics{1.0, 1.0, 4.0, 0.0, 4, 4}.validate()), Error);
}

TEST(RelativePose, Examples) {
  std::mt19937_64 rng(2);
  const SE3Pose p = random_pose(rng);
  EXPECT_TRUE(relative_pose(p, p).is_approx(SE3Pose::identity(), 1e-9));
  const SE3Pose rel = relative_pose(SE3Pose::identity(), SE3Pose::from_translation(Vec3(1, 0, 0)));
  EXPECT_TRUE(rel.translation().isApprox(Vec3(1, 0, 0)));
  EXPECT_LT(rel.rotation_angle(), 1e-12);
}

TEST(RelativePose, PureRotationsMatchMatrixAlgebra) {
  const Mat3 ri = Eigen::AngleAxisd(0.3, Vec3(0, 1, 0)).toRotationMatrix();
  const Mat3 rj = Eigen::AngleAxisd(-0.7, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  const SE3Pose rel = relative_pose(SE3Pose(ri, Vec3::Zero()), SE3Pose(rj, Vec3::Zero()));
  EXPECT_TRUE(rel.rotation_matrix().isApprox(rj * ri.transpose(), 1e-12));
  EXPECT_LT(rel.translation().norm(), 1e-15);
}

TEST(SE3, AssociativityAndInverse) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const SE3Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    EXPECT_TRUE(((a * b) * c).is_approx(a * (b * c), 1e-9));
    EXPECT_TRUE((a * a.inverse()).is_approx(SE3Pose::identity(), 1e-9));
    EXPECT_NEAR(a.rotation().norm(), 1.0, 1e-9);
  }
}

TEST(SE3, CenterIsInverseTranslation) {
  const SE3Pose p = synth::look_at(Vec3(1, 2, 3), Vec3(0, 0, 5));
  EXPECT_LT((p * p.center()).norm(), 1e-12);
}

TEST(Warp, IdentitySamplesSourceOnGrid) {
  const auto s = testkit::render_sequence("standard", 1, 2);
  const auto w = warp_source_to_target(s.frames[1].image, s.corrupted[0], SE3Pose::identity(), s.k());
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!w.valid(x, y)) continue;
      EXPECT_NEAR(w.image.at(x, y), s.frames[1].image.at(x, y), 1e-12);
    }
  }
}

TEST(Warp, TexturedPlaneTwoViews) {
  const auto scene = testkit::plane_scene(2.0);
  const auto k = synth::standard_intrinsics();
  const SE3Pose a = synth::look_at(Vec3(0, 0, 0), Vec3(0, 0, 2));
  const SE3Pose b = synth::look_at(Vec3(0.15, -0.05, 0.1), Vec3(0, 0, 2));
  const auto ra = synth::render(scene, a, k), rb = synth::render(scene, b, k);
  const auto w = warp_source_to_target(rb.image, ra.depth, relative_pose(a, b), k);
  double err = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      if (!w.valid(x, y)) continue;
      err += std::abs(w.image.at(x, y) - ra.image.at(x, y));
      ++n;
    }
  }
  ASSERT_GT(n, 2000u);
  EXPECT_LT(err / n, 1e-3);
}

TEST(Warp, JacobianMatchesFiniteDifferences) {
  const auto s = testkit::render_sequence("standard", 1, 6);
  const SE3Pose t = relative_pose(s.poses[3], s.poses[5]);
  const auto& src = s.frames[5].image;
  const DepthMap& d = s.corrupted[3];
  const auto w = warp_source_to_target(src, d, t, s.k());
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> px(0, 63);
  int tested = 0, good = 0;
  while (tested < 1000) {
    const int x = px(rng), y = px(rng);
    if (!w.valid(x, y)) continue;
    const double eps = 1e-4 * d.values(x, y);
    auto sample_at = [&](double depth) -> std::optional<double> {
      DepthMap one = d;
      one.values(x, y) = depth;
      const auto r = warp_source_to_target(src, one, t, s.k());
      if (!r.valid(x, y)) return std::nullopt;
      return r.image.at(x, y);
    };
    const auto hi = sample_at(d.values(x, y) + eps), lo = sample_at(d.values(x, y) - eps);
    if (!hi || !lo) continue;
    ++tested;
    const double fd = (*hi - *lo) / (2.0 * eps);
    const double an = w.jacobian_at(x, y);
    const double scale = std::max(std::abs(fd), std::abs(an));
    good += scale < 1e-9 || std::abs(fd - an) <= 1e-3 * scale;
  }
  // Bilinear cell crossings inside the stencil are the only allowed misses.
  EXPECT_GE(good, 980);
}

TEST(Warp, PureRotationIgnoresDepthBitwise) {
  const auto s = testkit::render_sequence("pure_rotation", 1, 3);
  const SE3Pose t(relative_pose(s.poses[0], s.poses[2]).rotation(), Vec3::Zero());
  DepthMap doubled = s.corrupted[0];
  for (auto& v : doubled.values.data()) v *= 2.0;
  const auto a = warp_source_to_target(s.frames[2].image, s.corrupted[0], t, s.k());
  const auto b = warp_source_to_target(s.frames[2].image, doubled, t, s.k());
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.valid, b.valid);
}

TEST(Warp, InvalidPixelsCarryZeroJacobianAndShrinkingMaskNeverAdds) {
  const auto s = testkit::render_sequence("standard", 1, 3);
  const SE3Pose t = relative_pose(s.poses[0], s.poses[2]);
  const auto full = warp_source_to_target(s.frames[2].image, s.corrupted[0], t, s.k());
  DepthMap holed = s.corrupted[0];
  for (int y = 10; y < 30; ++y) {
    for (int x = 5; x < 50; ++x) holed.valid(x, y) = 0;
  }
  const auto part = warp_source_to_target(s.frames[2].image, holed, t, s.k());
  for (std::size_t i = 0; i < full.valid.size(); ++i) {
    if (part.valid[i]) {
      EXPECT_TRUE(full.valid[i]);
    }
    if (!full.valid[i]) {
      EXPECT_EQ(full.jacobian[i], 0.0);
    }
  }
}

TEST(Warp, ResolutionMismatchThrows) {
  const auto k = synth::standard_intrinsics();
  EXPECT_THROW(warp_source_to_target(ImageGrid(32, 32, 1), DepthMap(64, 64), SE3Pose::identity(), k), Error);
}

TEST(ConsistencyRatio, ConsistentPairIsOne) {
  const auto scene = testkit::plane_scene(2.0);
  const auto k = synth::standard_intrinsics();
  const SE3Pose a = SE3Pose::identity();
  const SE3Pose b = SE3Pose::from_translation(Vec3(-0.2, 0.1, 0.0));
  const auto r = consistency_ratio(synth::render(scene, a, k).depth, synth::render(scene, b, k).depth,
                                   relative_pose(a, b), k);
  std::size_t n = 0;
  for (std::size_t i = 0; i < r.valid.size(); ++i) {
    if (!r.valid[i]) continue;
    ++n;
    EXPECT_NEAR(r.ratio[i], 1.0, 1e-6);
  }
  EXPECT_GT(n, 3000u);
}

TEST(ConsistencyRatio, IdentityWithDoubledSource) {
  const auto s = testkit::render_sequence("standard", 1, 2);
  DepthMap twice = s.frames[0].depth;
  for (auto& v : twice.values.data()) v *= 2.0;
  const auto r = consistency_ratio(s.frames[0].depth, twice, SE3Pose::identity(), s.k());
  for (std::size_t i = 0; i < r.valid.size(); ++i) {
    if (r.valid[i]) {
      EXPECT_NEAR(r.ratio[i], 2.0, 1e-12);
    }
  }
}

TEST(ConsistencyRatio, FrontoParallelPlaneOffsetAlongAxis) {
  const CameraIntrinsics k{16.0, 16.0, 8.0, 8.0, 16, 16};
  DepthMap di(16, 16), dj(16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      di.set(x, y, 1.0);
      dj.set(x, y, 1.5);
    }
  }
  // Camera j sits 0.5 m behind camera i: x_j = x_i + (0, 0, 0.5).
  const auto r = consistency_ratio(di, dj, SE3Pose::from_translation(Vec3(0, 0, 0.5)), k);
  EXPECT_TRUE(r.valid(8, 8));
  EXPECT_NEAR(r.ratio(8, 8), 1.0, 1e-12);
}
