#include <random>

#include <gtest/gtest.h>

#include "georefine/tracking.hpp"
#include "support.hpp"

using namespace georefine;
using namespace georefine::tracking;

namespace {

ImageGrid noise_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageGrid img(w, h);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

/// prev shifted by (dx, dy): curr(x + dx, y + dy) = prev(x, y).
ImageGrid shifted(const ImageGrid& prev, int dx, int dy) {
  ImageGrid out(prev.width(), prev.height());
  for (int y = 0; y < prev.height(); ++y) {
    for (int x = 0; x < prev.width(); ++x) {
      const int sx = x - dx, sy = y - dy;
      out.at(x, y) = prev.in_bounds(sx, sy) ? prev.at(sx, sy) : 0.0;
    }
  }
  return out;
}

FlowField constant_flow(int w, int h, const Vec2& fwd, const Vec2& bwd) {
  return {Grid<Vec2>(w, h, fwd), Grid<Vec2>(w, h, bwd), Mask(w, h, 1), Mask(w, h, 1)};
}

Match match_with(double residual, double x, double y) {
  Match m;
  m.descriptor_residual = residual;
  m.pixel_curr = Vec2(x, y);
  return m;
}

struct Correspondences {
  std::vector<Vec3> points;
  std::vector<Vec2> pixels;
};

Correspondences synthetic_pair(const SE3Pose& motion, const CameraIntrinsics& k, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(4.0, 60.0), d(1.0, 3.0);
  Correspondences c;
  while (static_cast<int>(c.points.size()) < n) {
    const Vec3 x = backproject(k, Vec2(u(rng), u(rng)), d(rng));
    const Vec3 xc = motion * x;
    if (xc.z() <= 0.0) continue;
    c.points.push_back(x);
    c.pixels.push_back(project(k, xc));
  }
  return c;
}

}  // namespace

TEST(FlowMatch, CandidateAtPredictionHasZeroResidual) {
  const auto prev = noise_image(32, 32, 7);
  const auto curr = shifted(prev, 2, -1);
  const auto f = make_feature(prev, Vec2(10, 10), 0);
  ASSERT_TRUE(f);
  const auto flow = constant_flow(32, 32, Vec2(2, -1), Vec2(-2, 1));
  const std::vector<Feature> feats{*f};
  const std::vector<Vec2> dets{Vec2(12, 9), Vec2(13, 9)};
  const auto m = flow_match(feats, flow, curr, dets);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].pixel_curr, Vec2(12, 9));
  EXPECT_EQ(m[0].descriptor_residual, 0.0);
  EXPECT_FALSE(m[0].created);
}

TEST(FlowMatch, ForwardBackwardGate) {
  const auto img = noise_image(32, 32, 8);
  EXPECT_EQ(*forward_backward_error(constant_flow(32, 32, Vec2(2, -1), Vec2(-2, 1)), Vec2(10, 10)), 0.0);
  const auto bad = constant_flow(32, 32, Vec2(2, 0), Vec2(-0.5, 0));
  EXPECT_DOUBLE_EQ(*forward_backward_error(bad, Vec2(10, 10)), 1.5);
  const std::vector<Feature> feats{*make_feature(img, Vec2(10, 10), 0)};
  const std::vector<Vec2> dets{Vec2(12, 10)};
  EXPECT_TRUE(flow_match(feats, bad, img, dets).empty());
}

TEST(FlowMatch, EmptyInputAndCreatedFeature) {
  const auto img = noise_image(32, 32, 9);
  const auto flow = constant_flow(32, 32, Vec2(1, 1), Vec2(-1, -1));
  EXPECT_TRUE(flow_match({}, flow, img, {}).empty());
  const std::vector<Feature> feats{*make_feature(img, Vec2(10, 10), 3)};
  const auto m = flow_match(feats, flow, img, {});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_TRUE(m[0].created);
  EXPECT_EQ(m[0].pixel_curr, Vec2(11, 11));
}

TEST(FlowMatch, SurvivorsRespectRoundTripBound) {
  const auto s = testkit::render_sequence("standard", 1, 2);
  auto flow = synth::ground_truth_flow(s.fixture.scene, s.poses[0], s.poses[1], s.k());
  std::mt19937_64 rng(5);
  synth::perturb_flow(flow, 0.6, rng);
  std::vector<Feature> feats;
  for (int y = 4; y < 60; y += 2) {
    for (int x = 4; x < 60; x += 2) {
      if (auto f = make_feature(s.frames[0].image, Vec2(x, y), 0)) feats.push_back(*f);
    }
  }
  const auto m = flow_match(feats, flow, s.frames[1].image, {});
  ASSERT_FALSE(m.empty());
  EXPECT_LT(m.size(), feats.size());
  for (const auto& mm : m) EXPECT_LE(*forward_backward_error(flow, mm.feature_prev.pixel), 1.0);
}

TEST(Subsample, KeepsTenPercent) {
  std::vector<Match> m;
  for (int i = 0; i < 600; ++i) m.push_back(match_with(600 - i, i % 30, i / 30));
  const auto kept = subsample_matches(m, 1000);
  ASSERT_EQ(kept.size(), 100u);
  for (const auto& k : kept) EXPECT_LE(k.descriptor_residual, 100.0);
  EXPECT_EQ(subsample_matches(std::vector<Match>(m.begin(), m.begin() + 3), 50).size(), 3u);
  EXPECT_THROW(subsample_matches(m, 0), Error);
}

TEST(Subsample, TiesResolvedInRasterOrder) {
  const std::vector<Match> m{match_with(1, 5, 2), match_with(1, 3, 1), match_with(1, 9, 0), match_with(1, 0, 2)};
  const auto kept = subsample_matches(m, 20);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].pixel_curr, Vec2(9, 0));
  EXPECT_EQ(kept[1].pixel_curr, Vec2(3, 1));
}

TEST(GaussNewton, RecoversExactPose) {
  const auto k = synth::standard_intrinsics();
  Eigen::Matrix<double, 6, 1> xi;
  xi << 0.05, -0.03, 0.08, 0.02, -0.04, 0.01;
  const SE3Pose truth = se3_exp(xi);
  const auto c = synthetic_pair(truth, k, 60, 1);
  const auto r = estimate_pose_gn(c.points, c.pixels, k, SE3Pose::identity());
  EXPECT_EQ(r.status, TrackStatus::ok);
  EXPECT_EQ(r.inlier_count, 60);
  EXPECT_LT((r.pose.translation() - truth.translation()).norm(), 1e-6);
  EXPECT_LT(relative_pose(r.pose, truth).rotation_angle(), 1e-6);
  for (std::size_t i = 1; i < r.cost_trace.size(); ++i) EXPECT_LE(r.cost_trace[i], r.cost_trace[i - 1]);
}

TEST(GaussNewton, IdentityMotion) {
  const auto k = synth::standard_intrinsics();
  const auto c = synthetic_pair(SE3Pose::identity(), k, 20, 2);
  const auto r = estimate_pose_gn(c.points, c.pixels, k, SE3Pose::identity());
  EXPECT_TRUE(r.pose.is_approx(SE3Pose::identity(), 1e-12));
  EXPECT_LT(r.cost, 1e-20);
}

TEST(GaussNewton, HuberSurvivesOutliers) {
  const auto s = testkit::render_sequence("standard", 1, 3);
  const auto& k = s.k();
  const SE3Pose truth = relative_pose(s.poses[0], s.poses[2]);
  std::vector<Vec3> pts;
  std::vector<Vec2> px;
  for (int y = 4; y < 60; y += 4) {
    for (int x = 4; x < 60; x += 4) {
      if (!s.frames[0].depth.is_valid(x, y)) continue;
      const Vec3 p = backproject(k, Vec2(x, y), s.frames[0].depth.values(x, y));
      const Vec3 q = truth * p;
      if (q.z() <= 0.0) continue;
      pts.push_back(p);
      px.push_back(project(k, q));
    }
  }
  std::mt19937_64 rng(30);
  std::uniform_real_distribution<double> u(0.0, 63.0);
  for (std::size_t i = 0; i < px.size(); i += 10) {
    for (std::size_t j = i; j < std::min(px.size(), i + 3); ++j) px[j] = Vec2(u(rng), u(rng));
  }
  const auto r = estimate_pose_gn(pts, px, k, SE3Pose::identity());
  EXPECT_EQ(r.status, TrackStatus::ok);
  EXPECT_LT((r.pose.translation() - truth.translation()).norm(), 0.01);
}

TEST(GaussNewton, TooFewMatchesIsLost) {
  const auto k = synth::standard_intrinsics();
  const auto c = synthetic_pair(SE3Pose::identity(), k, 5, 3);
  EXPECT_EQ(estimate_pose_gn(c.points, c.pixels, k, SE3Pose::identity()).status, TrackStatus::lost);
}

TEST(GaussNewton, ScaleEquivariant) {
  const auto k = synth::standard_intrinsics();
  Eigen::Matrix<double, 6, 1> xi;
  xi << 0.1, 0.02, -0.05, 0.03, 0.01, -0.02;
  const SE3Pose truth = se3_exp(xi);
  const auto c = synthetic_pair(truth, k, 40, 4);
  std::vector<Vec3> scaled;
  for (const auto& p : c.points) scaled.push_back(2.5 * p);
  const auto a = estimate_pose_gn(c.points, c.pixels, k, SE3Pose::identity());
  const auto b = estimate_pose_gn(scaled, c.pixels, k, SE3Pose::identity());
  EXPECT_LT((b.pose.translation() - 2.5 * a.pose.translation()).norm(), 1e-9);
  EXPECT_LT(relative_pose(a.pose, b.pose).rotation_angle(), 1e-9);
}

namespace {

/// Six cameras on an arc looking at a point 2 m ahead.
std::map<int, SE3Pose> arc_poses(int n) {
  std::map<int, SE3Pose> poses;
  for (int i = 0; i < n; ++i) poses[i] = synth::look_at(Vec3(-0.3 + 0.12 * i, 0.05 * i, 0.0), Vec3(0, 0, 2));
  return poses;
}

TrackObservations observe(const Vec3& x, const std::map<int, SE3Pose>& poses, const CameraIntrinsics& k,
                          double err) {
  TrackObservations t;
  t.id = 7;
  int i = 0;
  for (const auto& [id, p] : poses) {
    const double sgn = (i++ % 2 == 0) ? 1.0 : -1.0;
    t.observations.push_back({id, project(k, p * x) + Vec2(sgn * err, 0.0)});
  }
  return t;
}

}  // namespace

TEST(Triangulation, ExactObservations) {
  const auto k = synth::standard_intrinsics();
  const auto poses = arc_poses(6);
  const Vec3 x(0.1, -0.2, 2.1);
  const auto mp = triangulate_track(observe(x, poses, k, 0.0), poses, k);
  ASSERT_TRUE(mp);
  EXPECT_LT((mp->position - x).norm(), 1e-6);
  for (const auto& [id, p] : poses) {
    EXPECT_LE((project(k, p * mp->position) - project(k, p * x)).norm(), mp->mean_reprojection_error + 1e-9);
  }
}

TEST(Triangulation, ObservationCountAndErrorFilter) {
  const auto k = synth::standard_intrinsics();
  const Vec3 x(0.0, 0.1, 2.0);
  const auto four = arc_poses(4);
  const std::vector<TrackObservations> a{observe(x, four, k, 0.1)};
  EXPECT_TRUE(triangulate_and_filter(a, four, k).empty());
  const auto six = arc_poses(6);
  const std::vector<TrackObservations> b{observe(x, six, k, 0.3)};
  const auto kept = triangulate_and_filter(b, six, k);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_EQ(kept[0].observation_count, 6);
  EXPECT_LE(kept[0].mean_reprojection_error, 1.0);
  const std::vector<TrackObservations> c{observe(x, six, k, 3.0)};
  EXPECT_TRUE(triangulate_and_filter(c, six, k).empty());
}

TEST(Triangulation, ParallelRaysDropped) {
  const Vec3 c0(0, 0, 0), c1(0.001, 0, 0), d(0, 0, 1);
  EXPECT_FALSE(midpoint_triangulate(c0, d, c1, d, 0.5 * std::numbers::pi / 180.0));
  std::map<int, SE3Pose> poses;
  for (int i = 0; i < 5; ++i) poses[i] = SE3Pose::from_translation(Vec3(-0.001 * i, 0, 0));
  const auto k = synth::standard_intrinsics();
  EXPECT_FALSE(triangulate_track(observe(Vec3(0, 0, 5), poses, k, 0.0), poses, k));
}

TEST(Scale, Examples) {
  const std::vector<double> d1{2, 4}, h1{1, 2};
  const auto a = estimate_scale(d1, h1);
  EXPECT_DOUBLE_EQ(a.s, 2.0);
  EXPECT_EQ(a.residual_rms, 0.0);
  const std::vector<double> d2{1, 3}, h2{1, 1};
  EXPECT_DOUBLE_EQ(estimate_scale(d2, h2).s, 2.0);
  const std::vector<double> d3{0.7, 1.3, 2.2};
  EXPECT_DOUBLE_EQ(estimate_scale(d3, d3).s, 1.0);
  const std::vector<double> z{0, 0};
  EXPECT_THROW(estimate_scale(d1, z), Error);
  EXPECT_THROW(estimate_scale(d1, std::vector<double>{1.0}), Error);
}

TEST(Scale, ClosedFormIsMinimum) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 5.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> d, h;
    for (int i = 0; i < 12; ++i) {
      h.push_back(u(rng));
      d.push_back(1.7 * h.back() + 0.3 * (u(rng) - 2.75));
    }
    const double s = estimate_scale(d, h).s;
    const double f = scale_objective(d, h, s);
    EXPECT_GE(scale_objective(d, h, s + 1e-3), f);
    EXPECT_GE(scale_objective(d, h, s - 1e-3), f);
  }
}

TEST(Scale, ApplyScale) {
  std::vector<MapPoint> pts(1);
  pts[0].position = Vec3(1, 2, 3);
  const Mat3 r = Eigen::AngleAxisd(0.4, Vec3(0, 1, 0)).toRotationMatrix();
  std::vector<SE3Pose> poses{SE3Pose(r, Vec3(0, 0, 1))};
  apply_scale(pts, poses, 1.0);
  EXPECT_EQ(pts[0].position, Vec3(1, 2, 3));
  apply_scale(pts, poses, 2.0);
  EXPECT_EQ(poses[0].translation(), Vec3(0, 0, 2));
  EXPECT_TRUE(poses[0].rotation_matrix().isApprox(r, 1e-15));
  EXPECT_EQ(pts[0].position, Vec3(2, 4, 6));
  EXPECT_THROW(apply_scale(pts, poses, 0.0), Error);
  EXPECT_THROW(apply_scale(pts, poses, -1.0), Error);
}

TEST(Scale, IdempotentAfterApply) {
  const std::vector<double> d{1.1, 2.3, 0.8, 3.0}, h{0.5, 1.2, 0.35, 1.6};
  const double s = estimate_scale(d, h).s;
  std::vector<double> hs;
  for (double v : h) hs.push_back(s * v);
  EXPECT_NEAR(estimate_scale(d, hs).s, 1.0, 1e-12);
}

TEST(Tracker, InjectedLossMarksFrameLost) {
  const auto s = testkit::render_sequence("standard", 1, 3);
  Tracker t(s.k(), TrackerConfig{});
  std::vector<std::vector<Vec2>> dets(3);
  for (int i = 0; i < 3; ++i) {
    for (const auto& kp : synth::detect_keypoints(s.fixture.scene, s.poses[i], s.k())) dets[i].push_back(kp.pixel);
  }
  TrackerInput in0{0, 0.0, &s.frames[0].image, dets[0], nullptr, nullptr, false};
  EXPECT_EQ(t.track(in0).status, TrackStatus::ok);
  const auto flow = synth::ground_truth_flow(s.fixture.scene, s.poses[0], s.poses[1], s.k());
  TrackerInput in1{1, 0.1, &s.frames[1].image, dets[1], &flow, nullptr, true};
  EXPECT_EQ(t.track(in1).status, TrackStatus::lost);
  EXPECT_EQ(t.lost_frames(), 1);
  EXPECT_THROW(t.track(TrackerInput{}), Error);
}
