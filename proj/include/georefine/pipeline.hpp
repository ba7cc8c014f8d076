#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "georefine/config.hpp"
#include "georefine/dataset.hpp"
#include "georefine/fusion.hpp"
#include "georefine/io.hpp"
#include "georefine/log.hpp"
#include "georefine/metrics.hpp"
#include "georefine/refiner.hpp"
#include "georefine/tracking.hpp"

namespace georefine::pipeline {

namespace fs = std::filesystem;

// Output layout under --out.
inline fs::path refined_dir(const fs::path& out) { return out / "refined"; }
inline fs::path refined_frames_dir(const fs::path& out) { return out / "refined_frames"; }
inline fs::path refined_manifest(const fs::path& out) { return refined_dir(out) / "manifest.csv"; }
inline fs::path depth_file(const fs::path& dir, int id) { return dir / ("depth_" + std::to_string(id) + ".pfm"); }

inline constexpr const char* kRefineLogHeader = "frame_id,step,l_p,l_s,l_m,l_c,total";
inline constexpr const char* kMapPointHeader = "id,x,y,z,obs_count,reproj_err";

inline fs::path require_out(const PipelineConfig& cfg) {
  if (cfg.out.empty()) throw Error(ErrorCode::config, "an output directory is required (--out)");
  return cfg.out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  auto os = io::open_out(path, true);
  os << text;
}

/// summary.txt holds sorted `key = value` lines; each command merges its own keys.
inline void update_summary(const fs::path& out, const std::map<std::string, std::string>& values) {
  std::map<std::string, std::string> all;
  const fs::path path = out / "summary.txt";
  if (fs::exists(path)) {
    std::istringstream in(io::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) all[config_detail::trim(line.substr(0, eq))] = config_detail::trim(line.substr(eq + 1));
    }
  }
  for (const auto& [k, v] : values) all[k] = v;
  std::string text;
  for (const auto& [k, v] : all) text += k + " = " + v + "\n";
  write_text(path, text);
}

inline std::map<std::string, std::string> read_summary(const fs::path& out) {
  std::map<std::string, std::string> all;
  if (!fs::exists(out / "summary.txt")) return all;
  std::istringstream in(io::read_file(out / "summary.txt"));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) all[config_detail::trim(line.substr(0, eq))] = config_detail::trim(line.substr(eq + 1));
  }
  return all;
}

inline double timestamp_of(const dataset::Dataset& ds, int i) { return i * ds.info.frame_interval; }

// ---------------------------------------------------------------------------------------------
// synth

inline dataset::Manifest cmd_synth(const PipelineConfig& cfg) {
  const fs::path out = require_out(cfg);
  const auto manifest = dataset::generate_dataset(dataset::fixture_from_config(cfg), cfg.dataset_dir());
  log::info("synth: " + std::to_string(manifest.entries.size()) + " files in " + cfg.dataset_dir().string());
  (void)out;
  return manifest;
}

// ---------------------------------------------------------------------------------------------
// track

struct TrackResult {
  std::vector<tracking::TrackedFrame> frames;
  int lost_frames = 0;
};

inline tracking::TrackerConfig tracker_config(const PipelineConfig& cfg) {
  tracking::TrackerConfig tc = cfg.track;
  tc.prgbd = cfg.mode == TrackingMode::prgbd;
  return tc;
}

inline tracking::TrackerInput tracker_input(const PipelineConfig& cfg, const dataset::Dataset& ds, int i) {
  tracking::TrackerInput in;
  in.frame_id = i;
  in.timestamp = timestamp_of(ds, i);
  in.image = &ds.images[static_cast<std::size_t>(i)];
  in.detections = ds.keypoints[static_cast<std::size_t>(i)];
  in.flow = i > 0 ? &ds.flow[static_cast<std::size_t>(i)] : nullptr;
  in.cnn_depth = &ds.init_depth[static_cast<std::size_t>(i)];
  in.inject_lost = std::find(cfg.inject_lost.begin(), cfg.inject_lost.end(), i) != cfg.inject_lost.end();
  return in;
}

/// Writes trajectory.txt, track_status.csv, map_points.csv and map_obs.csv.
inline void write_track_outputs(const fs::path& out, const dataset::Dataset& ds, const tracking::Tracker& tracker,
                                const TrackResult& result) {
  std::vector<io::StampedPose> traj;
  std::string status = "frame_id,status,inliers\n";
  std::string obs = "frame_id,x,y,depth\n";
  for (const auto& f : result.frames) {
    const bool ok = f.status == tracking::TrackStatus::ok;
    status += std::to_string(f.frame_id) + "," + (ok ? "ok" : "lost") + "," + std::to_string(f.inlier_count) + "\n";
    if (!ok) continue;
    traj.push_back({timestamp_of(ds, f.frame_id), tracker.poses().at(f.frame_id)});
    for (const auto& o : tracker.observations_in(f.frame_id)) {
      obs += std::to_string(f.frame_id) + "," + io::fmt(o.pixel.x()) + "," + io::fmt(o.pixel.y()) + "," +
             io::fmt(o.slam_depth) + "\n";
    }
  }
  io::write_tum(out / "trajectory.txt", traj);
  write_text(out / "track_status.csv", status);
  write_text(out / "map_obs.csv", obs);
  std::string mp = std::string(kMapPointHeader) + "\n";
  for (const auto& p : tracker.map_points()) {
    mp += std::to_string(p.id) + "," + io::fmt(p.position.x()) + "," + io::fmt(p.position.y()) + "," +
          io::fmt(p.position.z()) + "," + std::to_string(p.observation_count) + "," +
          io::fmt(p.mean_reprojection_error) + "\n";
  }
  write_text(out / "map_points.csv", mp);
  update_summary(out, {{"frames", std::to_string(result.frames.size())},
                       {"tracked_frames", std::to_string(traj.size())},
                       {"lost_frames", std::to_string(result.lost_frames)},
                       {"map_points", std::to_string(tracker.map_points().size())}});
}

/// Tracks the dataset on its own. In pRGBD mode the tracker reads refined depths left by an
/// earlier refine run, falling back to the initial predictions.
inline TrackResult cmd_track(const PipelineConfig& cfg) {
  const fs::path out = require_out(cfg);
  fs::create_directories(out);
  const auto ds = dataset::load_dataset(cfg.dataset_dir());
  tracking::Tracker tracker(ds.info.intrinsics, tracker_config(cfg));
  std::map<int, DepthMap> refined;
  for (const auto& dir : {refined_dir(out), refined_frames_dir(out)}) {
    for (int i = 0; i < ds.size(); ++i) {
      if (!refined.count(i) && fs::exists(depth_file(dir, i))) refined[i] = io::read_pfm(depth_file(dir, i));
    }
  }
  if (cfg.mode == TrackingMode::prgbd) log::info("track: " + std::to_string(refined.size()) + " refined depths available");
  tracker.set_depth_provider([&](int id) -> const DepthMap* {
    if (auto it = refined.find(id); it != refined.end()) return &it->second;
    return id >= 0 && id < ds.size() ? &ds.init_depth[static_cast<std::size_t>(id)] : nullptr;
  });
  TrackResult result;
  for (int i = 0; i < ds.size(); ++i) result.frames.push_back(tracker.track(tracker_input(cfg, ds, i)));
  result.lost_frames = tracker.lost_frames();
  write_track_outputs(out, ds, tracker, result);
  log::info("track: " + std::to_string(result.lost_frames) + " lost frames");
  return result;
}

// ---------------------------------------------------------------------------------------------
// refine

/// A Refiner wired to the output directory: published depths are written as they appear,
/// together with their loss rows, so an interrupted run can resume.
class RefineSession {
 public:
  RefineSession(const PipelineConfig& cfg, const CameraIntrinsics& k, fs::path out, bool resume)
      : out_(std::move(out)), refiner_(k, cfg.refine) {
    fs::create_directories(refined_dir(out_));
    fs::create_directories(refined_frames_dir(out_));
    if (resume && fs::exists(refined_manifest(out_))) {
      const auto t = io::read_csv(refined_manifest(out_));
      const int ci = t.column("frame_id"), ck = t.column("kind");
      for (const auto& row : t.rows) restorable_.insert({static_cast<int>(io::to_long(row[ci])), row[ck] == "keyframe"});
      log::info("refine: resuming with " + std::to_string(restorable_.size()) + " published depths");
    } else {
      for (const auto& dir : {refined_dir(out_), refined_frames_dir(out_)}) {
        for (const auto& e : fs::directory_iterator(dir)) fs::remove(e.path());
      }
      write_text(refined_manifest(out_), "frame_id,kind\n");
      write_text(out_ / "refine_log.csv", std::string(kRefineLogHeader) + "\n");
    }
    refiner_.set_restore_provider([this](int id, bool keyframe) -> std::optional<DepthMap> {
      if (!restorable_.count({id, keyframe})) return std::nullopt;
      return io::read_pfm(depth_file(keyframe ? refined_dir(out_) : refined_frames_dir(out_), id));
    });
    refiner_.set_publish_hook([this](int id, bool keyframe, const DepthMap& d) { publish(id, keyframe, d); });
  }

  refine::Refiner& refiner() noexcept { return refiner_; }

  void finish() {
    refiner_.finish();
    update_summary(out_, {{"keyframes_created", std::to_string(refiner_.keyframes_created())},
                          {"keyframes_refined", std::to_string(refiner_.keyframes_refined() + refiner_.keyframes_restored())},
                          {"keyframes_skipped", std::to_string(refiner_.keyframes_skipped())},
                          {"frames_refined", std::to_string(refiner_.frames_refined() + refiner_.frames_restored())},
                          {"refine_failures", std::to_string(refiner_.failures())}});
    log::info("refine: " + std::to_string(refiner_.keyframes_refined()) + " keyframes refined, " +
              std::to_string(refiner_.keyframes_restored()) + " restored, " +
              std::to_string(refiner_.steps_executed()) + " steps");
  }

 private:
  void publish(int id, bool keyframe, const DepthMap& d) {
    io::write_pfm(depth_file(keyframe ? refined_dir(out_) : refined_frames_dir(out_), id), d);
    std::string rows;
    const auto& log = refiner_.log_records();
    for (; log_flushed_ < log.size(); ++log_flushed_) {
      const auto& r = log[log_flushed_];
      rows += std::to_string(r.frame_id) + "," + std::to_string(r.step) + "," + io::fmt(r.loss.l_p) + "," +
              io::fmt(r.loss.l_s) + "," + io::fmt(r.loss.l_m) + "," + io::fmt(r.loss.l_c) + "," +
              io::fmt(r.loss.total) + "\n";
    }
    std::ofstream(out_ / "refine_log.csv", std::ios::app | std::ios::binary) << rows;
    std::ofstream(refined_manifest(out_), std::ios::app | std::ios::binary)
        << id << "," << (keyframe ? "keyframe" : "frame") << "\n";
  }

  fs::path out_;
  refine::Refiner refiner_;
  std::set<std::pair<int, bool>> restorable_;
  std::size_t log_flushed_ = 0;
};

inline refine::FrameData frame_data(const dataset::Dataset& ds, int i, const SE3Pose& pose,
                                    std::vector<MapPointObservation> obs) {
  refine::FrameData fd;
  fd.frame_id = i;
  fd.timestamp = timestamp_of(ds, i);
  fd.image = std::make_shared<ImageGrid>(ds.images[static_cast<std::size_t>(i)]);
  fd.pose = pose;
  fd.map_obs = std::move(obs);
  fd.initial_depth = ds.init_depth[static_cast<std::size_t>(i)];
  return fd;
}

/// Refines from tracking outputs on disk. Resumes when an earlier run left published depths.
inline void cmd_refine(const PipelineConfig& cfg) {
  const fs::path out = require_out(cfg);
  const auto ds = dataset::load_dataset(cfg.dataset_dir());
  if (!fs::exists(out / "track_status.csv")) throw Error(ErrorCode::io, "no tracking outputs in " + out.string());
  const auto status = io::read_csv(out / "track_status.csv");
  const auto traj = io::read_tum(out / "trajectory.txt");
  std::map<int, std::vector<MapPointObservation>> obs;
  const auto ot = io::read_csv(out / "map_obs.csv");
  for (const auto& row : ot.rows) {
    obs[static_cast<int>(io::to_long(row[0]))].push_back(
        {Vec2(io::to_double(row[1]), io::to_double(row[2])), io::to_double(row[3])});
  }
  RefineSession session(cfg, ds.info.intrinsics, out, true);
  auto& refiner = session.refiner();
  refiner.set_map_obs_provider([&](int id) { return obs.count(id) ? obs.at(id) : std::vector<MapPointObservation>{}; });
  std::size_t next_pose = 0;
  const int cs = status.column("status");
  for (const auto& row : status.rows) {
    const int id = static_cast<int>(io::to_long(row[0]));
    if (id < 0 || id >= ds.size()) throw Error(ErrorCode::io, "tracking status for unknown frame " + row[0]);
    if (row[cs] != "ok") {
      refiner.handle_slam_failure();
      continue;
    }
    if (next_pose >= traj.size()) throw Error(ErrorCode::io, "trajectory.txt is shorter than track_status.csv");
    refiner.on_frame(frame_data(ds, id, traj[next_pose++].pose, obs.count(id) ? obs.at(id) : std::vector<MapPointObservation>{}));
  }
  session.finish();
}

// ---------------------------------------------------------------------------------------------
// fuse

inline std::map<int, SE3Pose> tracked_poses(const fs::path& out) {
  std::map<int, SE3Pose> poses;
  const auto status = io::read_csv(out / "track_status.csv");
  const auto traj = io::read_tum(out / "trajectory.txt");
  std::size_t next = 0;
  for (const auto& row : status.rows) {
    if (row[status.column("status")] != "ok") continue;
    if (next >= traj.size()) throw Error(ErrorCode::io, "trajectory.txt is shorter than track_status.csv");
    poses[static_cast<int>(io::to_long(row[0]))] = traj[next++].pose;
  }
  return poses;
}

/// Published ids from the refine manifest, keyframes first unless `frames` is set.
inline std::vector<int> published_ids(const fs::path& out, bool frames) {
  std::set<int> ids;
  if (!fs::exists(refined_manifest(out))) return {};
  const auto t = io::read_csv(refined_manifest(out));
  for (const auto& row : t.rows) {
    if (row[1] == "keyframe" || frames) ids.insert(static_cast<int>(io::to_long(row[0])));
  }
  return {ids.begin(), ids.end()};
}

struct FuseResult {
  fusion::TriangleMesh mesh;
  std::vector<int> fused;
};

/// Integrates the selected depths into a TSDF covering their points and writes mesh.ply.
inline FuseResult cmd_fuse(const PipelineConfig& cfg) {
  const fs::path out = require_out(cfg);
  fs::create_directories(out);
  const auto ds = dataset::load_dataset(cfg.dataset_dir());
  const auto& k = ds.info.intrinsics;
  std::vector<int> ids = published_ids(out, cfg.fuse_frames);
  if (ids.empty() && cfg.fuse_depth != DepthSource::refined) {
    for (int i = 0; i < ds.size(); ++i) ids.push_back(i);
  }
  std::map<int, SE3Pose> poses;
  if (cfg.fuse_trajectory == TrajectorySource::ground_truth) {
    for (int i = 0; i < ds.size(); ++i) poses[i] = ds.gt_trajectory.at(static_cast<std::size_t>(i)).pose;
  } else if (fs::exists(out / "track_status.csv")) {
    poses = tracked_poses(out);
  }
  std::vector<std::pair<int, DepthMap>> inputs;
  for (int id : ids) {
    if (!poses.count(id)) continue;
    switch (cfg.fuse_depth) {
      case DepthSource::refined: {
        fs::path p = depth_file(refined_dir(out), id);
        if (!fs::exists(p)) p = depth_file(refined_frames_dir(out), id);
        inputs.emplace_back(id, io::read_pfm(p));
        break;
      }
      case DepthSource::initial: inputs.emplace_back(id, ds.init_depth.at(static_cast<std::size_t>(id))); break;
      case DepthSource::ground_truth: inputs.emplace_back(id, ds.gt_depth.at(static_cast<std::size_t>(id))); break;
    }
  }
  FuseResult result;
  if (!inputs.empty()) {
    // Robust bounds: 0.5% / 99.5% per-axis quantiles of all backprojected points.
    std::array<std::vector<double>, 3> coords;
    for (const auto& [id, d] : inputs) {
      const SE3Pose world_from_cam = poses.at(id).inverse();
      for (int y = 0; y < k.height; ++y) {
        for (int x = 0; x < k.width; ++x) {
          if (!d.is_valid(x, y)) continue;
          const Vec3 p = world_from_cam * backproject(k, Vec2(x, y), d.values(x, y));
          for (int a = 0; a < 3; ++a) coords[a].push_back(p[a]);
        }
      }
    }
    Vec3 lo, hi;
    for (int a = 0; a < 3; ++a) {
      auto& c = coords[a];
      std::sort(c.begin(), c.end());
      lo[a] = c[static_cast<std::size_t>(0.005 * static_cast<double>(c.size() - 1))];
      hi[a] = c[static_cast<std::size_t>(0.995 * static_cast<double>(c.size() - 1))];
    }
    auto vol = fusion::TsdfVolume::covering(lo, hi, cfg.voxel_size, cfg.fusion_margin, cfg.truncation);
    for (const auto& [id, d] : inputs) {
      fusion::integrate(vol, d, poses.at(id), k);
      result.fused.push_back(id);
    }
    result.mesh = fusion::extract_mesh(vol);
  }
  fusion::write_ply(out / "mesh.ply", result.mesh);
  update_summary(out, {{"fused_frames", std::to_string(result.fused.size())},
                       {"mesh_vertices", std::to_string(result.mesh.vertices.size())},
                       {"mesh_triangles", std::to_string(result.mesh.triangles.size())}});
  log::info("fuse: " + std::to_string(result.fused.size()) + " depths, " +
            std::to_string(result.mesh.triangles.size()) + " triangles");
  return result;
}

// ---------------------------------------------------------------------------------------------
// eval

/// Frame ids of `depth_<id>.pfm` files in a directory, ascending.
inline std::vector<int> depth_ids(const fs::path& dir) {
  std::vector<int> ids;
  if (!fs::is_directory(dir)) return ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("depth_", 0) != 0 || e.path().extension() != ".pfm") continue;
    const std::string num = name.substr(6, name.size() - 10);
    if (num.empty() || !std::all_of(num.begin(), num.end(), ::isdigit)) continue;
    ids.push_back(std::stoi(num));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct EvalResult {
  std::map<int, metrics::DepthMetrics> depth;
  std::map<int, metrics::DepthMetrics> initial;
  std::optional<metrics::PoseMetrics> ate;
  std::optional<metrics::PoseMetrics> rpe;
};

/// Depth metrics of every prediction in `pred_dir` against `gt_dir`, plus trajectory metrics
/// when a tracked trajectory exists. Empty `pred_dir`/`gt_dir` select the run's own outputs.
inline EvalResult cmd_eval(const PipelineConfig& cfg, fs::path pred_dir = {}, fs::path gt_dir = {}) {
  const fs::path out = require_out(cfg);
  fs::create_directories(out);
  const bool own = pred_dir.empty() && gt_dir.empty();
  if (pred_dir.empty()) pred_dir = refined_dir(out);
  if (gt_dir.empty()) gt_dir = cfg.dataset_dir() / "depth_gt";
  const auto align = cfg.eval_align ? metrics::DepthAlignment::per_frame_median : metrics::DepthAlignment::none;

  EvalResult result;
  const auto ids = depth_ids(pred_dir);
  std::vector<int> missing;
  for (int id : ids) {
    if (!fs::exists(depth_file(gt_dir, id))) missing.push_back(id);
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::insufficient_data,
                "ground truth lacks frame ids " + config_detail::join(missing) + " in " + gt_dir.string());
  }
  for (int id : ids) {
    const DepthMap gt = io::read_pfm(depth_file(gt_dir, id));
    result.depth[id] = metrics::depth_metrics(io::read_pfm(depth_file(pred_dir, id)), gt, align);
    const fs::path init = cfg.dataset_dir() / "depth_init" / ("depth_" + std::to_string(id) + ".pfm");
    if (own && fs::exists(init)) result.initial[id] = metrics::depth_metrics(io::read_pfm(init), gt, align);
  }
  write_text(out / "metrics_depth.csv", metrics::depth_csv(result.depth));
  if (own) write_text(out / "metrics_depth_initial.csv", metrics::depth_csv(result.initial));

  std::map<std::string, std::string> summary{{"eval_frames", std::to_string(ids.size())}};
  if (!result.depth.empty()) {
    std::vector<metrics::DepthMetrics> rows;
    for (const auto& [id, m] : result.depth) rows.push_back(m);
    const auto mean = metrics::mean_metrics(rows);
    summary["abs_rel"] = io::fixed(mean.abs_rel, 6);
    summary["delta1"] = io::fixed(mean.delta1, 6);
  }
  if (!result.initial.empty()) {
    std::vector<metrics::DepthMetrics> rows;
    for (const auto& [id, m] : result.initial) rows.push_back(m);
    summary["abs_rel_initial"] = io::fixed(metrics::mean_metrics(rows).abs_rel, 6);
  }

  const fs::path gt_traj = cfg.dataset_dir() / "trajectory_gt.txt";
  if (own && fs::exists(out / "trajectory.txt") && fs::exists(gt_traj)) {
    const auto est = io::read_tum(out / "trajectory.txt");
    const auto gt = io::read_tum(gt_traj);
    std::string csv = "metric,value\n";
    try {
      result.ate = metrics::ate_rmse(est, gt, true);
      csv += "ate_rmse," + io::fixed(result.ate->ate_rmse, 9) + "\nate_scale," + io::fixed(result.ate->scale, 9) + "\n";
      summary["ate_rmse"] = io::fixed(result.ate->ate_rmse, 9);
    } catch (const Error& e) {
      log::warn(std::string("eval: ATE skipped: ") + e.what());
    }
    try {
      result.rpe = metrics::rpe(est, gt, cfg.rpe_delta);
      csv += "rpe," + io::fixed(result.rpe->rpe, 9) + "\n";
      summary["rpe"] = io::fixed(result.rpe->rpe, 9);
    } catch (const Error& e) {
      log::warn(std::string("eval: RPE skipped: ") + e.what());
    }
    csv += "num_poses," + std::to_string(est.size()) + "\n";
    write_text(out / "metrics_pose.csv", csv);
  }
  update_summary(out, summary);
  return result;
}

// ---------------------------------------------------------------------------------------------
// pipeline

/// synth, then tracking and refinement as an interleaved producer/consumer pair, then fuse and eval.
inline void cmd_pipeline(const PipelineConfig& cfg) {
  const fs::path out = require_out(cfg);
  fs::create_directories(out);
  if (fs::exists(out / "summary.txt")) fs::remove(out / "summary.txt");
  write_text(out / "config_used.cfg", config_to_text(cfg));
  cmd_synth(cfg);
  const auto ds = dataset::load_dataset(cfg.dataset_dir());

  tracking::Tracker tracker(ds.info.intrinsics, tracker_config(cfg));
  RefineSession session(cfg, ds.info.intrinsics, out, false);
  auto& refiner = session.refiner();
  refiner.set_map_obs_provider([&](int id) { return tracker.observations_in(id); });
  tracker.set_depth_provider([&](int id) -> const DepthMap* { return refiner.current_depth(id); });

  TrackResult result;
  for (int i = 0; i < ds.size(); ++i) {
    const auto tf = tracker.track(tracker_input(cfg, ds, i));
    result.frames.push_back(tf);
    if (tf.applied_scale) refiner.rescale(*tf.applied_scale);
    if (tf.status != tracking::TrackStatus::ok) {
      refiner.handle_slam_failure();
      continue;
    }
    refiner.on_frame(frame_data(ds, i, tf.pose, tracker.observations_in(i)));
  }
  session.finish();
  result.lost_frames = tracker.lost_frames();
  write_track_outputs(out, ds, tracker, result);
  cmd_fuse(cfg);
  cmd_eval(cfg);
  update_summary(out, {{"fixture", cfg.fixture}, {"seed", std::to_string(cfg.seed)}, {"status", "ok"}});
}

}  // namespace georefine::pipeline
