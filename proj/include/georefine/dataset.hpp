#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "georefine/config.hpp"
#include "georefine/io.hpp"
#include "georefine/rng.hpp"
#include "georefine/synthworld.hpp"

namespace georefine::dataset {

namespace fs = std::filesystem;

/// 64-bit FNV-1a, used for manifest content hashes.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline std::string frame_name(const std::string& prefix, int id, const std::string& ext) {
  return prefix + "_" + std::to_string(id) + ext;
}

inline fs::path image_path(const fs::path& dir, int id) { return dir / "images" / frame_name("image", id, ".ppm"); }
inline fs::path image_f32_path(const fs::path& dir, int id) { return dir / "images" / frame_name("image", id, ".f32"); }
inline fs::path gt_depth_path(const fs::path& dir, int id) { return dir / "depth_gt" / frame_name("depth", id, ".pfm"); }
inline fs::path init_depth_path(const fs::path& dir, int id) { return dir / "depth_init" / frame_name("depth", id, ".pfm"); }
inline fs::path flow_fwd_path(const fs::path& dir, int id) { return dir / "flow" / frame_name("flow_fwd", id, ".flo"); }
inline fs::path flow_bwd_path(const fs::path& dir, int id) { return dir / "flow" / frame_name("flow_bwd", id, ".flo"); }

/// Scalars describing a generated sequence, stored as `dataset.cfg`.
struct DatasetInfo {
  std::string fixture = "standard";
  std::uint64_t seed = 1;
  int num_frames = 0;
  double frame_interval = 0.1;
  CameraIntrinsics intrinsics;

  std::string to_text() const {
    return "fixture = " + fixture + "\nseed = " + std::to_string(seed) + "\nnum_frames = " +
           std::to_string(num_frames) + "\nframe_interval = " + io::fmt(frame_interval) +
           "\nfx = " + io::fmt(intrinsics.fx) + "\nfy = " + io::fmt(intrinsics.fy) + "\ncx = " +
           io::fmt(intrinsics.cx) + "\ncy = " + io::fmt(intrinsics.cy) + "\nwidth = " +
           std::to_string(intrinsics.width) + "\nheight = " + std::to_string(intrinsics.height) + "\n";
  }

  static DatasetInfo parse(const std::string& text) {
    DatasetInfo info;
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[config_detail::trim(line.substr(0, eq))] = config_detail::trim(line.substr(eq + 1));
    }
    auto need = [&](const std::string& k) -> const std::string& {
      const auto it = kv.find(k);
      if (it == kv.end()) throw Error(ErrorCode::io, "dataset.cfg lacks '" + k + "'");
      return it->second;
    };
    info.fixture = need("fixture");
    info.seed = std::stoull(need("seed"));
    info.num_frames = static_cast<int>(io::to_long(need("num_frames")));
    info.frame_interval = io::to_double(need("frame_interval"));
    info.intrinsics.fx = io::to_double(need("fx"));
    info.intrinsics.fy = io::to_double(need("fy"));
    info.intrinsics.cx = io::to_double(need("cx"));
    info.intrinsics.cy = io::to_double(need("cy"));
    info.intrinsics.width = static_cast<int>(io::to_long(need("width")));
    info.intrinsics.height = static_cast<int>(io::to_long(need("height")));
    info.intrinsics.validate();
    return info;
  }
};

struct ManifestEntry {
  int frame_id = -1;  // -1 for sequence-level files
  std::string kind;
  std::string path;  // relative to the dataset directory
  std::string hash;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::string to_csv() const {
    std::string out = "frame_id,kind,path,fnv1a64\n";
    for (const auto& e : entries) out += std::to_string(e.frame_id) + "," + e.kind + "," + e.path + "," + e.hash + "\n";
    return out;
  }
};

/// The fixture a config describes, with its frame count and noise settings applied.
inline synth::Fixture fixture_from_config(const PipelineConfig& cfg) {
  synth::Fixture f = synth::make_fixture(cfg.fixture, cfg.seed);
  f.trajectory.num_frames = cfg.num_frames;
  f.noise.depth_amplitude = cfg.depth_amplitude;
  f.noise.flow_sigma = cfg.flow_sigma;
  f.noise.pose_translation_sigma = cfg.pose_translation_sigma;
  f.noise.pose_rotation_sigma = cfg.pose_rotation_sigma;
  f.noise.validate();
  return f;
}

/// Seed of frame `i`'s initial-depth corruption field.
inline std::uint64_t depth_seed(const synth::NoiseModel& noise, int i) {
  return SeedSplitter(noise.seed).derive("depth", static_cast<std::uint64_t>(i));
}

/// Renders the fixture and writes images (PPM plus lossless f32), exact and corrupted depths (PFM),
/// exact and jittered trajectories (TUM), forward/backward flow into each frame (FLO1), detected
/// keypoints, `dataset.cfg` and `manifest.csv`.
inline Manifest generate_dataset(const synth::Fixture& f, const fs::path& out_dir) {
  f.trajectory.validate();
  f.noise.validate();
  std::error_code ec;
  for (const char* sub : {"images", "depth_gt", "depth_init", "flow"}) fs::create_directories(out_dir / sub, ec);
  if (ec || !fs::is_directory(out_dir)) throw Error(ErrorCode::io, "cannot create dataset directory " + out_dir.string());

  const auto poses = synth::generate_trajectory(f.trajectory);
  const SeedSplitter seeds(f.noise.seed);
  const int n = static_cast<int>(poses.size());
  Manifest manifest;
  auto record = [&](int id, const std::string& kind, const fs::path& p) {
    manifest.entries.push_back({id, kind, fs::relative(p, out_dir).generic_string(), hex64(fnv1a(io::read_file(p)))});
  };

  DatasetInfo info{f.name, f.trajectory.seed, n, f.trajectory.frame_interval, f.intrinsics};
  {
    auto os = io::open_out(out_dir / "dataset.cfg");
    os << info.to_text();
  }
  record(-1, "info", out_dir / "dataset.cfg");

  std::vector<io::StampedPose> gt_traj, jittered;
  std::string keypoints = "frame_id,x,y,landmark\n";
  for (int i = 0; i < n; ++i) {
    const double ts = i * f.trajectory.frame_interval;
    const auto r = synth::render(f.scene, poses[i], f.intrinsics);
    io::write_ppm(image_path(out_dir, i), r.image);
    record(i, "image", image_path(out_dir, i));
    io::write_image_f32(image_f32_path(out_dir, i), r.image);
    record(i, "image_f32", image_f32_path(out_dir, i));
    io::write_pfm(gt_depth_path(out_dir, i), r.depth);
    record(i, "depth_gt", gt_depth_path(out_dir, i));
    io::write_pfm(init_depth_path(out_dir, i), synth::corrupt_depth(r.depth, f.noise, depth_seed(f.noise, i)));
    record(i, "depth_init", init_depth_path(out_dir, i));
    if (i > 0) {
      synth::FlowField flow = synth::ground_truth_flow(f.scene, poses[i - 1], poses[i], f.intrinsics);
      if (f.noise.flow_sigma > 0.0) {
        std::mt19937_64 rng(seeds.derive("flow", static_cast<std::uint64_t>(i)));
        synth::perturb_flow(flow, f.noise.flow_sigma, rng);
      }
      io::write_flo(flow_fwd_path(out_dir, i), flow.forward, flow.forward_valid);
      record(i, "flow_fwd", flow_fwd_path(out_dir, i));
      io::write_flo(flow_bwd_path(out_dir, i), flow.backward, flow.backward_valid);
      record(i, "flow_bwd", flow_bwd_path(out_dir, i));
    }
    for (const auto& kp : synth::detect_keypoints(f.scene, poses[i], f.intrinsics)) {
      keypoints += std::to_string(i) + "," + io::fmt(kp.pixel.x()) + "," + io::fmt(kp.pixel.y()) + "," +
                   std::to_string(kp.landmark) + "\n";
    }
    gt_traj.push_back({ts, poses[i]});
    std::mt19937_64 rng(seeds.derive("pose", static_cast<std::uint64_t>(i)));
    jittered.push_back({ts, synth::jitter_pose(poses[i], f.noise, rng)});
  }
  io::write_tum(out_dir / "trajectory_gt.txt", gt_traj);
  record(-1, "trajectory_gt", out_dir / "trajectory_gt.txt");
  io::write_tum(out_dir / "trajectory_jittered.txt", jittered);
  record(-1, "trajectory_jittered", out_dir / "trajectory_jittered.txt");
  {
    auto os = io::open_out(out_dir / "keypoints.csv");
    os << keypoints;
  }
  record(-1, "keypoints", out_dir / "keypoints.csv");
  {
    auto os = io::open_out(out_dir / "manifest.csv");
    os << manifest.to_csv();
  }
  return manifest;
}

/// A dataset read back from disk.
struct Dataset {
  fs::path dir;
  DatasetInfo info;
  std::vector<ImageGrid> images;
  std::vector<DepthMap> gt_depth;
  std::vector<DepthMap> init_depth;
  std::vector<io::StampedPose> gt_trajectory;
  std::vector<synth::FlowField> flow;  // flow[i] maps frame i-1 to frame i; flow[0] is empty
  std::vector<std::vector<Vec2>> keypoints;

  int size() const { return info.num_frames; }
};

inline Dataset load_dataset(const fs::path& dir) {
  if (!fs::exists(dir / "dataset.cfg")) throw Error(ErrorCode::io, "no dataset at " + dir.string());
  Dataset d;
  d.dir = dir;
  d.info = DatasetInfo::parse(io::read_file(dir / "dataset.cfg"));
  const int n = d.info.num_frames;
  d.keypoints.resize(static_cast<std::size_t>(n));
  d.flow.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    d.images.push_back(fs::exists(image_f32_path(dir, i)) ? io::read_image_f32(image_f32_path(dir, i))
                                                            : io::read_ppm(image_path(dir, i)));
    d.gt_depth.push_back(io::read_pfm(gt_depth_path(dir, i)));
    d.init_depth.push_back(io::read_pfm(init_depth_path(dir, i)));
    if (i > 0) {
      io::read_flo(flow_fwd_path(dir, i), d.flow[i].forward, d.flow[i].forward_valid);
      io::read_flo(flow_bwd_path(dir, i), d.flow[i].backward, d.flow[i].backward_valid);
    }
  }
  d.gt_trajectory = io::read_tum(dir / "trajectory_gt.txt");
  const auto kp = io::read_csv(dir / "keypoints.csv");
  const int cf = kp.column("frame_id"), cx = kp.column("x"), cy = kp.column("y");
  for (const auto& row : kp.rows) {
    const long id = io::to_long(row[cf]);
    if (id < 0 || id >= n) throw Error(ErrorCode::io, "keypoint for unknown frame " + row[cf]);
    d.keypoints[static_cast<std::size_t>(id)].emplace_back(io::to_double(row[cx]), io::to_double(row[cy]));
  }
  return d;
}

}  // namespace georefine::dataset
