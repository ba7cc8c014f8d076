#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "georefine/config.hpp"
#include "georefine/dataset.hpp"
#include "georefine/io.hpp"
#include "georefine/losses.hpp"
#include "georefine/synthworld.hpp"

namespace georefine::testkit {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("georefine_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline bool same_bytes(const fs::path& a, const fs::path& b) {
  return fs::exists(a) && fs::exists(b) && slurp(a) == slurp(b);
}

inline bool same_depth(const DepthMap& a, const DepthMap& b) {
  if (a.width() != b.width() || a.height() != b.height()) return false;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (a.valid[i] != b.valid[i] || (a.valid[i] && a.values[i] != b.values[i])) return false;
  }
  return true;
}

/// A column of the "mean" row of a metrics_depth CSV.
inline std::optional<double> csv_mean(const fs::path& p, const std::string& column) {
  if (!fs::exists(p)) return std::nullopt;
  const auto t = io::read_csv(p);
  const int c = t.column(column);
  for (const auto& row : t.rows) {
    if (row[0] == "mean") return io::to_double(row[static_cast<std::size_t>(c)]);
  }
  return std::nullopt;
}

/// Frame ids listed in a metrics_depth CSV (without the mean row).
inline std::vector<int> csv_ids(const fs::path& p) {
  std::vector<int> ids;
  for (const auto& row : io::read_csv(p).rows) {
    if (row[0] != "mean") ids.push_back(static_cast<int>(io::to_long(row[0])));
  }
  return ids;
}

/// A rendered fixture with exact and corrupted depths for every frame.
struct RenderedSequence {
  synth::Fixture fixture;
  std::vector<SE3Pose> poses;
  std::vector<synth::RenderResult> frames;
  std::vector<DepthMap> corrupted;

  const CameraIntrinsics& k() const { return fixture.intrinsics; }

  /// Sources as seen by the losses, with either exact or corrupted depths.
  std::vector<SourceView> views(const std::vector<int>& ids, bool exact_depth) const {
    std::vector<SourceView> out;
    for (int j : ids) {
      const auto u = static_cast<std::size_t>(j);
      out.push_back({j, &frames[u].image, exact_depth ? &frames[u].depth : &corrupted[u], poses[u]});
    }
    return out;
  }
};

inline RenderedSequence render_sequence(const std::string& fixture, std::uint64_t seed, int num_frames = 10,
                                        double depth_amplitude = -1.0) {
  RenderedSequence s;
  s.fixture = synth::make_fixture(fixture, seed);
  s.fixture.trajectory.num_frames = num_frames;
  if (depth_amplitude >= 0.0) s.fixture.noise.depth_amplitude = depth_amplitude;
  s.poses = synth::generate_trajectory(s.fixture.trajectory);
  for (int i = 0; i < num_frames; ++i) {
    s.frames.push_back(synth::render(s.fixture.scene, s.poses[static_cast<std::size_t>(i)], s.fixture.intrinsics));
    s.corrupted.push_back(
        synth::corrupt_depth(s.frames.back().depth, s.fixture.noise, dataset::depth_seed(s.fixture.noise, i)));
  }
  return s;
}

/// One large textured plane at world z = `z`, facing a camera at the origin looking down +z.
inline synth::Scene plane_scene(double z, std::uint64_t seed = 3) {
  synth::Scene scene;
  synth::ScenePrimitive p;
  Mat3 facing;
  facing << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  p.pose = SE3Pose(facing, Vec3(0.0, 0.0, z));
  p.extent = Vec3(20.0, 20.0, 0.0);
  p.texture.seed = seed;
  scene.primitives.push_back(p);
  return scene;
}

inline PipelineConfig run_config(const fs::path& out, std::uint64_t seed = 1, const std::string& fixture = "standard") {
  PipelineConfig cfg;
  cfg.out = out.string();
  cfg.seed = seed;
  cfg.fixture = fixture;
  cfg.validate();
  return cfg;
}

}  // namespace georefine::testkit
