#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "georefine/error.hpp"
#include "georefine/io.hpp"
#include "georefine/refiner.hpp"
#include "georefine/synthworld.hpp"
#include "georefine/tracking.hpp"

namespace georefine {

enum class TrackingMode { monocular, prgbd };
enum class DepthSource { refined, initial, ground_truth };
enum class TrajectorySource { tracked, ground_truth };

/// Everything a run needs. Parsed from flat `key = value` text; unknown keys are rejected.
struct PipelineConfig {
  // dataset
  std::string fixture = "standard";
  std::uint64_t seed = 1;
  int num_frames = 10;
  double depth_amplitude = 0.175;
  double flow_sigma = 0.0;
  double pose_translation_sigma = 0.0;
  double pose_rotation_sigma = 0.0;

  refine::RefinementConfig refine;
  tracking::TrackerConfig track;
  TrackingMode mode = TrackingMode::monocular;
  std::vector<int> inject_lost;  // frame ids whose tracking is forced to fail

  double voxel_size = 0.02;
  double truncation = 0.0;  // 0 means 4 voxels
  double fusion_margin = 0.1;
  bool fuse_frames = false;  // also fuse per-frame depths, not only keyframes
  DepthSource fuse_depth = DepthSource::refined;
  TrajectorySource fuse_trajectory = TrajectorySource::tracked;

  bool eval_align = false;  // per-frame median scaling
  double rpe_delta = 0.5;   // s

  std::string out;
  std::string dataset;  // defaults to <out>/dataset

  std::filesystem::path dataset_dir() const {
    return dataset.empty() ? std::filesystem::path(out) / "dataset" : std::filesystem::path(dataset);
  }

  void validate() const {
    refine.validate();
    const auto& names = synth::fixture_names();
    if (std::find(names.begin(), names.end(), fixture) == names.end()) {
      throw Error(ErrorCode::config, "unknown fixture '" + fixture + "'");
    }
    if (num_frames < 2) throw Error(ErrorCode::config, "num_frames must be >= 2");
    if (!(depth_amplitude >= 0.0) || !(flow_sigma >= 0.0) || !(pose_translation_sigma >= 0.0) ||
        !(pose_rotation_sigma >= 0.0)) {
      throw Error(ErrorCode::config, "noise amplitudes must be nonnegative");
    }
    if (!(voxel_size > 0.0) || !(truncation >= 0.0) || !(fusion_margin >= 0.0)) {
      throw Error(ErrorCode::config, "fusion sizes must be positive");
    }
    if (!(track.flow.radius >= 0.0) || !(track.flow.fb_threshold > 0.0) || !(track.n_f_ratio > 0.0) ||
        track.map_filter.min_obs < 2 || !(track.map_filter.max_error > 0.0)) {
      throw Error(ErrorCode::config, "invalid tracker thresholds");
    }
    if (!(rpe_delta > 0.0)) throw Error(ErrorCode::config, "eval.rpe_delta must be positive");
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  is.imbue(std::locale::classic());
  double d = 0.0;
  char extra = 0;
  if (!(is >> d) || (is >> extra)) throw Error(ErrorCode::config, key + ": expected a number, got '" + v + "'");
  return d;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw Error(ErrorCode::config, key + ": expected an integer, got '" + v + "'");
  return n;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v[0] != '-') n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw Error(ErrorCode::config, key + ": expected an unsigned integer, got '" + v + "'");
  return n;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(ErrorCode::config, key + ": expected a boolean, got '" + v + "'");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  if (trim(v).empty()) return out;
  for (const auto& part : io::split(v)) out.push_back(static_cast<int>(parse_int(key, trim(part))));
  return out;
}

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [n, e] : names) {
    if (n == v) return e;
  }
  std::string allowed;
  for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : "|") + n;
  throw Error(ErrorCode::config, key + ": expected " + allowed + ", got '" + v + "'");
}

template <typename E>
std::string enum_name(E e, const std::vector<std::pair<std::string, E>>& names) {
  for (const auto& [n, x] : names) {
    if (x == e) return n;
  }
  return "?";
}

inline const std::vector<std::pair<std::string, TrackingMode>> kModes{{"monocular", TrackingMode::monocular},
                                                                     {"prgbd", TrackingMode::prgbd}};
inline const std::vector<std::pair<std::string, ConsistencyComposition>> kCompositions{
    {"min", ConsistencyComposition::minimum}, {"average", ConsistencyComposition::average}};
inline const std::vector<std::pair<std::string, DepthSource>> kDepthSources{
    {"refined", DepthSource::refined}, {"initial", DepthSource::initial}, {"ground_truth", DepthSource::ground_truth}};
inline const std::vector<std::pair<std::string, TrajectorySource>> kTrajectorySources{
    {"tracked", TrajectorySource::tracked}, {"ground_truth", TrajectorySource::ground_truth}};

struct Field {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

#define GR_DOUBLE(member)                                                                          \
  Field {                                                                                          \
    [](PipelineConfig& c, const std::string& v) { c.member = parse_double(#member, v); },          \
        [](const PipelineConfig& c) { return io::fmt(c.member); }                                  \
  }
#define GR_INT(member)                                                                                 \
  Field {                                                                                              \
    [](PipelineConfig& c, const std::string& v) { c.member = static_cast<decltype(c.member)>(parse_int(#member, v)); }, \
        [](const PipelineConfig& c) { return std::to_string(c.member); }                               \
  }
#define GR_BOOL(member)                                                                            \
  Field {                                                                                          \
    [](PipelineConfig& c, const std::string& v) { c.member = parse_bool(#member, v); },            \
        [](const PipelineConfig& c) { return std::string(c.member ? "true" : "false"); }           \
  }
#define GR_ENUM(member, table)                                                                     \
  Field {                                                                                          \
    [](PipelineConfig& c, const std::string& v) { c.member = parse_enum(#member, v, table); },     \
        [](const PipelineConfig& c) { return enum_name(c.member, table); }                         \
  }
#define GR_STRING(member)                                                                          \
  Field {                                                                                          \
    [](PipelineConfig& c, const std::string& v) { c.member = v; },                                 \
        [](const PipelineConfig& c) { return c.member; }                                           \
  }

inline const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table{
      {"fixture", GR_STRING(fixture)},
      {"seed", Field{[](PipelineConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
                     [](const PipelineConfig& c) { return std::to_string(c.seed); }}},
      {"num_frames", GR_INT(num_frames)},
      {"noise.depth_amplitude", GR_DOUBLE(depth_amplitude)},
      {"noise.flow_sigma", GR_DOUBLE(flow_sigma)},
      {"noise.pose_translation_sigma", GR_DOUBLE(pose_translation_sigma)},
      {"noise.pose_rotation_sigma", GR_DOUBLE(pose_rotation_sigma)},
      {"mode", GR_ENUM(mode, kModes)},
      {"inject_lost", Field{[](PipelineConfig& c, const std::string& v) { c.inject_lost = parse_int_list("inject_lost", v); },
                            [](const PipelineConfig& c) { return join(c.inject_lost); }}},
      {"refine.k_star", GR_INT(refine.k_star)},
      {"refine.k", GR_INT(refine.k)},
      {"refine.t_kf", GR_DOUBLE(refine.t_kf)},
      {"refine.t_frame", GR_DOUBLE(refine.t_frame)},
      {"refine.gate_enabled", GR_BOOL(refine.gate_enabled)},
      {"refine.lr", GR_DOUBLE(refine.lr)},
      {"refine.lambda_s", GR_DOUBLE(refine.weights.lambda_s)},
      {"refine.lambda_m", GR_DOUBLE(refine.weights.lambda_m)},
      {"refine.lambda_c", GR_DOUBLE(refine.weights.lambda_c)},
      {"refine.snippet_offsets",
       Field{[](PipelineConfig& c, const std::string& v) { c.refine.snippet_offsets = parse_int_list("refine.snippet_offsets", v); },
             [](const PipelineConfig& c) { return join(c.refine.snippet_offsets); }}},
      {"refine.keyframe_queue", GR_INT(refine.keyframe_queue)},
      {"refine.frame_queue", GR_INT(refine.frame_queue)},
      {"refine.composition", GR_ENUM(refine.composition, kCompositions)},
      {"refine.visibility_ratio", GR_DOUBLE(refine.visibility_ratio)},
      {"refine.max_backtracks", GR_INT(refine.max_backtracks)},
      {"refine.keyframes_only", GR_BOOL(refine.keyframes_only)},
      {"track.radius", GR_DOUBLE(track.flow.radius)},
      {"track.fb_threshold", GR_DOUBLE(track.flow.fb_threshold)},
      {"track.n_f_ratio", GR_DOUBLE(track.n_f_ratio)},
      {"track.min_obs", GR_INT(track.map_filter.min_obs)},
      {"track.max_err", GR_DOUBLE(track.map_filter.max_error)},
      {"track.scale_align_keyframes", GR_INT(track.scale_align_keyframes)},
      {"fusion.voxel_size", GR_DOUBLE(voxel_size)},
      {"fusion.truncation", GR_DOUBLE(truncation)},
      {"fusion.margin", GR_DOUBLE(fusion_margin)},
      {"fusion.include_frames", GR_BOOL(fuse_frames)},
      {"fusion.depth", GR_ENUM(fuse_depth, kDepthSources)},
      {"fusion.trajectory", GR_ENUM(fuse_trajectory, kTrajectorySources)},
      {"eval.align", GR_BOOL(eval_align)},
      {"eval.rpe_delta", GR_DOUBLE(rpe_delta)},
      {"out", GR_STRING(out)},
      {"dataset", GR_STRING(dataset)},
  };
  return table;
}

#undef GR_DOUBLE
#undef GR_INT
#undef GR_BOOL
#undef GR_ENUM
#undef GR_STRING

}  // namespace config_detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, f] : config_detail::fields()) keys.push_back(k);
  return keys;
}

inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = config_detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw Error(ErrorCode::config, "unknown config key '" + key + "'");
  it->second.set(cfg, value);
}

/// Applies `key = value` lines onto `cfg`. `#` starts a comment; `source` names the origin in errors.
inline void apply_config_text(PipelineConfig& cfg, const std::string& text, const std::string& source = "config") {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::config, source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const Error& e) {
      std::string msg = e.what();
      const std::string prefix = std::string(to_string(e.code())) + ": ";
      if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
      throw Error(ErrorCode::config, source + ":" + std::to_string(lineno) + ": " + msg);
    }
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error&) {
    throw Error(ErrorCode::config, "cannot read config file " + path.string());
  }
  apply_config_text(cfg, text, path.string());
  return cfg;
}

/// Canonical dump (sorted keys) that parses back to the same configuration.
inline std::string config_to_text(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : config_detail::fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace georefine
