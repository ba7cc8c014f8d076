#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <vector>

#include "georefine/geometry.hpp"
#include "georefine/image.hpp"
#include "georefine/log.hpp"
#include "georefine/losses.hpp"

namespace georefine::refine {

struct RefinementConfig {
  int k_star = 3;         // steps per keyframe
  int k = 1;              // steps per non-keyframe
  double t_kf = 0.05;     // keyframe translation gate (m)
  double t_frame = 0.01;  // per-frame translation gate (m)
  bool gate_enabled = true;
  double lr = 0.06;
  LossWeights weights;
  std::vector<int> snippet_offsets{-9, -6, -3, 1};
  std::size_t keyframe_queue = 11;
  std::size_t frame_queue = 2;
  ConsistencyComposition composition = ConsistencyComposition::minimum;
  double visibility_ratio = 0.65;  // photometric occlusion test, 0 disables
  int max_backtracks = 6;  // halvings of a rejected update; 0 applies plain ADAM steps
  bool keyframes_only = false;

  void validate() const {
    if (k_star < 1 || k < 0) throw Error(ErrorCode::config, "k_star must be >= 1 and k >= 0");
    if (!(t_kf >= 0.0) || !(t_frame >= 0.0)) throw Error(ErrorCode::config, "gates must be nonnegative");
    if (!(lr > 0.0)) throw Error(ErrorCode::config, "lr must be positive");
    if (keyframe_queue < 1 || frame_queue < 1) throw Error(ErrorCode::config, "queues need capacity");
    if (snippet_offsets.empty()) throw Error(ErrorCode::config, "snippet offsets are empty");
    if (max_backtracks < 0) throw Error(ErrorCode::config, "max_backtracks must be nonnegative");
    if (!(visibility_ratio >= 0.0 && visibility_ratio < 1.0)) {
      throw Error(ErrorCode::config, "visibility_ratio must be in [0, 1)");
    }
    weights.validate();
  }
};

struct KeyframeRecord {
  int frame_id = 0;
  double timestamp = 0.0;
  std::shared_ptr<const ImageGrid> image;
  SE3Pose pose;
  std::vector<MapPointObservation> map_obs;
  int depth_grid_ref = -1;  // key of the optimized grid (the frame id)
};

/// Bounded FIFO with strictly increasing timestamps.
class DataQueue {
 public:
  explicit DataQueue(std::size_t capacity = 11) : capacity_(capacity) {}

  /// Appends `rec`; returns the evicted record when the queue overflows.
  std::optional<KeyframeRecord> enqueue(KeyframeRecord rec) {
    if (!entries_.empty() && !(rec.timestamp > entries_.back().timestamp)) {
      throw Error(ErrorCode::ordering, "queue timestamps must be strictly increasing");
    }
    entries_.push_back(std::move(rec));
    if (entries_.size() > capacity_) {
      KeyframeRecord evicted = std::move(entries_.front());
      entries_.pop_front();
      return evicted;
    }
    return std::nullopt;
  }

  void clear() { entries_.clear(); }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t capacity() const noexcept { return capacity_; }
  const std::deque<KeyframeRecord>& entries() const noexcept { return entries_; }
  std::deque<KeyframeRecord>& entries() noexcept { return entries_; }

  long position(int frame_id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].frame_id == frame_id) return static_cast<long>(i);
    }
    return -1;
  }

  const KeyframeRecord* find(int frame_id) const {
    const long p = position(frame_id);
    return p < 0 ? nullptr : &entries_[static_cast<std::size_t>(p)];
  }

 private:
  std::size_t capacity_;
  std::deque<KeyframeRecord> entries_;
};

/// True iff the translation of `pose_rel` exceeds the gate.
inline bool select_keyframe(const SE3Pose& pose_rel, double gate) { return pose_rel.translation().norm() > gate; }

enum class SnippetMode { keyframe, per_frame };

/// Keyframe mode: queue entries at the given offsets from the target (in keyframe indices).
/// Offsets past the oldest entry clamp to it; offsets past the newest, or landing on the target,
/// fall back to the nearest older entry. Duplicates are dropped and the set is topped up with the
/// nearest remaining entries until it has two sources. Per-frame mode: the three most recent
/// keyframes plus the other frame of the per-frame queue.
inline SnippetFrameSet build_snippet(const DataQueue& keyframes, const DataQueue& frames, int target_id,
                                     SnippetMode mode, std::span<const int> offsets) {
  SnippetFrameSet s;
  s.target_id = target_id;
  auto add = [&](int id) {
    if (id != target_id && std::find(s.source_ids.begin(), s.source_ids.end(), id) == s.source_ids.end()) {
      s.source_ids.push_back(id);
    }
  };
  if (mode == SnippetMode::keyframe) {
    const long p = keyframes.position(target_id);
    if (p < 0) throw Error(ErrorCode::snippet_unavailable, "target is not a buffered keyframe");
    const long n = static_cast<long>(keyframes.size());
    const auto& e = keyframes.entries();
    for (int o : offsets) {
      long q = p + o;
      if (q < 0) q = 0;
      if (q >= n) q = n - 1;
      if (q == p) q = p - 1;
      if (q < 0) continue;
      add(e[static_cast<std::size_t>(q)].frame_id);
    }
    for (long d = 1; s.source_ids.size() < 2 && d < n; ++d) {
      if (p - d >= 0) add(e[static_cast<std::size_t>(p - d)].frame_id);
      if (s.source_ids.size() < 2 && p + d < n) add(e[static_cast<std::size_t>(p + d)].frame_id);
    }
  } else {
    const auto& e = keyframes.entries();
    int taken = 0;
    for (auto it = e.rbegin(); it != e.rend() && taken < 3; ++it) {
      if (it->frame_id == target_id) continue;
      add(it->frame_id);
      ++taken;
    }
    for (const auto& r : frames.entries()) add(r.frame_id);
  }
  if (s.source_ids.size() < 2) throw Error(ErrorCode::snippet_unavailable, "fewer than two usable sources");
  return s;
}

/// Optimized log-depth with its validity mask.
struct LogDepthGrid {
  Grid<double> log_depth;
  Mask valid;

  static constexpr double kMinDepth = 1e-3;
  static constexpr double kMaxDepth = 1e3;

  static LogDepthGrid from_depth(const DepthMap& d) {
    LogDepthGrid g{Grid<double>(d.width(), d.height(), 0.0), d.valid};
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      if (d.valid[i]) g.log_depth[i] = std::clamp(std::log(d.values[i]), std::log(kMinDepth), std::log(kMaxDepth));
    }
    return g;
  }

  DepthMap depth() const {
    DepthMap d(log_depth.width(), log_depth.height());
    for (std::size_t i = 0; i < log_depth.size(); ++i) {
      if (valid[i]) {
        d.values[i] = std::exp(log_depth[i]);
        d.valid[i] = 1;
      }
    }
    return d;
  }
};

struct AdamState {
  Grid<double> m;
  Grid<double> v;
  long t = 0;

  static AdamState like(const LogDepthGrid& g) {
    return {Grid<double>(g.log_depth.width(), g.log_depth.height(), 0.0),
            Grid<double>(g.log_depth.width(), g.log_depth.height(), 0.0), 0};
  }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One bias-corrected ADAM update; returns the update applied to each entry (after clamping).
/// Non-finite gradient entries are zeroed and counted in `nonfinite`.
inline Grid<double> adam_step(LogDepthGrid& grid, const DepthGradient& grad, AdamState& state, double lr,
                              std::size_t* nonfinite = nullptr) {
  if (!grad.same_shape(grid.log_depth) || !state.m.same_shape(grid.log_depth)) {
    throw Error(ErrorCode::resolution_mismatch, "gradient, state and grid differ in shape");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  const double lo = std::log(LogDepthGrid::kMinDepth);
  const double hi = std::log(LogDepthGrid::kMaxDepth);
  std::size_t bad = 0;
  Grid<double> delta(grid.log_depth.width(), grid.log_depth.height(), 0.0);
  for (std::size_t i = 0; i < grid.log_depth.size(); ++i) {
    double g = grad[i];
    if (!std::isfinite(g)) {
      g = 0.0;
      ++bad;
    }
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g * g;
    if (!grid.valid[i]) continue;
    const double step = -lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + kAdamEps);
    const double next = std::clamp(grid.log_depth[i] + step, lo, hi);
    delta[i] = next - grid.log_depth[i];
    grid.log_depth[i] = next;
  }
  if (bad > 0) log::warn("adam_step zeroed " + std::to_string(bad) + " non-finite gradient entries");
  if (nonfinite != nullptr) *nonfinite = bad;
  return delta;
}

struct StepRecord {
  int frame_id = 0;
  int step = 0;
  LossBreakdown loss;
  bool keyframe = true;
};

/// A tracked frame handed to the refiner.
struct FrameData {
  int frame_id = 0;
  double timestamp = 0.0;
  std::shared_ptr<const ImageGrid> image;
  SE3Pose pose;
  std::vector<MapPointObservation> map_obs;
  DepthMap initial_depth;  // the depth prediction this frame starts from
};

/// Forward-warps `depth` from `from_pose` into `to_pose` (z-buffered, nearest pixel) and fills holes
/// inside `valid` from the nearest warped pixel.
inline DepthMap forward_warp_depth(const DepthMap& depth, const SE3Pose& from_pose, const SE3Pose& to_pose,
                                   const CameraIntrinsics& k, const Mask& valid) {
  const int w = k.width;
  const int h = k.height;
  DepthMap out(w, h);
  const SE3Pose t = relative_pose(from_pose, to_pose);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const Vec3 p = t * backproject(k, Vec2(x, y), depth.values(x, y));
      if (!(p.z() > 0.0)) continue;
      const Vec2 q = project(k, p);
      const long u = std::lround(q.x());
      const long v = std::lround(q.y());
      if (u < 0 || v < 0 || u >= w || v >= h) continue;
      const int ui = static_cast<int>(u), vi = static_cast<int>(v);
      if (!out.is_valid(ui, vi) || p.z() < out.values(ui, vi)) out.set(ui, vi, p.z());
    }
  }
  // Multi-source BFS hole filling restricted to `valid`.
  std::queue<std::size_t> frontier;
  DepthMap filled = out;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (out.valid[i]) frontier.push(i);
  }
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop();
    const int x = static_cast<int>(i % w);
    const int y = static_cast<int>(i / w);
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int n = 0; n < 4; ++n) {
      if (nx[n] < 0 || ny[n] < 0 || nx[n] >= w || ny[n] >= h) continue;
      const std::size_t j = filled.values.index(nx[n], ny[n]);
      if (filled.valid[j] || !valid[j]) continue;
      filled.values[j] = filled.values[i];
      filled.valid[j] = 1;
      frontier.push(j);
    }
  }
  for (std::size_t i = 0; i < filled.values.size(); ++i) {
    if (!valid[i]) {
      filled.valid[i] = 0;
      filled.values[i] = 0.0;
    }
  }
  return filled;
}

/// Online refinement loop: keyframe and per-frame queues, per-frame log-depth grids with their
/// own ADAM states, and the published refined depths.
class Refiner {
 public:
  using MapObsProvider = std::function<std::vector<MapPointObservation>(int frame_id)>;
  /// Called with every newly published depth (keyframe or per-frame).
  using PublishHook = std::function<void(int frame_id, bool keyframe, const DepthMap& depth)>;
  /// Returns a depth published by an earlier run; the target then skips its steps.
  using RestoreProvider = std::function<std::optional<DepthMap>(int frame_id, bool keyframe)>;

  Refiner(CameraIntrinsics k, RefinementConfig cfg)
      : k_(k), cfg_(std::move(cfg)), keyframes_(cfg_.keyframe_queue), frames_(cfg_.frame_queue) {
    cfg_.validate();
  }

  /// Refreshes a target's map-point observations right before it is refined.
  void set_map_obs_provider(MapObsProvider p) { map_obs_provider_ = std::move(p); }
  void set_publish_hook(PublishHook h) { publish_hook_ = std::move(h); }
  void set_restore_provider(RestoreProvider p) { restore_ = std::move(p); }

  /// Feeds one successfully tracked frame.
  void on_frame(const FrameData& f) {
    const KeyframeRecord rec{f.frame_id, f.timestamp, f.image, f.pose, f.map_obs, f.frame_id};
    initial_[f.frame_id] = f.initial_depth;
    if (!anchor_) {
      anchor_ = rec;
      anchor_enqueued_ = false;
      last_kf_pose_ = f.pose;
      push_frame(rec, f);
      return;
    }
    const bool is_keyframe = !cfg_.gate_enabled || select_keyframe(relative_pose(last_kf_pose_, f.pose), cfg_.t_kf);
    if (is_keyframe) {
      if (!anchor_enqueued_) {
        add_keyframe(*anchor_);
        anchor_enqueued_ = true;
      }
      add_keyframe(rec);
      last_kf_pose_ = f.pose;
      push_frame(rec, f);
      // Every pending target that now has a newer keyframe gets its refinement round.
      // A target whose snippet is still too small waits for more keyframes.
      while (!pending_.empty() && pending_.front() != keyframes_.entries().back().frame_id) {
        const int target = pending_.front();
        if (!snippet_for(target)) break;
        pending_.pop_front();
        refine_keyframe(target);
      }
    } else {
      const bool moved = last_frame_pose_ && select_keyframe(relative_pose(*last_frame_pose_, f.pose), cfg_.t_frame);
      push_frame(rec, f);
      if (!cfg_.keyframes_only && cfg_.k > 0) {
        if (moved) refine_frame(f);
        else ++frames_skipped_;
      }
    }
  }

  /// End of input: remaining targets are refined with whatever snippet is available.
  void finish() {
    while (!pending_.empty()) {
      const int target = pending_.front();
      pending_.pop_front();
      refine_keyframe(target);
    }
  }

  /// Tracking failure: both queues are emptied and unpublished grids dropped; published depths stay.
  void handle_slam_failure() {
    for (const auto& r : keyframes_.entries()) drop_grid(r.frame_id);
    for (const auto& r : frames_.entries()) {
      if (!published_.count(r.frame_id)) drop_grid(r.frame_id);
    }
    keyframes_.clear();
    frames_.clear();
    pending_.clear();
    anchor_.reset();
    anchor_enqueued_ = false;
    last_frame_pose_.reset();
    ++failures_;
  }

  /// Scale applied by the tracker to the map and trajectory; buffered poses follow.
  void rescale(double s) {
    auto scale = [&](SE3Pose& p) { p.set_translation(s * p.translation()); };
    for (auto& r : keyframes_.entries()) scale(r.pose);
    for (auto& r : frames_.entries()) scale(r.pose);
    if (anchor_) scale(anchor_->pose);
    scale(last_kf_pose_);
    if (last_frame_pose_) scale(*last_frame_pose_);
  }

  /// Runs K* steps on a buffered keyframe and publishes its depth. Returns false if skipped.
  bool refine_keyframe(int target) {
    const auto snippet = snippet_for(target);
    if (!snippet) {
      ++keyframes_skipped_;
      log::debug("keyframe " + std::to_string(target) + ": snippet unavailable");
      return false;
    }
    if (auto restored = restore_ ? restore_(target, true) : std::nullopt) {
      grids_[target] = LogDepthGrid::from_depth(*restored);
      published_[target] = std::move(*restored);
      ++keyframes_restored_;
      return true;
    }
    const KeyframeRecord* rec = keyframes_.find(target);
    run_steps(*rec, *snippet, cfg_.k_star, true);
    published_[target] = grids_.at(target).depth();
    ++keyframes_refined_;
    if (publish_hook_) publish_hook_(target, true, published_[target]);
    return true;
  }

  const std::map<int, DepthMap>& published() const noexcept { return published_; }
  const std::map<int, DepthMap>& published_frames() const noexcept { return published_frames_; }
  const std::vector<StepRecord>& log_records() const noexcept { return log_; }
  const DataQueue& keyframe_queue() const noexcept { return keyframes_; }
  const DataQueue& frame_queue() const noexcept { return frames_; }
  const std::map<int, LogDepthGrid>& grids() const noexcept { return grids_; }
  const RefinementConfig& config() const noexcept { return cfg_; }
  int steps_executed() const noexcept { return steps_; }
  int keyframes_refined() const noexcept { return keyframes_refined_; }
  int keyframes_skipped() const noexcept { return keyframes_skipped_; }
  int frames_refined() const noexcept { return frames_refined_; }
  int frames_skipped() const noexcept { return frames_skipped_; }
  int keyframes_created() const noexcept { return keyframes_created_; }
  int failures() const noexcept { return failures_; }
  int keyframes_restored() const noexcept { return keyframes_restored_; }
  int frames_restored() const noexcept { return frames_restored_; }

  /// Latest depth of a frame: refined grid, else the initial prediction.
  const DepthMap* current_depth(int frame_id) const {
    if (auto it = published_.find(frame_id); it != published_.end()) return &it->second;
    if (auto it = published_frames_.find(frame_id); it != published_frames_.end()) return &it->second;
    if (auto it = initial_.find(frame_id); it != initial_.end()) return &it->second;
    return nullptr;
  }

 private:
  void add_keyframe(const KeyframeRecord& rec) {
    if (auto evicted = keyframes_.enqueue(rec)) {
      pending_.erase(std::remove(pending_.begin(), pending_.end(), evicted->frame_id), pending_.end());
      drop_grid(evicted->frame_id);
    }
    if (!grids_.count(rec.frame_id)) {
      grids_[rec.frame_id] = LogDepthGrid::from_depth(initial_.at(rec.frame_id));
      adam_[rec.frame_id] = AdamState::like(grids_[rec.frame_id]);
    }
    pending_.push_back(rec.frame_id);
    ++keyframes_created_;
  }

  std::optional<SnippetFrameSet> snippet_for(int target) const {
    try {
      return build_snippet(keyframes_, frames_, target, SnippetMode::keyframe, cfg_.snippet_offsets);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::snippet_unavailable) throw;
      return std::nullopt;
    }
  }

  void push_frame(const KeyframeRecord& rec, const FrameData& f) {
    frames_.enqueue(rec);
    last_frame_pose_ = f.pose;
  }

  void drop_grid(int id) {
    grids_.erase(id);
    adam_.erase(id);
  }

  const DepthMap& source_depth(int id, std::map<int, DepthMap>& cache) {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    if (auto g = grids_.find(id); g != grids_.end()) return cache[id] = g->second.depth();
    if (auto p = published_frames_.find(id); p != published_frames_.end()) return cache[id] = p->second;
    return cache[id] = initial_.at(id);
  }

  const KeyframeRecord* find_record(int id) const {
    if (const auto* r = keyframes_.find(id)) return r;
    return frames_.find(id);
  }

  void run_steps(const KeyframeRecord& target, const SnippetFrameSet& snippet, int steps, bool keyframe) {
    std::map<int, DepthMap> depth_cache;
    std::vector<SourceView> sources;
    for (int id : snippet.source_ids) {
      const KeyframeRecord* r = find_record(id);
      if (r == nullptr) {
        sources.push_back({id, nullptr, nullptr, SE3Pose()});
        continue;
      }
      sources.push_back({id, r->image.get(), &source_depth(id, depth_cache), r->pose});
    }
    std::vector<MapPointObservation> obs = target.map_obs;
    if (map_obs_provider_) obs = map_obs_provider_(target.frame_id);

    LogDepthGrid& grid = grids_.at(target.frame_id);
    AdamState& state = adam_.at(target.frame_id);
    auto evaluate = [&](const DepthMap& d) {
      LossInput in;
      in.image = target.image.get();
      in.depth = &d;
      in.pose = target.pose;
      in.sources = sources;
      in.observations = obs;
      in.intrinsics = &k_;
      in.composition = cfg_.composition;
      in.visibility_ratio = cfg_.visibility_ratio;
      return total_loss(in, cfg_.weights);
    };
    DepthMap depth = grid.depth();
    TotalLoss current = evaluate(depth);
    for (int step = 0; step < steps; ++step) {
      log_.push_back({target.frame_id, step, current.breakdown, keyframe});
      const Grid<double> before = grid.log_depth;
      const Grid<double> delta = adam_step(grid, current.gradient, state, cfg_.lr);
      ++steps_;
      DepthMap trial = grid.depth();
      TotalLoss next = evaluate(trial);
      // Safeguard: an update that raises the loss is halved until it does not, else undone.
      for (int b = 0; cfg_.max_backtracks > 0 && next.breakdown.total > current.breakdown.total; ++b) {
        if (b == cfg_.max_backtracks) {
          grid.log_depth = before;
          trial = grid.depth();
          next = current;
          break;
        }
        const double f = std::ldexp(1.0, -(b + 1));
        for (std::size_t i = 0; i < delta.size(); ++i) grid.log_depth[i] = before[i] + f * delta[i];
        trial = grid.depth();
        next = evaluate(trial);
      }
      current = std::move(next);
    }
    log_.push_back({target.frame_id, steps, current.breakdown, keyframe});
  }

  void refine_frame(const FrameData& f) {
    SnippetFrameSet snippet;
    try {
      snippet = build_snippet(keyframes_, frames_, f.frame_id, SnippetMode::per_frame, cfg_.snippet_offsets);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::snippet_unavailable) throw;
      ++frames_skipped_;
      return;
    }
    if (auto restored = restore_ ? restore_(f.frame_id, false) : std::nullopt) {
      published_frames_[f.frame_id] = std::move(*restored);
      ++frames_restored_;
      return;
    }
    // Warm start from the nearest keyframe's current depth.
    const KeyframeRecord* nearest = nullptr;
    for (const auto& r : keyframes_.entries()) {
      if (!nearest || std::abs(r.frame_id - f.frame_id) < std::abs(nearest->frame_id - f.frame_id)) nearest = &r;
    }
    DepthMap init = f.initial_depth;
    if (nearest != nullptr && grids_.count(nearest->frame_id)) {
      const DepthMap warped =
          forward_warp_depth(grids_.at(nearest->frame_id).depth(), nearest->pose, f.pose, k_, f.initial_depth.valid);
      if (warped.valid_count() > 0) init = warped;
    }
    grids_[f.frame_id] = LogDepthGrid::from_depth(init);
    adam_[f.frame_id] = AdamState::like(grids_[f.frame_id]);
    const KeyframeRecord* rec = frames_.find(f.frame_id);
    run_steps(*rec, snippet, cfg_.k, false);
    published_frames_[f.frame_id] = grids_.at(f.frame_id).depth();
    grids_.erase(f.frame_id);
    adam_.erase(f.frame_id);
    ++frames_refined_;
    if (publish_hook_) publish_hook_(f.frame_id, false, published_frames_[f.frame_id]);
  }

  CameraIntrinsics k_;
  RefinementConfig cfg_;
  DataQueue keyframes_;
  DataQueue frames_;
  std::deque<int> pending_;
  std::optional<KeyframeRecord> anchor_;
  bool anchor_enqueued_ = false;
  SE3Pose last_kf_pose_;
  std::optional<SE3Pose> last_frame_pose_;
  std::map<int, LogDepthGrid> grids_;
  std::map<int, AdamState> adam_;
  std::map<int, DepthMap> initial_;
  std::map<int, DepthMap> published_;
  std::map<int, DepthMap> published_frames_;
  std::vector<StepRecord> log_;
  MapObsProvider map_obs_provider_;
  PublishHook publish_hook_;
  RestoreProvider restore_;
  int steps_ = 0;
  int keyframes_refined_ = 0;
  int keyframes_skipped_ = 0;
  int frames_refined_ = 0;
  int frames_skipped_ = 0;
  int keyframes_created_ = 0;
  int failures_ = 0;
  int keyframes_restored_ = 0;
  int frames_restored_ = 0;
};

}  // namespace georefine::refine
