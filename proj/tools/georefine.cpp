#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "georefine/config.hpp"
#include "georefine/log.hpp"
#include "georefine/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  bool keyframes_only = false;
  std::string fixture;
  std::vector<std::string> overrides;
  std::string pred;
  std::string gt;
  bool align = false;
};

georefine::PipelineConfig resolve(const Flags& f) {
  using namespace georefine;
  PipelineConfig cfg = f.config.empty() ? PipelineConfig{} : load_config(f.config);
  for (const auto& kv : f.overrides) apply_config_text(cfg, kv, "--set");
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.mode.empty()) set_config_value(cfg, "mode", f.mode);
  if (!f.fixture.empty()) cfg.fixture = f.fixture;
  if (f.keyframes_only) cfg.refine.keyframes_only = true;
  if (f.align) cfg.eval_align = true;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online depth refinement on synthetic SLAM sequences"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "key = value config file");
  app.add_option("--seed", f.seed, "64-bit seed for every random stream");
  app.add_option("--out", f.out, "output directory");
  app.add_option("--mode", f.mode, "tracking mode")->check(CLI::IsMember({"monocular", "prgbd"}));
  app.add_flag("--keyframes-only", f.keyframes_only, "skip per-frame refinement and fuse keyframes only");
  app.add_option("--set", f.overrides, "override one config entry, KEY=VALUE (repeatable)");

  auto* synth = app.add_subcommand("synth", "generate a dataset");
  synth->add_option("--fixture", f.fixture, "standard | pure_rotation | static | uniform");
  app.add_subcommand("track", "track the dataset, write trajectory and map points");
  app.add_subcommand("refine", "refine keyframe depths from tracking outputs");
  app.add_subcommand("fuse", "fuse depths into mesh.ply");
  auto* eval = app.add_subcommand("eval", "depth and trajectory metrics");
  eval->add_option("--pred", f.pred, "directory of predicted depth_<id>.pfm");
  eval->add_option("--gt", f.gt, "directory of ground-truth depth_<id>.pfm");
  eval->add_flag("--align", f.align, "per-frame median scaling");
  auto* pipeline = app.add_subcommand("pipeline", "synth, track + refine, fuse, eval");
  pipeline->add_option("--fixture", f.fixture, "standard | pure_rotation | static | uniform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  using namespace georefine;
  try {
    const PipelineConfig cfg = resolve(f);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") {
      pipeline::cmd_synth(cfg);
    } else if (cmd == "track") {
      pipeline::cmd_track(cfg);
    } else if (cmd == "refine") {
      pipeline::cmd_refine(cfg);
    } else if (cmd == "fuse") {
      pipeline::cmd_fuse(cfg);
    } else if (cmd == "eval") {
      pipeline::cmd_eval(cfg, f.pred, f.gt);
    } else {
      pipeline::cmd_pipeline(cfg);
    }
  } catch (const Error& e) {
    log::error(e.what());
    return e.code() == ErrorCode::config ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitRuntime;
  }
  return 0;
}
