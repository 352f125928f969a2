#pragma once

#include <optional>
#include <string>

#include "grlb/baseline.hpp"
#include "grlb/report.hpp"
#include "grlb/stage1.hpp"
#include "grlb/stage2.hpp"

namespace grlb::pipeline {

struct RemoveOptions {
    int steps = 50;
    uint64_t seed = 0;
    bool fill_in = false;
    int fill_window = 10;
    // The fill-in auto-trigger: apply it when the stage-1 edit moved the
    // masked depth by less than this mean absolute amount.
    float fill_trigger = 0.01f;
    // When set, used in place of the stage-1 sampler output (mask-aligned
    // against the input first). This makes degenerate-edit scenarios
    // scriptable end to end.
    const DepthMap* stage1_override = nullptr;
};

struct RemoveResult {
    Image output;
    DepthMap stage1_out;   // the depth stage 2 was conditioned on
    bool fill_in_applied = false;
};

// Full two-stage removal: remove_geometry, optional fill-in remedy,
// render_appearance.
RemoveResult remove_single(const ScoreModel& s1, const diffusion::NoiseSchedule& sched1,
                           const ScoreModel& s2, const diffusion::NoiseSchedule& sched2,
                           const Image& image, const DepthMap& depth, const Mask& mask,
                           const RemoveOptions& opts);

// Runs the two-stage pipeline over every sample of a manifest split,
// writing run_dir/<id>/{stage1.png,output.png}. Batched sampling; one RNG
// stream seeded from opts.seed. Returns the run directory.
std::string run_split(const std::string& manifest_path, const std::string& split,
                      const Checkpoint& ck1, const Checkpoint& ck2, const std::string& run_dir,
                      const RemoveOptions& opts, int limit = -1);

// One-stage counterpart (writes output.png only).
std::string run_split_onestage(const std::string& manifest_path, const std::string& split,
                               const Checkpoint& ck, const std::string& run_dir,
                               const RemoveOptions& opts, int limit = -1);

struct AblateConfig {
    TrainConfig stage1;
    TrainConfig stage2;
    std::vector<float> lambdas = {0.0f, 0.05f, 0.1f, 0.5f};
    bool include_onestage = true;
    bool include_unidirectional = true;
    int eval_steps = 50;
    uint64_t eval_seed = 0;
    int eval_limit = -1;  // cap on evaluated validation samples
};

// Lambda sweep + one-stage + unidirectional stage-2 grid. Trains each
// variant, evaluates on the val split, and writes comparison.{json,txt}
// under out_dir.
nlohmann::json ablate(const std::string& manifest_path, const AblateConfig& cfg,
                      const std::string& out_dir);

}  // namespace grlb::pipeline
