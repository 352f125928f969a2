#pragma once

#include <string>

#include "grlb/dataset.hpp"
#include "grlb/diffusion.hpp"
#include "grlb/geometry.hpp"
#include "grlb/trainer.hpp"

namespace grlb::stage2 {

enum class Direction { kRemoval, kInsertion };

// Conditioning is a 9-channel stack: source RGB, colorized source depth,
// colorized target depth. The 3 target RGB channels are what gets noised
// and denoised. Removal: src = (I-, x0-), target (I+, x0+); insertion
// swaps the roles.
struct CompositeExample {
    Tensor cond;    // [1,9,H,W] normalized
    Tensor target;  // [1,3,H,W] normalized
    Direction direction = Direction::kRemoval;
};

CompositeExample build_composite(const scenegen::PairedSample& sample, Direction direction);

// Conditioning stack from raw fields (used at inference).
Tensor make_condition(const Image& i_src, const DepthMap& x_src, const DepthMap& x_tgt);

enum class RenderMode { kBidirectional, kRemovalOnly, kInsertionOnly };

struct RenderLoss {
    Tensor loss;  // sum of the per-direction DSM terms
    double l_removal = 0.0;
    double l_insertion = 0.0;
};

// Every sample in the batch contributes its removal and/or insertion
// direction according to mode; bidirectional is the exact sum of the two
// single-direction terms for the same RNG draws (removal consumes first).
RenderLoss render_loss(const ScoreModel& model, const std::vector<scenegen::PairedSample>& batch,
                       const diffusion::NoiseSchedule& sched, Rng& rng, RenderMode mode);

std::string train_stage2(const std::string& manifest_path, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path = "");

// Full-image RGB sample conditioned on (I_src, x_src, x_tgt); no mask
// constraint is applied (the whole image may change). Output in [0,1].
Image render_appearance(const ScoreModel& model, const diffusion::NoiseSchedule& sched,
                        const Image& i_src, const DepthMap& x_src, const DepthMap& x_tgt,
                        int steps, uint64_t seed);
Image render_appearance(const Checkpoint& ck, const Image& i_src, const DepthMap& x_src,
                        const DepthMap& x_tgt, int steps, uint64_t seed);

std::vector<Image> render_appearance_batch(const ScoreModel& model,
                                           const diffusion::NoiseSchedule& sched,
                                           const std::vector<const Image*>& i_src,
                                           const std::vector<const DepthMap*>& x_src,
                                           const std::vector<const DepthMap*>& x_tgt, int steps,
                                           uint64_t seed);

// Width-concatenated triptych [colorize(x_tgt) | colorize(x_src) | rgb]
// for visual inspection of the conditioning.
Image composite_panel(const Image& rgb, const DepthMap& x_src, const DepthMap& x_tgt);

}  // namespace grlb::stage2
