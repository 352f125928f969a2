#pragma once

#include <string>

#include "grlb/dataset.hpp"
#include "grlb/diffusion.hpp"
#include "grlb/trainer.hpp"

namespace grlb::baseline {

// One-stage ablation g(I-, M): a single conditional diffusion model from
// masked RGB + mask + masked depth straight to the edited image. Shares
// the tensor/diffusion code paths with stage 2 so the comparison isolates
// the architecture.
Tensor make_condition(const Image& i_minus, const DepthMap& depth, const Mask& m);  // [1,5,H,W]

std::string train_onestage(const std::string& manifest_path, const TrainConfig& cfg,
                           const std::string& out_dir, const std::string& resume_path = "");

Image run_onestage(const ScoreModel& model, const diffusion::NoiseSchedule& sched,
                   const Image& i_minus, const DepthMap& depth, const Mask& m, int steps,
                   uint64_t seed);
Image run_onestage(const Checkpoint& ck, const Image& i_minus, const DepthMap& depth,
                   const Mask& m, int steps, uint64_t seed);

std::vector<Image> run_onestage_batch(const ScoreModel& model,
                                      const diffusion::NoiseSchedule& sched,
                                      const std::vector<const Image*>& i_minus,
                                      const std::vector<const DepthMap*>& depths,
                                      const std::vector<const Mask*>& masks, int steps,
                                      uint64_t seed);

}  // namespace grlb::baseline
