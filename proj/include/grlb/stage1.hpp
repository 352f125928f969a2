#pragma once

#include <string>

#include "grlb/dataset.hpp"
#include "grlb/diffusion.hpp"
#include "grlb/geometry.hpp"
#include "grlb/trainer.hpp"

namespace grlb::stage1 {

// -log sigmoid(r+ - r-) on a raw reward gap.
double bt_loss_from_gap(double gap);

// Rewards are r = -flow_loss(x_hat, x). Scalar reference version.
double bt_loss(const DepthMap& x0_hat, const DepthMap& x0_plus, const DepthMap& x0_minus);

// Differentiable version over [1,1,H,W] tensors (normalized panels).
Tensor bt_loss_t(const Tensor& x0_hat, const Tensor& x0_plus, const Tensor& x0_minus);

// Conditioning channels for geometry removal: (M, (1-M) * x0), with the
// depth panel normalized first. [N,2,H,W].
Tensor make_condition(const Tensor& x0_minus_norm, const Tensor& mask);

struct Stage1Loss {
    Tensor loss;
    double l_dsm = 0.0;
    double l_bt = 0.0;
};

// L = L_DSM + lambda * L_BT. The DSM term targets the object-removed depth
// under c = (M, (1-M)*x0). The BT term reuses the same drawn t and the
// single-step x0 prediction; pairs whose positive/negative flows already
// agree (flow_loss < 1e-6 on the [0,1] depth scale) contribute 0.
Stage1Loss total_loss(const ScoreModel& model, const std::vector<scenegen::PairedSample>& batch,
                      float lambda_bt, const diffusion::NoiseSchedule& sched, Rng& rng);

// Trains s_theta on the manifest's train split; returns the final
// checkpoint path. Resumable (byte-identical continuation under the same
// seed).
std::string train_stage1(const std::string& manifest_path, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path = "");

// Depth-space object removal. Output equals the input bit-exactly outside
// the mask. Throws on an empty mask.
DepthMap remove_geometry(const ScoreModel& model, const diffusion::NoiseSchedule& sched,
                         const DepthMap& depth, const Mask& m, int steps, uint64_t seed);
DepthMap remove_geometry(const Checkpoint& ck, const DepthMap& depth, const Mask& m, int steps,
                         uint64_t seed);

// Batched variant: one sampler pass over several inputs (shared RNG
// stream; deterministic for a fixed batch composition).
std::vector<DepthMap> remove_geometry_batch(const ScoreModel& model,
                                            const diffusion::NoiseSchedule& sched,
                                            const std::vector<const DepthMap*>& depths,
                                            const std::vector<const Mask*>& masks, int steps,
                                            uint64_t seed);

}  // namespace grlb::stage1
