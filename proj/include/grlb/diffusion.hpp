#pragma once

#include <optional>
#include <vector>

#include "grlb/nn.hpp"
#include "grlb/rng.hpp"
#include "grlb/tensor.hpp"

namespace grlb::diffusion {

// Linear beta schedule. Index t runs 1..T; alpha_bar(0) == 1 by convention.
// The per-timestep loss weighting w(t) is identically 1 (epsilon
// parameterization).
struct NoiseSchedule {
    int T = 200;
    std::vector<float> beta;       // [T+1], beta[0] unused
    std::vector<float> alpha_bar;  // [T+1], alpha_bar[0] = 1

    static NoiseSchedule linear(int T = 200, float beta_min = 1e-4f, float beta_max = 0.02f);
    float w(int) const { return 1.0f; }
    void check_t(int t) const;
};

// x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);

// Per-example timesteps; plain data computation (no graph).
Tensor noised_batch(const Tensor& x0, const std::vector<int>& ts, const Tensor& eps,
                    const NoiseSchedule& sched);

// x0_hat = (x_t - sqrt(1-alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t),
// clamped to [-3,3] in normalized units. Differentiable through eps_hat.
Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched);

struct DsmResult {
    Tensor loss;     // scalar
    Tensor x_t;      // noised input (data)
    Tensor eps;      // true noise (data)
    Tensor eps_hat;  // model output (graph)
    std::vector<int> ts;
};

// Denoising objective: the model predicts eps from (x_t, cond) at a
// uniformly drawn t per example, with w(t) = 1. This epsilon-MSE form is
// the standard reweighting of the score-matching objective: the true score
// of q(x_t|x0) is -eps / sqrt(1-alpha_bar_t), so matching it in L2 equals
// eps-prediction up to the per-t factor absorbed into w(t).
DsmResult dsm_loss(const ScoreModel& model, const Tensor& x0, const Tensor& cond,
                   const NoiseSchedule& sched, Rng& rng);

struct KnownRegion {
    Tensor x_known;  // [N,C,H,W] normalized
    Tensor mask;     // [N,1,H,W] in {0,1}; 1 = free to edit, 0 = known
};

// Ancestral DDPM sampling from pure noise, conditioned on `cond` (attached
// un-noised on every step). With `known`, after each step the unmasked
// region is overwritten with q_sample(x_known, t_prev); the final output
// passes through a hard replacement. steps <= T selects an evenly strided
// timestep subsequence (steps == T is the full chain).
Tensor sample(const ScoreModel& model, const Tensor& cond,
              const std::optional<KnownRegion>& known, int steps, uint64_t seed,
              const NoiseSchedule& sched);

}  // namespace grlb::diffusion
