#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "grlb/rng.hpp"
#include "grlb/tensor.hpp"

namespace grlb {

// Small U-shaped conv denoiser: three resolution levels, one conv block per
// level on each side, timestep embedding added per level, skip connections
// by channel concat. in/out channel counts come from the use-site.
struct ArchDescriptor {
    int in_channels = 3;
    int out_channels = 1;
    int base_width = 32;
    std::vector<int> widths = {32, 48, 64};  // per level; divisible by groups
    int temb_dim = 64;
    int groups = 8;

    bool operator==(const ArchDescriptor&) const = default;
};

class ScoreModel {
public:
    ScoreModel(ArchDescriptor arch, uint64_t init_seed);

    // x: [N, in_channels, H, W] with H, W divisible by 4; t: one timestep
    // index per example. Returns [N, out_channels, H, W].
    Tensor forward(const Tensor& x, const std::vector<int>& t) const;

    std::vector<std::pair<std::string, Tensor>>& params() { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
    const ArchDescriptor& arch() const { return arch_; }
    int64_t param_count() const;
    void zero_grad();

private:
    const Tensor& p(const std::string& name) const;

    ArchDescriptor arch_;
    std::vector<std::pair<std::string, Tensor>> params_;
    std::map<std::string, size_t> index_;
};

struct ScheduleParams {
    int T = 200;
    float beta_min = 1e-4f;
    float beta_max = 0.02f;
};

// Versioned binary container ("GRLB1", little-endian; per tensor: name,
// rank, extents, raw float32) plus a JSON sidecar (<path>.json) carrying
// the architecture descriptor, optimizer state reference and RNG state.
struct Checkpoint {
    ArchDescriptor arch;
    int64_t step = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;  // params and opt/{m,v}/... moments
    AdamConfig adam;
    int64_t adam_step = 0;
    bool has_optimizer = false;
    uint64_t rng_key = 0, rng_counter = 0;
    bool has_rng = false;
    ScheduleParams schedule;
};

void save_checkpoint(const std::string& path, const ScoreModel& model, const Adam* adam,
                     const Rng* rng, int64_t step,
                     const ScheduleParams& schedule = ScheduleParams{});
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds a model (and optionally optimizer/rng state) from a checkpoint.
ScoreModel model_from_checkpoint(const Checkpoint& ck);

// grad_check over a model's full parameter set with an MSE head:
// loss = mse(model(x, t), target). Requires a small model (<= 1e4
// parameters) so the finite-difference sweep stays cheap.
GradCheckReport grad_check_model(const ScoreModel& model, const Tensor& x,
                                 const std::vector<int>& t, const Tensor& target,
                                 double tolerance, Rng& rng, int min_coords = 64);

}  // namespace grlb
