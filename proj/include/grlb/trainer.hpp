#pragma once

#include <functional>
#include <map>
#include <string>

#include "grlb/config.hpp"
#include "grlb/diffusion.hpp"
#include "grlb/nn.hpp"

namespace grlb {

// One training loop shared by all three stages: with-replacement batch
// draws from a single checkpointable RNG stream, Adam updates, JSONL
// metrics, periodic atomic checkpoints, and exact resume.
//
// loss_fn draws its batch from `rng` and returns the scalar loss graph;
// it reports logged components through `comps`.
// val_fn (optional) computes validation metrics without touching `rng`.
struct TrainLoopResult {
    std::string checkpoint_path;
    double first_window_loss = 0.0;  // mean loss over the first log window
    double last_window_loss = 0.0;   // mean loss over the last log window
};

TrainLoopResult run_train_loop(
    ScoreModel& model, const TrainConfig& cfg, const std::string& out_dir,
    const std::string& resume_path,
    const std::function<Tensor(Rng& rng, std::map<std::string, double>& comps)>& loss_fn,
    const std::function<void(int step, nlohmann::json& record)>& val_fn);

}  // namespace grlb
