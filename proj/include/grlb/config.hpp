#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "grlb/scene.hpp"

namespace grlb {

// Shared training knobs. Stage-specific fields are simply ignored by the
// other stages' trainers. Unknown JSON keys are rejected.
struct TrainConfig {
    int steps = 500;
    int batch = 16;
    float lr = 1e-3f;
    uint64_t seed = 0;
    int schedule_t = 200;
    float beta_min = 1e-4f;
    float beta_max = 0.02f;
    float lambda_bt = 0.1f;     // stage1: BT weight
    bool bidirectional = true;  // stage2: train both directions
    std::vector<int> widths = {32, 48, 64};
    int checkpoint_every = 200;
    int log_every = 10;
    int val_every = 0;  // 0 disables periodic validation
    int val_count = 16;
    int val_steps = 20;  // sampler steps for validation metrics
};

TrainConfig parse_train_config(const nlohmann::json& j, const std::string& context);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

scenegen::GenConfig parse_gen_config(const nlohmann::json& j, const std::string& context);
nlohmann::json gen_config_to_json(const scenegen::GenConfig& cfg);

nlohmann::json load_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace grlb
