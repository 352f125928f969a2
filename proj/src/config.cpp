#include "grlb/config.hpp"

#include <fstream>
#include <set>

#include "grlb/common.hpp"

namespace grlb {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& context) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw DataError(context + ": unknown config key '" + it.key() + "'");
}

}  // namespace

TrainConfig parse_train_config(const json& j, const std::string& context) {
    if (!j.is_object()) throw DataError(context + ": config must be a JSON object");
    static const std::set<std::string> allowed = {
        "steps",      "batch",      "lr",        "seed",       "schedule_t",
        "beta_min",   "beta_max",   "lambda_bt", "bidirectional", "widths",
        "checkpoint_every", "log_every", "val_every", "val_count", "val_steps"};
    reject_unknown_keys(j, allowed, context);
    TrainConfig c;
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (j.contains("batch")) c.batch = j.at("batch").get<int>();
    if (j.contains("lr")) c.lr = j.at("lr").get<float>();
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("schedule_t")) c.schedule_t = j.at("schedule_t").get<int>();
    if (j.contains("beta_min")) c.beta_min = j.at("beta_min").get<float>();
    if (j.contains("beta_max")) c.beta_max = j.at("beta_max").get<float>();
    if (j.contains("lambda_bt")) c.lambda_bt = j.at("lambda_bt").get<float>();
    if (j.contains("bidirectional")) c.bidirectional = j.at("bidirectional").get<bool>();
    if (j.contains("widths")) c.widths = j.at("widths").get<std::vector<int>>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();
    if (j.contains("log_every")) c.log_every = j.at("log_every").get<int>();
    if (j.contains("val_every")) c.val_every = j.at("val_every").get<int>();
    if (j.contains("val_count")) c.val_count = j.at("val_count").get<int>();
    if (j.contains("val_steps")) c.val_steps = j.at("val_steps").get<int>();
    if (c.steps < 0 || c.batch < 1) throw DataError(context + ": invalid steps/batch");
    if (c.lambda_bt < 0.0f) throw DataError(context + ": lambda_bt must be >= 0");
    return c;
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"steps", c.steps},
                {"batch", c.batch},
                {"lr", c.lr},
                {"seed", c.seed},
                {"schedule_t", c.schedule_t},
                {"beta_min", c.beta_min},
                {"beta_max", c.beta_max},
                {"lambda_bt", c.lambda_bt},
                {"bidirectional", c.bidirectional},
                {"widths", c.widths},
                {"checkpoint_every", c.checkpoint_every},
                {"log_every", c.log_every},
                {"val_every", c.val_every},
                {"val_count", c.val_count},
                {"val_steps", c.val_steps}};
}

scenegen::GenConfig parse_gen_config(const json& j, const std::string& context) {
    if (!j.is_object()) throw DataError(context + ": config must be a JSON object");
    static const std::set<std::string> allowed = {
        "count",          "height",          "width",
        "val_fraction",   "min_objects",     "max_objects",
        "object_height_min", "object_height_max", "radius_min",
        "radius_max",     "albedo_min",      "albedo_max",
        "ground_albedo_min", "ground_albedo_max", "ground_slope_max",
        "elevation_min_deg", "elevation_max_deg", "mirror_prob"};
    reject_unknown_keys(j, allowed, context);
    scenegen::GenConfig c;
    if (j.contains("count")) c.count = j.at("count").get<int>();
    if (j.contains("height")) c.height = j.at("height").get<int>();
    if (j.contains("width")) c.width = j.at("width").get<int>();
    if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
    if (j.contains("min_objects")) c.min_objects = j.at("min_objects").get<int>();
    if (j.contains("max_objects")) c.max_objects = j.at("max_objects").get<int>();
    if (j.contains("object_height_min")) c.object_height_min = j.at("object_height_min").get<float>();
    if (j.contains("object_height_max")) c.object_height_max = j.at("object_height_max").get<float>();
    if (j.contains("radius_min")) c.radius_min = j.at("radius_min").get<float>();
    if (j.contains("radius_max")) c.radius_max = j.at("radius_max").get<float>();
    if (j.contains("albedo_min")) c.albedo_min = j.at("albedo_min").get<float>();
    if (j.contains("albedo_max")) c.albedo_max = j.at("albedo_max").get<float>();
    if (j.contains("ground_albedo_min")) c.ground_albedo_min = j.at("ground_albedo_min").get<float>();
    if (j.contains("ground_albedo_max")) c.ground_albedo_max = j.at("ground_albedo_max").get<float>();
    if (j.contains("ground_slope_max")) c.ground_slope_max = j.at("ground_slope_max").get<float>();
    if (j.contains("elevation_min_deg")) c.elevation_min_deg = j.at("elevation_min_deg").get<float>();
    if (j.contains("elevation_max_deg")) c.elevation_max_deg = j.at("elevation_max_deg").get<float>();
    if (j.contains("mirror_prob")) c.mirror_prob = j.at("mirror_prob").get<float>();
    if (c.count < 0) throw DataError(context + ": count must be >= 0");
    if (c.val_fraction < 0.0 || c.val_fraction > 1.0)
        throw DataError(context + ": val_fraction must be in [0,1]");
    return c;
}

json gen_config_to_json(const scenegen::GenConfig& c) {
    return json{{"count", c.count},
                {"height", c.height},
                {"width", c.width},
                {"val_fraction", c.val_fraction},
                {"min_objects", c.min_objects},
                {"max_objects", c.max_objects},
                {"object_height_min", c.object_height_min},
                {"object_height_max", c.object_height_max},
                {"radius_min", c.radius_min},
                {"radius_max", c.radius_max},
                {"albedo_min", c.albedo_min},
                {"albedo_max", c.albedo_max},
                {"ground_albedo_min", c.ground_albedo_min},
                {"ground_albedo_max", c.ground_albedo_max},
                {"ground_slope_max", c.ground_slope_max},
                {"elevation_min_deg", c.elevation_min_deg},
                {"elevation_max_deg", c.elevation_max_deg},
                {"mirror_prob", c.mirror_prob}};
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("JSON parse error in " + path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace grlb
