#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "grlb/image.hpp"

namespace grlb::metrics {

struct SampleRecord {
    std::string id;
    std::optional<double> masked_mae;
    std::optional<double> psnr;
    std::optional<double> ssim;
    std::optional<double> residue_iou;
    std::optional<double> residue_iou_region;
    int inserted = -1;  // -1: not scored
};

// Schema "grlb-eval/1". Aggregates are plain means of the per-sample
// values (64-bit accumulation), computed over samples where the metric is
// present.
struct EvalReport {
    std::string run_id;
    nlohmann::json config;
    std::vector<SampleRecord> records;
    std::vector<std::string> missing;  // expected output files that were absent

    double mean_masked_mae = 0.0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_residue_iou = 0.0;
    double mean_residue_iou_region = 0.0;
    double insertion_rate = 0.0;

    nlohmann::json to_json() const;
    std::string text_table() const;
};

struct EvalOptions {
    std::string split = "val";
    bool both_iou = false;
    double insertion_threshold = 3.0;
    int residue_threshold = 20;
    nlohmann::json gates;  // optional {"min_psnr":..,"max_masked_mae":..,...}
};

// Scores a pipeline run directory (run_dir/<id>/{stage1.png,output.png})
// against the dataset's ground truth. Writes run_dir/report.json and
// returns the report; `gate_failures` (when non-null) receives the failed
// gate names.
EvalReport eval_run_dir(const std::string& run_dir, const std::string& manifest_path,
                        const EvalOptions& opts, std::vector<std::string>* gate_failures);

// Aggregate deltas between two report JSONs (a - b per metric), as a
// plain-text table. Used for DPO-vs-baseline style comparisons.
std::string report_delta_table(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace grlb::metrics
