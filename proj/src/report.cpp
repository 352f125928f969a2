#include "grlb/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "grlb/config.hpp"
#include "grlb/dataset.hpp"
#include "grlb/geometry.hpp"
#include "grlb/metrics.hpp"

namespace grlb::metrics {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json num_or_inf(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

json opt_to_json(const std::optional<double>& v) {
    if (!v) return nullptr;
    return num_or_inf(*v);
}

}  // namespace

json EvalReport::to_json() const {
    json recs = json::array();
    for (const auto& r : records) {
        recs.push_back({{"id", r.id},
                        {"masked_mae", opt_to_json(r.masked_mae)},
                        {"psnr", opt_to_json(r.psnr)},
                        {"ssim", opt_to_json(r.ssim)},
                        {"residue_iou", opt_to_json(r.residue_iou)},
                        {"inserted", r.inserted}});
        if (r.residue_iou_region) recs.back()["residue_iou_region"] = *r.residue_iou_region;
    }
    json agg{{"masked_mae", mean_masked_mae},
             {"psnr", num_or_inf(mean_psnr)},
             {"ssim", mean_ssim},
             {"residue_iou", mean_residue_iou},
             {"insertion_rate", insertion_rate}};
    if (mean_residue_iou_region != 0.0) agg["residue_iou_region"] = mean_residue_iou_region;
    return json{{"schema", "grlb-eval/1"}, {"run_id", run_id},     {"config", config},
                {"samples", recs},         {"aggregates", agg},    {"missing", missing}};
}

std::string EvalReport::text_table() const {
    char line[256];
    std::string out;
    out += "id          masked_mae      psnr      ssim   res_iou  inserted\n";
    for (const auto& r : records) {
        std::snprintf(line, sizeof(line), "%-10s %11s %9s %9s %9s %9s\n", r.id.c_str(),
                      r.masked_mae ? std::to_string(*r.masked_mae).substr(0, 8).c_str() : "-",
                      r.psnr ? std::to_string(*r.psnr).substr(0, 7).c_str() : "-",
                      r.ssim ? std::to_string(*r.ssim).substr(0, 7).c_str() : "-",
                      r.residue_iou ? std::to_string(*r.residue_iou).substr(0, 7).c_str() : "-",
                      r.inserted < 0 ? "-" : (r.inserted ? "yes" : "no"));
        out += line;
    }
    std::snprintf(line, sizeof(line),
                  "mean       %11.6f %9.4f %9.4f %9.4f  rate %.4f\n", mean_masked_mae, mean_psnr,
                  mean_ssim, mean_residue_iou, insertion_rate);
    out += line;
    return out;
}

EvalReport eval_run_dir(const std::string& run_dir, const std::string& manifest_path,
                        const EvalOptions& opts, std::vector<std::string>* gate_failures) {
    Dataset ds = Dataset::load(manifest_path, opts.split);
    EvalReport rep;
    rep.config = json{{"run_dir", run_dir},
                      {"manifest", manifest_path},
                      {"split", opts.split},
                      {"both_iou", opts.both_iou},
                      {"insertion_threshold", opts.insertion_threshold},
                      {"residue_threshold", opts.residue_threshold}};

    double acc_mae = 0, acc_psnr = 0, acc_ssim = 0, acc_iou = 0, acc_iou_region = 0;
    int64_t n_mae = 0, n_img = 0, n_iou_region = 0, n_inserted = 0, n_insert_scored = 0;

    for (size_t i = 0; i < ds.size(); ++i) {
        scenegen::PairedSample gt = ds.sample(i);
        SampleRecord rec;
        rec.id = gt.id;
        const fs::path dir = fs::path(run_dir) / gt.id;
        const fs::path stage1_path = dir / "stage1.png";
        const fs::path output_path = dir / "output.png";

        if (fs::exists(stage1_path)) {
            DepthMap pred = read_depth_png(stage1_path.string());
            rec.masked_mae = geometry::masked_mae(pred, gt.x0_plus, gt.mask);
            acc_mae += *rec.masked_mae;
            n_mae++;
            auto e_pred = mask_flow_energy(pred, gt.mask);
            auto e_gt = mask_flow_energy(gt.x0_plus, gt.mask);
            if (e_pred && e_gt) {
                rec.inserted =
                    (*e_pred / std::max(*e_gt, 1e-4) > opts.insertion_threshold) ? 1 : 0;
                n_inserted += rec.inserted;
                n_insert_scored++;
            }
        } else {
            rep.missing.push_back((fs::path(gt.id) / "stage1.png").string());
        }

        if (fs::exists(output_path)) {
            Image out = read_image_png(output_path.string());
            rec.psnr = psnr(out, gt.i_plus);
            rec.ssim = ssim(out, gt.i_plus);
            rec.residue_iou = residue_iou(gt.i_minus, out, gt.artifact_mask, opts.residue_threshold);
            if (opts.both_iou) {
                rec.residue_iou_region = residue_iou_within_region(gt.i_minus, out, gt.artifact_mask,
                                                                   opts.residue_threshold);
                acc_iou_region += *rec.residue_iou_region;
                n_iou_region++;
            }
            acc_psnr += *rec.psnr;
            acc_ssim += *rec.ssim;
            acc_iou += *rec.residue_iou;
            n_img++;
        } else {
            rep.missing.push_back((fs::path(gt.id) / "output.png").string());
        }
        rep.records.push_back(std::move(rec));
    }

    rep.mean_masked_mae = n_mae ? acc_mae / n_mae : 0.0;
    rep.mean_psnr = n_img ? acc_psnr / n_img : 0.0;
    rep.mean_ssim = n_img ? acc_ssim / n_img : 0.0;
    rep.mean_residue_iou = n_img ? acc_iou / n_img : 0.0;
    rep.mean_residue_iou_region = n_iou_region ? acc_iou_region / n_iou_region : 0.0;
    rep.insertion_rate =
        n_insert_scored ? static_cast<double>(n_inserted) / n_insert_scored : 0.0;

    {
        // Content-derived id so regenerated reports are byte-identical.
        json core{{"config", rep.config}, {"missing", rep.missing}};
        for (const auto& r : rep.records)
            core["ids"].push_back(r.id);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(fnv1a(core.dump())));
        rep.run_id = buf;
    }

    for (const auto& m : rep.missing)
        std::fprintf(stderr, "eval: missing output %s\n", m.c_str());

    if (gate_failures && opts.gates.is_object()) {
        auto fail = [&](const std::string& name) { gate_failures->push_back(name); };
        if (opts.gates.contains("max_masked_mae") &&
            rep.mean_masked_mae > opts.gates["max_masked_mae"].get<double>())
            fail("max_masked_mae");
        if (opts.gates.contains("min_psnr") &&
            rep.mean_psnr < opts.gates["min_psnr"].get<double>())
            fail("min_psnr");
        if (opts.gates.contains("min_ssim") &&
            rep.mean_ssim < opts.gates["min_ssim"].get<double>())
            fail("min_ssim");
        if (opts.gates.contains("min_residue_iou") &&
            rep.mean_residue_iou < opts.gates["min_residue_iou"].get<double>())
            fail("min_residue_iou");
        if (opts.gates.contains("max_insertion_rate") &&
            rep.insertion_rate > opts.gates["max_insertion_rate"].get<double>())
            fail("max_insertion_rate");
    }

    write_json_file((fs::path(run_dir) / "report.json").string(), rep.to_json());
    return rep;
}

std::string report_delta_table(const json& a, const json& b) {
    if (!a.contains("aggregates") || !b.contains("aggregates"))
        throw DataError("report_delta_table: not eval reports");
    const json& aa = a["aggregates"];
    const json& bb = b["aggregates"];
    auto get = [](const json& j, const char* key) {
        if (!j.contains(key)) return 0.0;
        if (j[key].is_string()) return std::numeric_limits<double>::infinity();
        return j[key].get<double>();
    };
    std::string out = "metric            run A      run B      delta (A-B)\n";
    for (const char* key :
         {"masked_mae", "psnr", "ssim", "residue_iou", "insertion_rate"}) {
        const double va = get(aa, key), vb = get(bb, key);
        char line[120];
        std::snprintf(line, sizeof(line), "%-15s %9.4f  %9.4f  %+10.4f\n", key, va, vb, va - vb);
        out += line;
    }
    return out;
}

}  // namespace grlb::metrics
