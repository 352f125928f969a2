#include "grlb/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "grlb/config.hpp"

namespace grlb::pipeline {

namespace fs = std::filesystem;
using diffusion::NoiseSchedule;
using nlohmann::json;

namespace {

double masked_mean_abs_change(const DepthMap& a, const DepthMap& b, const Mask& m) {
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        if (!m.v[i]) continue;
        acc += std::fabs(static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]));
        n++;
    }
    return n ? acc / n : 0.0;
}

uint64_t stage2_seed(uint64_t seed) { return Rng::mix(seed ^ 0x73326e6f697365ull); }

// Applies the fill-in remedy when the stage-1 edit is degenerate.
DepthMap maybe_fill_in(const DepthMap& stage1_out, const DepthMap& input, const Mask& mask,
                       const RemoveOptions& opts, bool* applied) {
    *applied = false;
    if (!opts.fill_in) return stage1_out;
    if (masked_mean_abs_change(stage1_out, input, mask) < opts.fill_trigger) {
        *applied = true;
        return geometry::local_max_fill_in(stage1_out, mask, opts.fill_window);
    }
    return stage1_out;
}

}  // namespace

RemoveResult remove_single(const ScoreModel& s1, const NoiseSchedule& sched1, const ScoreModel& s2,
                           const NoiseSchedule& sched2, const Image& image, const DepthMap& depth,
                           const Mask& mask, const RemoveOptions& opts) {
    RemoveResult r;
    DepthMap edited = opts.stage1_override
                          ? geometry::mask_align_replace(*opts.stage1_override, depth, mask)
                          : stage1::remove_geometry(s1, sched1, depth, mask, opts.steps, opts.seed);
    r.stage1_out = maybe_fill_in(edited, depth, mask, opts, &r.fill_in_applied);
    r.output = stage2::render_appearance(s2, sched2, image, depth, r.stage1_out, opts.steps,
                                         stage2_seed(opts.seed));
    return r;
}

std::string run_split(const std::string& manifest_path, const std::string& split,
                      const Checkpoint& ck1, const Checkpoint& ck2, const std::string& run_dir,
                      const RemoveOptions& opts, int limit) {
    Dataset ds = Dataset::load(manifest_path, split);
    ScoreModel s1 = model_from_checkpoint(ck1);
    ScoreModel s2 = model_from_checkpoint(ck2);
    const NoiseSchedule sched1 =
        NoiseSchedule::linear(ck1.schedule.T, ck1.schedule.beta_min, ck1.schedule.beta_max);
    const NoiseSchedule sched2 =
        NoiseSchedule::linear(ck2.schedule.T, ck2.schedule.beta_min, ck2.schedule.beta_max);
    fs::create_directories(run_dir);
    write_json_file((fs::path(run_dir) / "resolved_config.json").string(),
                    json{{"kind", "two-stage"},
                         {"manifest", manifest_path},
                         {"split", split},
                         {"steps", opts.steps},
                         {"seed", opts.seed},
                         {"fill_in", opts.fill_in},
                         {"limit", limit}});

    const size_t n = limit < 0 ? ds.size() : std::min<size_t>(ds.size(), limit);
    const size_t chunk = 8;
    for (size_t base = 0; base < n; base += chunk) {
        const size_t end = std::min(n, base + chunk);
        std::vector<scenegen::PairedSample> samples;
        for (size_t i = base; i < end; ++i) samples.push_back(ds.sample(i));

        std::vector<const DepthMap*> depths;
        std::vector<const Mask*> masks;
        for (const auto& s : samples) {
            depths.push_back(&s.x0_minus);
            masks.push_back(&s.mask);
        }
        const uint64_t seed1 = Rng::mix(opts.seed ^ fnv1a(samples.front().id));
        auto stage1_out =
            stage1::remove_geometry_batch(s1, sched1, depths, masks, opts.steps, seed1);

        std::vector<bool> filled(samples.size());
        for (size_t i = 0; i < samples.size(); ++i) {
            bool applied = false;
            stage1_out[i] =
                maybe_fill_in(stage1_out[i], samples[i].x0_minus, samples[i].mask, opts, &applied);
            filled[i] = applied;
        }

        std::vector<const Image*> images;
        std::vector<const DepthMap*> tgt;
        for (size_t i = 0; i < samples.size(); ++i) {
            images.push_back(&samples[i].i_minus);
            tgt.push_back(&stage1_out[i]);
        }
        auto outputs = stage2::render_appearance_batch(s2, sched2, images, depths, tgt, opts.steps,
                                                       stage2_seed(seed1));

        for (size_t i = 0; i < samples.size(); ++i) {
            const fs::path dir = fs::path(run_dir) / samples[i].id;
            fs::create_directories(dir);
            write_depth_png((dir / "stage1.png").string(), stage1_out[i]);
            write_image_png((dir / "output.png").string(), outputs[i]);
        }
    }
    return run_dir;
}

std::string run_split_onestage(const std::string& manifest_path, const std::string& split,
                               const Checkpoint& ck, const std::string& run_dir,
                               const RemoveOptions& opts, int limit) {
    Dataset ds = Dataset::load(manifest_path, split);
    ScoreModel model = model_from_checkpoint(ck);
    const NoiseSchedule sched =
        NoiseSchedule::linear(ck.schedule.T, ck.schedule.beta_min, ck.schedule.beta_max);
    fs::create_directories(run_dir);
    write_json_file((fs::path(run_dir) / "resolved_config.json").string(),
                    json{{"kind", "one-stage"},
                         {"manifest", manifest_path},
                         {"split", split},
                         {"steps", opts.steps},
                         {"seed", opts.seed},
                         {"limit", limit}});

    const size_t n = limit < 0 ? ds.size() : std::min<size_t>(ds.size(), limit);
    const size_t chunk = 8;
    for (size_t base = 0; base < n; base += chunk) {
        const size_t end = std::min(n, base + chunk);
        std::vector<scenegen::PairedSample> samples;
        for (size_t i = base; i < end; ++i) samples.push_back(ds.sample(i));
        std::vector<const Image*> images;
        std::vector<const DepthMap*> depths;
        std::vector<const Mask*> masks;
        for (const auto& s : samples) {
            images.push_back(&s.i_minus);
            depths.push_back(&s.x0_minus);
            masks.push_back(&s.mask);
        }
        const uint64_t seed = Rng::mix(opts.seed ^ fnv1a(samples.front().id));
        auto outputs = baseline::run_onestage_batch(model, sched, images, depths, masks,
                                                    opts.steps, seed);
        for (size_t i = 0; i < samples.size(); ++i) {
            const fs::path dir = fs::path(run_dir) / samples[i].id;
            fs::create_directories(dir);
            write_image_png((dir / "output.png").string(), outputs[i]);
        }
    }
    return run_dir;
}

json ablate(const std::string& manifest_path, const AblateConfig& cfg,
            const std::string& out_dir) {
    fs::create_directories(out_dir);
    write_json_file((fs::path(out_dir) / "resolved_config.json").string(),
                    json{{"stage1", train_config_to_json(cfg.stage1)},
                         {"stage2", train_config_to_json(cfg.stage2)},
                         {"lambdas", cfg.lambdas},
                         {"include_onestage", cfg.include_onestage},
                         {"include_unidirectional", cfg.include_unidirectional},
                         {"eval_steps", cfg.eval_steps},
                         {"eval_seed", cfg.eval_seed},
                         {"eval_limit", cfg.eval_limit}});

    metrics::EvalOptions eopts;
    eopts.split = "val";
    RemoveOptions ropts;
    ropts.steps = cfg.eval_steps;
    ropts.seed = cfg.eval_seed;

    json rows = json::array();
    auto eval_dir = [&](const std::string& run_dir, const std::string& label) {
        metrics::EvalReport rep = metrics::eval_run_dir(run_dir, manifest_path, eopts, nullptr);
        rows.push_back({{"variant", label},
                        {"masked_mae", rep.mean_masked_mae},
                        {"psnr", rep.mean_psnr},
                        {"ssim", rep.mean_ssim},
                        {"residue_iou", rep.mean_residue_iou},
                        {"insertion_rate", rep.insertion_rate}});
    };

    // Shared reference stage-2 model (bidirectional) rendered against each
    // lambda's stage-1 output.
    TrainConfig s2cfg = cfg.stage2;
    s2cfg.bidirectional = true;
    const std::string s2dir = (fs::path(out_dir) / "stage2_bidir").string();
    const std::string s2ck = stage2::train_stage2(manifest_path, s2cfg, s2dir);
    Checkpoint ck2 = load_checkpoint(s2ck);

    for (float lambda : cfg.lambdas) {
        TrainConfig c = cfg.stage1;
        c.lambda_bt = lambda;
        char label[64];
        std::snprintf(label, sizeof(label), "two-stage lambda=%.2f", lambda);
        const std::string dir =
            (fs::path(out_dir) / ("stage1_lambda_" + std::to_string(lambda))).string();
        const std::string ck1path = stage1::train_stage1(manifest_path, c, dir);
        Checkpoint ck1 = load_checkpoint(ck1path);
        const std::string run =
            run_split(manifest_path, "val", ck1, ck2, dir + "_run", ropts, cfg.eval_limit);
        eval_dir(run, label);
    }

    if (cfg.include_unidirectional && !cfg.lambdas.empty()) {
        TrainConfig c = cfg.stage2;
        c.bidirectional = false;
        const std::string dir = (fs::path(out_dir) / "stage2_unidir").string();
        const std::string ckpath = stage2::train_stage2(manifest_path, c, dir);
        Checkpoint ck2u = load_checkpoint(ckpath);
        // Pair with the stage-1 model trained at the configured default
        // lambda when it is part of the sweep, otherwise the last one.
        float pick = cfg.lambdas.back();
        for (float l : cfg.lambdas)
            if (l == cfg.stage1.lambda_bt) pick = l;
        const std::string s1dir =
            (fs::path(out_dir) / ("stage1_lambda_" + std::to_string(pick))).string();
        Checkpoint ck1 = load_checkpoint((fs::path(s1dir) / "ckpt.grlb").string());
        const std::string run =
            run_split(manifest_path, "val", ck1, ck2u, dir + "_run", ropts, cfg.eval_limit);
        eval_dir(run, "two-stage unidirectional");
    }

    if (cfg.include_onestage) {
        TrainConfig c = cfg.stage1;
        c.steps = cfg.stage1.steps + cfg.stage2.steps;  // equal total budget
        const std::string dir = (fs::path(out_dir) / "onestage").string();
        const std::string ckpath = baseline::train_onestage(manifest_path, c, dir);
        Checkpoint ck = load_checkpoint(ckpath);
        const std::string run = run_split_onestage(manifest_path, "val", ck, dir + "_run", ropts,
                                                   cfg.eval_limit);
        eval_dir(run, "one-stage");
    }

    json result{{"rows", rows}};
    write_json_file((fs::path(out_dir) / "comparison.json").string(), result);

    std::string table = "variant                        masked_mae    psnr    ssim  res_iou  insert\n";
    for (const auto& row : rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-30s %10.4f %7.2f %7.4f %8.4f %7.4f\n",
                      row["variant"].get<std::string>().c_str(),
                      row["masked_mae"].get<double>(), row["psnr"].get<double>(),
                      row["ssim"].get<double>(), row["residue_iou"].get<double>(),
                      row["insertion_rate"].get<double>());
        table += line;
    }
    std::ofstream tf((fs::path(out_dir) / "comparison.txt").string());
    tf << table;
    std::fputs(table.c_str(), stdout);
    return result;
}

}  // namespace grlb::pipeline
