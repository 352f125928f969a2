#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "grlb/config.hpp"
#include "grlb/pipeline.hpp"

namespace fs = std::filesystem;
using namespace grlb;
using nlohmann::json;

namespace {

TrainConfig load_train_config(const std::string& path, const std::string& context) {
    if (path.empty()) return TrainConfig{};
    return parse_train_config(load_json_file(path), context);
}

int run_train(const std::string& stage, const std::string& manifest, const std::string& config,
              const std::string& out, const std::string& resume, uint64_t seed_override,
              bool has_seed) {
    TrainConfig cfg = load_train_config(config, stage);
    if (has_seed) cfg.seed = seed_override;
    std::string ck;
    if (stage == "train-stage1")
        ck = stage1::train_stage1(manifest, cfg, out, resume);
    else if (stage == "train-stage2")
        ck = stage2::train_stage2(manifest, cfg, out, resume);
    else
        ck = baseline::train_onestage(manifest, cfg, out, resume);
    std::printf("checkpoint: %s\n", ck.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grlb: geometry-first object removal pipeline"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a paired synthetic dataset");
    std::string gen_config, gen_out;
    uint64_t gen_seed = 0;
    int gen_count = -1;
    gen->add_option("--config", gen_config, "GenConfig JSON");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--seed", gen_seed, "Dataset seed");
    gen->add_option("--count", gen_count, "Override sample count");

    // train-*
    struct TrainArgs {
        std::string manifest, config, out, resume;
        uint64_t seed = 0;
        bool has_seed = false;
    };
    auto add_train = [&](const char* name, const char* desc, TrainArgs& a) {
        auto* cmd = app.add_subcommand(name, desc);
        cmd->add_option("--manifest", a.manifest, "Dataset manifest")->required();
        cmd->add_option("--config", a.config, "TrainConfig JSON");
        cmd->add_option("--out", a.out, "Output directory")->required();
        cmd->add_option("--resume", a.resume, "Checkpoint to resume from");
        cmd->add_option("--seed", a.seed, "Seed override")->each([&](const std::string&) {
            a.has_seed = true;
        });
        return cmd;
    };
    TrainArgs s1a, s2a, osa;
    auto* ts1 = add_train("train-stage1", "Train the geometry-removal model", s1a);
    auto* ts2 = add_train("train-stage2", "Train the appearance renderer", s2a);
    auto* tos = add_train("train-onestage", "Train the one-stage baseline", osa);

    // remove
    auto* rm = app.add_subcommand("remove", "Two-stage object removal on one image");
    std::string rm_image, rm_depth, rm_mask, rm_s1, rm_s2, rm_out, rm_depth_out, rm_stage1_out_in,
        rm_panel;
    int rm_steps = 50;
    uint64_t rm_seed = 0;
    bool rm_fill = false;
    rm->add_option("--image", rm_image)->required();
    rm->add_option("--depth", rm_depth)->required();
    rm->add_option("--mask", rm_mask)->required();
    rm->add_option("--stage1", rm_s1, "Stage-1 checkpoint")->required();
    rm->add_option("--stage2", rm_s2, "Stage-2 checkpoint")->required();
    rm->add_flag("--fill-in", rm_fill, "Apply local-max fill-in when the stage-1 edit is degenerate");
    rm->add_option("--steps", rm_steps, "Sampler steps");
    rm->add_option("--seed", rm_seed, "Sampler seed");
    rm->add_option("--out", rm_out, "Output image path")->required();
    rm->add_option("--depth-out", rm_depth_out, "Also write the edited depth here");
    rm->add_option("--stage1-output", rm_stage1_out_in,
                   "Use this depth PNG as the stage-1 output instead of sampling");
    rm->add_option("--panel-export", rm_panel,
                   "Write the [depth_tgt | depth_src | RGB] triptych PNG here");

    // run-onestage
    auto* ros = app.add_subcommand("run-onestage", "One-stage baseline removal on one image");
    std::string ros_image, ros_depth, ros_mask, ros_ck, ros_out;
    int ros_steps = 50;
    uint64_t ros_seed = 0;
    ros->add_option("--image", ros_image)->required();
    ros->add_option("--depth", ros_depth)->required();
    ros->add_option("--mask", ros_mask)->required();
    ros->add_option("--ckpt", ros_ck)->required();
    ros->add_option("--steps", ros_steps);
    ros->add_option("--seed", ros_seed);
    ros->add_option("--out", ros_out)->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Score a pipeline run directory");
    std::string ev_run, ev_manifest, ev_split = "val", ev_gates, ev_compare;
    bool ev_both = false;
    ev->add_option("--run", ev_run)->required();
    ev->add_option("--manifest", ev_manifest)->required();
    ev->add_option("--split", ev_split);
    ev->add_flag("--both-iou", ev_both, "Report whole-image and within-region residue IoU");
    ev->add_option("--gates", ev_gates, "JSON file of aggregate gates");
    ev->add_option("--compare", ev_compare, "Another report.json to print aggregate deltas against");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Lambda sweep + one-stage + unidirectional grid");
    std::string ab_manifest, ab_out, ab_config;
    ab->add_option("--manifest", ab_manifest)->required();
    ab->add_option("--out", ab_out)->required();
    ab->add_option("--config", ab_config, "AblateConfig JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);  // prints usage/help
        return e.get_name() == "CallForHelp" ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            scenegen::GenConfig cfg;
            if (!gen_config.empty()) cfg = parse_gen_config(load_json_file(gen_config), "gen-data");
            if (gen_count >= 0) cfg.count = gen_count;
            fs::create_directories(gen_out);
            write_json_file((fs::path(gen_out) / "resolved_config.json").string(),
                            gen_config_to_json(cfg));
            std::string manifest = scenegen::gen_dataset(cfg, gen_seed, gen_out);
            std::printf("manifest: %s\n", manifest.c_str());
            return kExitOk;
        }
        if (ts1->parsed())
            return run_train("train-stage1", s1a.manifest, s1a.config, s1a.out, s1a.resume,
                             s1a.seed, s1a.has_seed);
        if (ts2->parsed())
            return run_train("train-stage2", s2a.manifest, s2a.config, s2a.out, s2a.resume,
                             s2a.seed, s2a.has_seed);
        if (tos->parsed())
            return run_train("train-onestage", osa.manifest, osa.config, osa.out, osa.resume,
                             osa.seed, osa.has_seed);

        if (rm->parsed()) {
            Image image = read_image_png(rm_image);
            DepthMap depth = read_depth_png(rm_depth);
            Mask mask = read_mask_png(rm_mask);
            Checkpoint ck1 = load_checkpoint(rm_s1);
            Checkpoint ck2 = load_checkpoint(rm_s2);
            ScoreModel s1 = model_from_checkpoint(ck1);
            ScoreModel s2 = model_from_checkpoint(ck2);
            auto sched1 = diffusion::NoiseSchedule::linear(ck1.schedule.T, ck1.schedule.beta_min,
                                                           ck1.schedule.beta_max);
            auto sched2 = diffusion::NoiseSchedule::linear(ck2.schedule.T, ck2.schedule.beta_min,
                                                           ck2.schedule.beta_max);
            pipeline::RemoveOptions opts;
            opts.steps = rm_steps;
            opts.seed = rm_seed;
            opts.fill_in = rm_fill;
            DepthMap override_depth;
            if (!rm_stage1_out_in.empty()) {
                override_depth = read_depth_png(rm_stage1_out_in);
                opts.stage1_override = &override_depth;
            }
            auto res = pipeline::remove_single(s1, sched1, s2, sched2, image, depth, mask, opts);
            write_image_png(rm_out, res.output);
            if (!rm_depth_out.empty()) write_depth_png(rm_depth_out, res.stage1_out);
            if (!rm_panel.empty())
                write_image_png(rm_panel, stage2::composite_panel(image, depth, res.stage1_out));
            if (res.fill_in_applied) std::printf("fill-in: applied\n");
            return kExitOk;
        }

        if (ros->parsed()) {
            Checkpoint ck = load_checkpoint(ros_ck);
            Image out = baseline::run_onestage(ck, read_image_png(ros_image),
                                               read_depth_png(ros_depth), read_mask_png(ros_mask),
                                               ros_steps, ros_seed);
            write_image_png(ros_out, out);
            return kExitOk;
        }

        if (ev->parsed()) {
            metrics::EvalOptions opts;
            opts.split = ev_split;
            opts.both_iou = ev_both;
            if (!ev_gates.empty()) opts.gates = load_json_file(ev_gates);
            std::vector<std::string> failures;
            metrics::EvalReport rep = metrics::eval_run_dir(ev_run, ev_manifest, opts, &failures);
            std::fputs(rep.text_table().c_str(), stdout);
            if (!ev_compare.empty())
                std::fputs(
                    metrics::report_delta_table(rep.to_json(), load_json_file(ev_compare)).c_str(),
                    stdout);
            if (!failures.empty()) {
                for (const auto& f : failures)
                    std::fprintf(stderr, "gate failed: %s\n", f.c_str());
                return kExitGateFailure;
            }
            return kExitOk;
        }

        if (ab->parsed()) {
            pipeline::AblateConfig cfg;
            if (!ab_config.empty()) {
                json j = load_json_file(ab_config);
                for (auto it = j.begin(); it != j.end(); ++it) {
                    const std::string& k = it.key();
                    if (k == "stage1")
                        cfg.stage1 = parse_train_config(*it, "ablate.stage1");
                    else if (k == "stage2")
                        cfg.stage2 = parse_train_config(*it, "ablate.stage2");
                    else if (k == "lambdas")
                        cfg.lambdas = it->get<std::vector<float>>();
                    else if (k == "include_onestage")
                        cfg.include_onestage = it->get<bool>();
                    else if (k == "include_unidirectional")
                        cfg.include_unidirectional = it->get<bool>();
                    else if (k == "eval_steps")
                        cfg.eval_steps = it->get<int>();
                    else if (k == "eval_seed")
                        cfg.eval_seed = it->get<uint64_t>();
                    else if (k == "eval_limit")
                        cfg.eval_limit = it->get<int>();
                    else
                        throw DataError("ablate: unknown config key '" + k + "'");
                }
            }
            pipeline::ablate(ab_manifest, cfg, ab_out);
            return kExitOk;
        }
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDataError;
    }
    return kExitUsage;
}
