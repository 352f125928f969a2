#include "grlb/baseline.hpp"

namespace grlb::baseline {

using diffusion::NoiseSchedule;

Tensor make_condition(const Image& i_minus, const DepthMap& depth, const Mask& m) {
    if (depth.h != i_minus.h || depth.w != i_minus.w || m.h != i_minus.h || m.w != i_minus.w)
        throw ShapeError("onestage condition: shape mismatch");
    Tensor rgb = image_to_tensor(i_minus);
    Tensor d = depth_to_tensor(depth);
    Tensor mask = mask_to_tensor(m);
    Tensor inv = ops::add_scalar(ops::mul_scalar(mask, -1.0f), 1.0f);  // 1 - M
    Tensor inv3 = ops::concat_channels({inv, inv, inv});
    return ops::concat_channels({ops::mul(inv3, rgb), mask, ops::mul(inv, d)});
}

std::string train_onestage(const std::string& manifest_path, const TrainConfig& cfg,
                           const std::string& out_dir, const std::string& resume_path) {
    Dataset train = Dataset::load(manifest_path, "train");
    if (train.size() == 0) throw DataError("train_onestage: empty train split");
    const NoiseSchedule sched = NoiseSchedule::linear(cfg.schedule_t, cfg.beta_min, cfg.beta_max);

    ArchDescriptor arch;
    arch.in_channels = 8;  // noised target RGB + masked RGB + mask + masked depth
    arch.out_channels = 3;
    arch.widths = cfg.widths;
    ScoreModel model(arch, Rng::mix(cfg.seed ^ 0x6f6e65737461ull));

    auto loss_fn = [&](Rng& rng, std::map<std::string, double>& comps) {
        std::vector<Tensor> conds, targets;
        for (int i = 0; i < cfg.batch; ++i) {
            scenegen::PairedSample s =
                train.sample(static_cast<size_t>(rng.uniform_int(0, train.size() - 1)));
            conds.push_back(make_condition(s.i_minus, s.x0_minus, s.mask));
            targets.push_back(image_to_tensor(s.i_plus));
        }
        diffusion::DsmResult r =
            diffusion::dsm_loss(model, stack_batch(targets), stack_batch(conds), sched, rng);
        comps["l_dsm"] = r.loss.value();
        return r.loss;
    };

    TrainLoopResult r = run_train_loop(model, cfg, out_dir, resume_path, loss_fn, nullptr);
    return r.checkpoint_path;
}

std::vector<Image> run_onestage_batch(const ScoreModel& model, const NoiseSchedule& sched,
                                      const std::vector<const Image*>& i_minus,
                                      const std::vector<const DepthMap*>& depths,
                                      const std::vector<const Mask*>& masks, int steps,
                                      uint64_t seed) {
    if (i_minus.empty() || i_minus.size() != depths.size() || i_minus.size() != masks.size())
        throw DataError("run_onestage: input count mismatch");
    std::vector<Tensor> conds;
    for (size_t i = 0; i < i_minus.size(); ++i)
        conds.push_back(make_condition(*i_minus[i], *depths[i], *masks[i]));
    Tensor out = diffusion::sample(model, stack_batch(conds), std::nullopt, steps, seed, sched);
    std::vector<Image> result(i_minus.size());
    for (size_t i = 0; i < i_minus.size(); ++i)
        result[i] = tensor_to_image(out, static_cast<int>(i));
    return result;
}

Image run_onestage(const ScoreModel& model, const NoiseSchedule& sched, const Image& i_minus,
                   const DepthMap& depth, const Mask& m, int steps, uint64_t seed) {
    return run_onestage_batch(model, sched, {&i_minus}, {&depth}, {&m}, steps, seed)[0];
}

Image run_onestage(const Checkpoint& ck, const Image& i_minus, const DepthMap& depth,
                   const Mask& m, int steps, uint64_t seed) {
    ScoreModel model = model_from_checkpoint(ck);
    const NoiseSchedule sched =
        NoiseSchedule::linear(ck.schedule.T, ck.schedule.beta_min, ck.schedule.beta_max);
    return run_onestage(model, sched, i_minus, depth, m, steps, seed);
}

}  // namespace grlb::baseline
