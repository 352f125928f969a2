#include "grlb/stage1.hpp"

#include <cmath>

namespace grlb::stage1 {

using diffusion::NoiseSchedule;

double bt_loss_from_gap(double gap) {
    // -log sigmoid(gap), evaluated stably on both tails.
    if (gap > 0) return std::log1p(std::exp(-gap));
    return -gap + std::log1p(std::exp(gap));
}

double bt_loss(const DepthMap& x0_hat, const DepthMap& x0_plus, const DepthMap& x0_minus) {
    const double r_plus = geometry::reward(x0_hat, x0_plus);
    const double r_minus = geometry::reward(x0_hat, x0_minus);
    return bt_loss_from_gap(r_plus - r_minus);
}

Tensor bt_loss_t(const Tensor& x0_hat, const Tensor& x0_plus, const Tensor& x0_minus) {
    // gap = r+ - r- = flow_loss(x_hat, x-) - flow_loss(x_hat, x+)
    Tensor gap = ops::sub(geometry::flow_loss_t(x0_hat, x0_minus),
                          geometry::flow_loss_t(x0_hat, x0_plus));
    return ops::mul_scalar(ops::log(ops::sigmoid(gap)), -1.0f);
}

Tensor make_condition(const Tensor& x0_minus_norm, const Tensor& mask) {
    if (x0_minus_norm.shape() != mask.shape())
        throw ShapeError("make_condition: depth/mask shape mismatch");
    Tensor inv = ops::add_scalar(ops::mul_scalar(mask, -1.0f), 1.0f);  // 1 - M
    return ops::concat_channels({mask, ops::mul(inv, x0_minus_norm)});
}

Stage1Loss total_loss(const ScoreModel& model, const std::vector<scenegen::PairedSample>& batch,
                      float lambda_bt, const NoiseSchedule& sched, Rng& rng) {
    const int N = static_cast<int>(batch.size());
    std::vector<Tensor> xp, xm, mk;
    for (const auto& s : batch) {
        xp.push_back(depth_to_tensor(s.x0_plus));
        xm.push_back(depth_to_tensor(s.x0_minus));
        mk.push_back(mask_to_tensor(s.mask));
    }
    Tensor x0_plus = stack_batch(xp);
    Tensor x0_minus = stack_batch(xm);
    Tensor mask = stack_batch(mk);
    Tensor cond = make_condition(x0_minus, mask);

    // Shared draws for DSM and BT: one t and one eps per example.
    std::vector<int> ts(N);
    for (int i = 0; i < N; ++i) ts[i] = static_cast<int>(rng.uniform_int(1, sched.T));
    Tensor eps(x0_plus.shape());
    for (auto& v : eps.mutable_data()) v = rng.normal();
    Tensor x_t = diffusion::noised_batch(x0_plus, ts, eps, sched);
    Tensor eps_hat = model.forward(ops::concat_channels({x_t, cond}), ts);

    Stage1Loss out;
    Tensor l_dsm = ops::mse(eps_hat, eps);
    out.l_dsm = l_dsm.value();

    if (lambda_bt > 0.0f) {
        Tensor bt_sum;
        int contributing = 0;
        for (int i = 0; i < N; ++i) {
            // No preference signal when the pair is flow-indistinguishable.
            if (geometry::flow_loss(batch[i].x0_plus, batch[i].x0_minus) < 1e-6) continue;
            Tensor xt_i = ops::select_batch(x_t, i);
            Tensor eh_i = ops::select_batch(eps_hat, i);
            Tensor x0h_i = diffusion::predict_x0(xt_i, ts[i], eh_i, sched);
            Tensor li = bt_loss_t(x0h_i, ops::select_batch(x0_plus, i),
                                  ops::select_batch(x0_minus, i));
            bt_sum = bt_sum.defined() ? ops::add(bt_sum, li) : li;
            contributing++;
        }
        if (contributing > 0) {
            Tensor l_bt = ops::mul_scalar(bt_sum, 1.0f / static_cast<float>(N));
            out.l_bt = l_bt.value();
            out.loss = ops::add(l_dsm, ops::mul_scalar(l_bt, lambda_bt));
            return out;
        }
    }
    out.loss = l_dsm;
    return out;
}

std::string train_stage1(const std::string& manifest_path, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path) {
    Dataset train = Dataset::load(manifest_path, "train");
    if (train.size() == 0) throw DataError("train_stage1: empty train split");
    Dataset val = Dataset::load(manifest_path, "val");
    const NoiseSchedule sched = NoiseSchedule::linear(cfg.schedule_t, cfg.beta_min, cfg.beta_max);

    ArchDescriptor arch;
    arch.in_channels = 3;  // x_t + (M, (1-M)*x0)
    arch.out_channels = 1;
    arch.widths = cfg.widths;
    ScoreModel model(arch, Rng::mix(cfg.seed ^ 0x73746167653161ull));

    auto loss_fn = [&](Rng& rng, std::map<std::string, double>& comps) {
        std::vector<scenegen::PairedSample> batch;
        batch.reserve(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i)
            batch.push_back(
                train.sample(static_cast<size_t>(rng.uniform_int(0, train.size() - 1))));
        Stage1Loss l = total_loss(model, batch, cfg.lambda_bt, sched, rng);
        comps["l_dsm"] = l.l_dsm;
        comps["l_bt"] = l.l_bt;
        return l.loss;
    };

    auto val_fn = [&](int step, nlohmann::json& rec) {
        if (val.size() == 0) return;
        // Separate stream so validation cadence never perturbs training.
        const uint64_t vseed = Rng::mix(cfg.seed ^ (0x76616cull + step));
        const size_t n = std::min<size_t>(cfg.val_count, val.size());
        std::vector<scenegen::PairedSample> samples;
        std::vector<const DepthMap*> depths;
        std::vector<const Mask*> masks;
        samples.reserve(n);
        for (size_t i = 0; i < n; ++i) samples.push_back(val.sample(i));
        for (const auto& s : samples) {
            depths.push_back(&s.x0_minus);
            masks.push_back(&s.mask);
        }
        auto preds = remove_geometry_batch(model, sched, depths, masks, cfg.val_steps, vseed);
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i)
            acc += geometry::masked_mae(preds[i], samples[i].x0_plus, samples[i].mask);
        rec["val_masked_mae"] = acc / static_cast<double>(n);
    };

    TrainLoopResult r = run_train_loop(model, cfg, out_dir, resume_path, loss_fn, val_fn);
    return r.checkpoint_path;
}

std::vector<DepthMap> remove_geometry_batch(const ScoreModel& model, const NoiseSchedule& sched,
                                            const std::vector<const DepthMap*>& depths,
                                            const std::vector<const Mask*>& masks, int steps,
                                            uint64_t seed) {
    if (depths.empty() || depths.size() != masks.size())
        throw DataError("remove_geometry: depth/mask count mismatch");
    std::vector<Tensor> xs, ms;
    for (size_t i = 0; i < depths.size(); ++i) {
        if (masks[i]->empty()) throw DataError("remove_geometry: empty mask");
        xs.push_back(depth_to_tensor(*depths[i]));
        ms.push_back(mask_to_tensor(*masks[i]));
    }
    Tensor x0 = stack_batch(xs);
    Tensor mask = stack_batch(ms);
    Tensor cond = make_condition(x0, mask);
    diffusion::KnownRegion known{x0, mask};
    Tensor out = diffusion::sample(model, cond, known, steps, seed, sched);
    std::vector<DepthMap> result(depths.size());
    for (size_t i = 0; i < depths.size(); ++i) {
        DepthMap pred = tensor_to_depth(out, static_cast<int>(i));
        // Bit-exact mask alignment in depth space, independent of the
        // normalize/denormalize round trip.
        result[i] = geometry::mask_align_replace(pred, *depths[i], *masks[i]);
    }
    return result;
}

DepthMap remove_geometry(const ScoreModel& model, const NoiseSchedule& sched, const DepthMap& depth,
                         const Mask& m, int steps, uint64_t seed) {
    return remove_geometry_batch(model, sched, {&depth}, {&m}, steps, seed)[0];
}

DepthMap remove_geometry(const Checkpoint& ck, const DepthMap& depth, const Mask& m, int steps,
                         uint64_t seed) {
    ScoreModel model = model_from_checkpoint(ck);
    const NoiseSchedule sched =
        NoiseSchedule::linear(ck.schedule.T, ck.schedule.beta_min, ck.schedule.beta_max);
    return remove_geometry(model, sched, depth, m, steps, seed);
}

}  // namespace grlb::stage1
