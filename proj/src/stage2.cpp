#include "grlb/stage2.hpp"

namespace grlb::stage2 {

using diffusion::NoiseSchedule;

Tensor make_condition(const Image& i_src, const DepthMap& x_src, const DepthMap& x_tgt) {
    return ops::concat_channels({image_to_tensor(i_src),
                                 image_to_tensor(geometry::colorize_depth(x_src)),
                                 image_to_tensor(geometry::colorize_depth(x_tgt))});
}

CompositeExample build_composite(const scenegen::PairedSample& s, Direction direction) {
    CompositeExample c;
    c.direction = direction;
    if (direction == Direction::kRemoval) {
        c.cond = make_condition(s.i_minus, s.x0_minus, s.x0_plus);
        c.target = image_to_tensor(s.i_plus);
    } else {
        c.cond = make_condition(s.i_plus, s.x0_plus, s.x0_minus);
        c.target = image_to_tensor(s.i_minus);
    }
    return c;
}

namespace {

Tensor direction_term(const ScoreModel& model, const std::vector<scenegen::PairedSample>& batch,
                      Direction dir, const NoiseSchedule& sched, Rng& rng) {
    std::vector<Tensor> conds, targets;
    for (const auto& s : batch) {
        CompositeExample c = build_composite(s, dir);
        conds.push_back(c.cond);
        targets.push_back(c.target);
    }
    Tensor cond = stack_batch(conds);
    Tensor target = stack_batch(targets);
    diffusion::DsmResult r = diffusion::dsm_loss(model, target, cond, sched, rng);
    return r.loss;
}

}  // namespace

RenderLoss render_loss(const ScoreModel& model, const std::vector<scenegen::PairedSample>& batch,
                       const NoiseSchedule& sched, Rng& rng, RenderMode mode) {
    RenderLoss out;
    if (mode == RenderMode::kBidirectional || mode == RenderMode::kRemovalOnly) {
        Tensor lr = direction_term(model, batch, Direction::kRemoval, sched, rng);
        out.l_removal = lr.value();
        out.loss = lr;
    }
    if (mode == RenderMode::kBidirectional || mode == RenderMode::kInsertionOnly) {
        Tensor li = direction_term(model, batch, Direction::kInsertion, sched, rng);
        out.l_insertion = li.value();
        out.loss = out.loss.defined() ? ops::add(out.loss, li) : li;
    }
    return out;
}

std::string train_stage2(const std::string& manifest_path, const TrainConfig& cfg,
                         const std::string& out_dir, const std::string& resume_path) {
    Dataset train = Dataset::load(manifest_path, "train");
    if (train.size() == 0) throw DataError("train_stage2: empty train split");
    const NoiseSchedule sched = NoiseSchedule::linear(cfg.schedule_t, cfg.beta_min, cfg.beta_max);
    const RenderMode mode =
        cfg.bidirectional ? RenderMode::kBidirectional : RenderMode::kRemovalOnly;

    ArchDescriptor arch;
    arch.in_channels = 12;  // noised target RGB + 9 condition channels
    arch.out_channels = 3;
    arch.widths = cfg.widths;
    ScoreModel model(arch, Rng::mix(cfg.seed ^ 0x73746167653262ull));

    auto loss_fn = [&](Rng& rng, std::map<std::string, double>& comps) {
        std::vector<scenegen::PairedSample> batch;
        batch.reserve(cfg.batch);
        for (int i = 0; i < cfg.batch; ++i)
            batch.push_back(
                train.sample(static_cast<size_t>(rng.uniform_int(0, train.size() - 1))));
        RenderLoss l = render_loss(model, batch, sched, rng, mode);
        comps["l_removal"] = l.l_removal;
        comps["l_insertion"] = l.l_insertion;
        return l.loss;
    };

    TrainLoopResult r = run_train_loop(model, cfg, out_dir, resume_path, loss_fn, nullptr);
    return r.checkpoint_path;
}

std::vector<Image> render_appearance_batch(const ScoreModel& model, const NoiseSchedule& sched,
                                           const std::vector<const Image*>& i_src,
                                           const std::vector<const DepthMap*>& x_src,
                                           const std::vector<const DepthMap*>& x_tgt, int steps,
                                           uint64_t seed) {
    if (i_src.empty() || i_src.size() != x_src.size() || i_src.size() != x_tgt.size())
        throw DataError("render_appearance: input count mismatch");
    std::vector<Tensor> conds;
    for (size_t i = 0; i < i_src.size(); ++i) {
        if (x_src[i]->h != i_src[i]->h || x_src[i]->w != i_src[i]->w ||
            x_tgt[i]->h != i_src[i]->h || x_tgt[i]->w != i_src[i]->w)
            throw ShapeError("render_appearance: image/depth shape mismatch");
        conds.push_back(make_condition(*i_src[i], *x_src[i], *x_tgt[i]));
    }
    Tensor cond = stack_batch(conds);
    Tensor out = diffusion::sample(model, cond, std::nullopt, steps, seed, sched);
    std::vector<Image> result(i_src.size());
    for (size_t i = 0; i < i_src.size(); ++i)
        result[i] = tensor_to_image(out, static_cast<int>(i));
    return result;
}

Image render_appearance(const ScoreModel& model, const NoiseSchedule& sched, const Image& i_src,
                        const DepthMap& x_src, const DepthMap& x_tgt, int steps, uint64_t seed) {
    return render_appearance_batch(model, sched, {&i_src}, {&x_src}, {&x_tgt}, steps, seed)[0];
}

Image render_appearance(const Checkpoint& ck, const Image& i_src, const DepthMap& x_src,
                        const DepthMap& x_tgt, int steps, uint64_t seed) {
    ScoreModel model = model_from_checkpoint(ck);
    const NoiseSchedule sched =
        NoiseSchedule::linear(ck.schedule.T, ck.schedule.beta_min, ck.schedule.beta_max);
    return render_appearance(model, sched, i_src, x_src, x_tgt, steps, seed);
}

Image composite_panel(const Image& rgb, const DepthMap& x_src, const DepthMap& x_tgt) {
    if (x_src.h != rgb.h || x_src.w != rgb.w || x_tgt.h != rgb.h || x_tgt.w != rgb.w)
        throw ShapeError("composite_panel: shape mismatch");
    Image tgt = geometry::colorize_depth(x_tgt);
    Image src = geometry::colorize_depth(x_src);
    Image out(rgb.h, rgb.w * 3);
    for (int r = 0; r < rgb.h; ++r)
        for (int c = 0; c < rgb.w; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                out.at(r, c, ch) = tgt.at(r, c, ch);
                out.at(r, rgb.w + c, ch) = src.at(r, c, ch);
                out.at(r, 2 * rgb.w + c, ch) = rgb.at(r, c, ch);
            }
    return out;
}

}  // namespace grlb::stage2
