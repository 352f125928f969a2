#include "grlb/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace grlb {

namespace fs = std::filesystem;
using nlohmann::json;

TrainLoopResult run_train_loop(
    ScoreModel& model, const TrainConfig& cfg, const std::string& out_dir,
    const std::string& resume_path,
    const std::function<Tensor(Rng& rng, std::map<std::string, double>& comps)>& loss_fn,
    const std::function<void(int step, json& record)>& val_fn) {
    fs::create_directories(out_dir);
    const std::string ckpt_path = (fs::path(out_dir) / "ckpt.grlb").string();
    const std::string log_path = (fs::path(out_dir) / "metrics.jsonl").string();
    write_json_file((fs::path(out_dir) / "resolved_config.json").string(),
                    train_config_to_json(cfg));

    AdamConfig ac;
    ac.lr = cfg.lr;
    Adam adam(model.params(), ac);
    Rng rng(Rng::mix(cfg.seed ^ 0x747261696e6c6full));  // training stream
    const ScheduleParams sched_params{cfg.schedule_t, cfg.beta_min, cfg.beta_max};
    int64_t start_step = 0;

    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path);
        if (!(ck.arch == model.arch()))
            throw DataError("resume: checkpoint architecture does not match config");
        ScoreModel restored = model_from_checkpoint(ck);
        for (size_t i = 0; i < model.params().size(); ++i) {
            auto src = restored.params()[i].second.data();
            std::copy(src.begin(), src.end(), model.params()[i].second.mutable_data().begin());
        }
        if (ck.has_optimizer) {
            std::vector<std::vector<float>> m, v;
            for (const auto& [name, param] : model.params()) {
                bool found_m = false, found_v = false;
                for (const auto& [cname, ct] : ck.tensors) {
                    if (cname == "opt/m/" + name) {
                        m.emplace_back(ct.data().begin(), ct.data().end());
                        found_m = true;
                    } else if (cname == "opt/v/" + name) {
                        v.emplace_back(ct.data().begin(), ct.data().end());
                        found_v = true;
                    }
                }
                if (!found_m || !found_v)
                    throw DataError("resume: optimizer state missing for " + name);
            }
            adam.set_state(ck.adam_step, std::move(m), std::move(v));
        }
        if (ck.has_rng) rng.set_state(ck.rng_key, ck.rng_counter);
        start_step = ck.step;
    }

    std::ofstream log(log_path, start_step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot write metrics log: " + log_path);

    TrainLoopResult result;
    double window_acc = 0.0;
    int window_n = 0;
    bool first_window_set = false;

    if (cfg.steps == start_step || cfg.steps == 0) {
        // Zero remaining work: the checkpoint is the (possibly restored)
        // initialization.
        save_checkpoint(ckpt_path, model, &adam, &rng, start_step, sched_params);
        result.checkpoint_path = ckpt_path;
        return result;
    }

    for (int64_t step = start_step + 1; step <= cfg.steps; ++step) {
        model.zero_grad();
        std::map<std::string, double> comps;
        Tensor loss = loss_fn(rng, comps);
        const double lv = loss.value();
        if (!std::isfinite(lv)) throw std::runtime_error("training loss is non-finite");
        loss.backward();
        adam.step();

        window_acc += lv;
        window_n++;
        if (step % cfg.log_every == 0 || step == cfg.steps) {
            json rec{{"step", step}, {"loss", window_acc / window_n}};
            for (const auto& [k, v] : comps) rec[k] = v;
            if (!first_window_set) {
                result.first_window_loss = window_acc / window_n;
                first_window_set = true;
            }
            result.last_window_loss = window_acc / window_n;
            window_acc = 0.0;
            window_n = 0;
            if (cfg.val_every > 0 && val_fn &&
                (step % cfg.val_every == 0 || step == cfg.steps))
                val_fn(static_cast<int>(step), rec);
            log << rec.dump() << "\n";
            log.flush();
        }
        if (step % cfg.checkpoint_every == 0 || step == cfg.steps)
            save_checkpoint(ckpt_path, model, &adam, &rng, step, sched_params);
    }
    result.checkpoint_path = ckpt_path;
    return result;
}

}  // namespace grlb
