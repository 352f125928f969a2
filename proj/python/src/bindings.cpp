#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "grlb/config.hpp"
#include "grlb/metrics.hpp"
#include "grlb/pipeline.hpp"

namespace py = pybind11;
using namespace grlb;

namespace {

DepthMap to_depth(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("depth map must be a 2-D float array");
    DepthMap d(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + d.size(), d.v.begin());
    return d;
}

Image to_image(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3)
        throw py::value_error("image must be an HxWx3 float array");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + img.v.size(), img.v.begin());
    return img;
}

Mask to_mask(const py::array_t<bool, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("mask must be a 2-D bool array");
    Mask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    for (int64_t i = 0; i < m.size(); ++i) m.v[i] = a.data()[i] ? 1 : 0;
    return m;
}

py::array_t<float> from_depth(const DepthMap& d) {
    py::array_t<float> out({d.h, d.w});
    std::copy(d.v.begin(), d.v.end(), out.mutable_data());
    return out;
}

py::array_t<float> from_image(const Image& img) {
    py::array_t<float> out({img.h, img.w, 3});
    std::copy(img.v.begin(), img.v.end(), out.mutable_data());
    return out;
}

py::array_t<bool> from_mask(const Mask& m) {
    py::array_t<bool> out({m.h, m.w});
    for (int64_t i = 0; i < m.size(); ++i) out.mutable_data()[i] = m.v[i] != 0;
    return out;
}

py::dict pair_to_dict(const scenegen::PairedSample& p) {
    py::dict d;
    d["id"] = p.id;
    d["i_minus"] = from_image(p.i_minus);
    d["i_plus"] = from_image(p.i_plus);
    d["x_minus"] = from_depth(p.x0_minus);
    d["x_plus"] = from_depth(p.x0_plus);
    d["mask"] = from_mask(p.mask);
    d["artifact_mask"] = from_mask(p.artifact_mask);
    d["seed"] = p.seed;
    return d;
}

TrainConfig config_from_json_str(const std::string& config_json, const std::string& context) {
    if (config_json.empty()) return TrainConfig{};
    return parse_train_config(nlohmann::json::parse(config_json), context);
}

}  // namespace

PYBIND11_MODULE(_grlb, m) {
    m.doc() = "Geometry-first object removal: depth-space editing plus "
              "geometry-conditioned re-rendering.";

    // scenegen ---------------------------------------------------------
    m.def(
        "generate_pair",
        [](uint64_t seed, int size) {
            scenegen::GenConfig cfg;
            cfg.height = size;
            cfg.width = size;
            Rng rng(seed);
            scenegen::SceneSpec scene = scenegen::sample_scene(rng, cfg);
            scene.seed = seed;
            return pair_to_dict(scenegen::make_pair(scene, 0));
        },
        py::arg("seed"), py::arg("size") = 64,
        "Draw one paired scene (with/without the target object).");
    m.def(
        "gen_dataset",
        [](const std::string& out_dir, uint64_t seed, const std::string& config_json) {
            scenegen::GenConfig cfg;
            if (!config_json.empty())
                cfg = parse_gen_config(nlohmann::json::parse(config_json), "gen_dataset");
            return scenegen::gen_dataset(cfg, seed, out_dir);
        },
        py::arg("out_dir"), py::arg("seed") = 0, py::arg("config_json") = "",
        "Write a paired dataset plus manifest.json; returns the manifest path.");

    // geometry ----------------------------------------------------------
    m.def("flow_loss", [](py::array_t<float> a, py::array_t<float> b) {
        return geometry::flow_loss(to_depth(a), to_depth(b));
    });
    m.def("reward", [](py::array_t<float> a, py::array_t<float> b) {
        return geometry::reward(to_depth(a), to_depth(b));
    });
    m.def("depth_flow", [](py::array_t<float> a) {
        geometry::FlowField f = geometry::depth_flow(to_depth(a));
        py::array_t<float> vert({f.h - 1, f.w});
        py::array_t<float> horiz({f.h, f.w - 1});
        std::copy(f.vert.begin(), f.vert.end(), vert.mutable_data());
        std::copy(f.horiz.begin(), f.horiz.end(), horiz.mutable_data());
        return py::make_tuple(vert, horiz);
    });
    m.def("mask_align_replace",
          [](py::array_t<float> pred, py::array_t<float> original, py::array_t<bool> mask) {
              return from_depth(
                  geometry::mask_align_replace(to_depth(pred), to_depth(original), to_mask(mask)));
          });
    m.def("masked_mae", [](py::array_t<float> pred, py::array_t<float> gt, py::array_t<bool> m) {
        return geometry::masked_mae(to_depth(pred), to_depth(gt), to_mask(m));
    });
    m.def(
        "local_max_fill_in",
        [](py::array_t<float> depth, py::array_t<bool> m, int window) {
            return from_depth(geometry::local_max_fill_in(to_depth(depth), to_mask(m), window));
        },
        py::arg("depth"), py::arg("mask"), py::arg("window") = 10);
    m.def("colorize_depth", [](py::array_t<float> depth) {
        return from_image(geometry::colorize_depth(to_depth(depth)));
    });
    m.def("bt_loss", [](py::array_t<float> x_hat, py::array_t<float> x_plus,
                        py::array_t<float> x_minus) {
        return stage1::bt_loss(to_depth(x_hat), to_depth(x_plus), to_depth(x_minus));
    });

    // metrics -----------------------------------------------------------
    m.def("psnr", [](py::array_t<float> a, py::array_t<float> b) {
        return metrics::psnr(to_image(a), to_image(b));
    });
    m.def("ssim", [](py::array_t<float> a, py::array_t<float> b) {
        return metrics::ssim(to_image(a), to_image(b));
    });
    m.def(
        "residue_iou",
        [](py::array_t<float> i_in, py::array_t<float> i_out, py::array_t<bool> artifact,
           int threshold) {
            return metrics::residue_iou(to_image(i_in), to_image(i_out), to_mask(artifact),
                                        threshold);
        },
        py::arg("i_in"), py::arg("i_out"), py::arg("artifact_mask"), py::arg("threshold") = 20);

    // training / inference ----------------------------------------------
    m.def(
        "train_stage1",
        [](const std::string& manifest, const std::string& out_dir,
           const std::string& config_json, const std::string& resume) {
            return stage1::train_stage1(manifest, config_from_json_str(config_json, "stage1"),
                                        out_dir, resume);
        },
        py::arg("manifest"), py::arg("out_dir"), py::arg("config_json") = "",
        py::arg("resume") = "");
    m.def(
        "train_stage2",
        [](const std::string& manifest, const std::string& out_dir,
           const std::string& config_json, const std::string& resume) {
            return stage2::train_stage2(manifest, config_from_json_str(config_json, "stage2"),
                                        out_dir, resume);
        },
        py::arg("manifest"), py::arg("out_dir"), py::arg("config_json") = "",
        py::arg("resume") = "");
    m.def(
        "train_onestage",
        [](const std::string& manifest, const std::string& out_dir,
           const std::string& config_json, const std::string& resume) {
            return baseline::train_onestage(manifest, config_from_json_str(config_json, "onestage"),
                                            out_dir, resume);
        },
        py::arg("manifest"), py::arg("out_dir"), py::arg("config_json") = "",
        py::arg("resume") = "");
    m.def(
        "remove_geometry",
        [](const std::string& checkpoint, py::array_t<float> depth, py::array_t<bool> mask,
           int steps, uint64_t seed) {
            Checkpoint ck = load_checkpoint(checkpoint);
            return from_depth(stage1::remove_geometry(ck, to_depth(depth), to_mask(mask), steps,
                                                      seed));
        },
        py::arg("checkpoint"), py::arg("depth"), py::arg("mask"), py::arg("steps") = 50,
        py::arg("seed") = 0);
    m.def(
        "render_appearance",
        [](const std::string& checkpoint, py::array_t<float> image, py::array_t<float> x_src,
           py::array_t<float> x_tgt, int steps, uint64_t seed) {
            Checkpoint ck = load_checkpoint(checkpoint);
            return from_image(stage2::render_appearance(ck, to_image(image), to_depth(x_src),
                                                        to_depth(x_tgt), steps, seed));
        },
        py::arg("checkpoint"), py::arg("image"), py::arg("x_src"), py::arg("x_tgt"),
        py::arg("steps") = 50, py::arg("seed") = 0);
    m.def(
        "run_onestage",
        [](const std::string& checkpoint, py::array_t<float> image, py::array_t<float> depth,
           py::array_t<bool> mask, int steps, uint64_t seed) {
            Checkpoint ck = load_checkpoint(checkpoint);
            return from_image(baseline::run_onestage(ck, to_image(image), to_depth(depth),
                                                     to_mask(mask), steps, seed));
        },
        py::arg("checkpoint"), py::arg("image"), py::arg("depth"), py::arg("mask"),
        py::arg("steps") = 50, py::arg("seed") = 0);
    m.def(
        "remove",
        [](const std::string& stage1_ck, const std::string& stage2_ck, py::array_t<float> image,
           py::array_t<float> depth, py::array_t<bool> mask, int steps, uint64_t seed,
           bool fill_in) {
            Checkpoint ck1 = load_checkpoint(stage1_ck);
            Checkpoint ck2 = load_checkpoint(stage2_ck);
            ScoreModel s1 = model_from_checkpoint(ck1);
            ScoreModel s2 = model_from_checkpoint(ck2);
            auto sched1 = diffusion::NoiseSchedule::linear(ck1.schedule.T, ck1.schedule.beta_min,
                                                           ck1.schedule.beta_max);
            auto sched2 = diffusion::NoiseSchedule::linear(ck2.schedule.T, ck2.schedule.beta_min,
                                                           ck2.schedule.beta_max);
            pipeline::RemoveOptions opts;
            opts.steps = steps;
            opts.seed = seed;
            opts.fill_in = fill_in;
            auto res = pipeline::remove_single(s1, sched1, s2, sched2, to_image(image),
                                               to_depth(depth), to_mask(mask), opts);
            py::dict out;
            out["output"] = from_image(res.output);
            out["stage1_depth"] = from_depth(res.stage1_out);
            out["fill_in_applied"] = res.fill_in_applied;
            return out;
        },
        py::arg("stage1_checkpoint"), py::arg("stage2_checkpoint"), py::arg("image"),
        py::arg("depth"), py::arg("mask"), py::arg("steps") = 50, py::arg("seed") = 0,
        py::arg("fill_in") = false,
        "Full two-stage removal; returns output image, edited depth, fill-in flag.");
}
