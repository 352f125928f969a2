#include "grlb/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "grlb/common.hpp"

namespace grlb::scenegen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

float elevation_deg(const float light[3]) {
    return static_cast<float>(std::asin(std::min(1.0f, std::max(-1.0f, light[2]))) * 180.0 / kPi);
}

}  // namespace

void SceneSpec::validate() const {
    if (h < 8 || w < 8) throw DataError("scene: grid too small");
    if (ground_albedo.size() != static_cast<size_t>(h) * w ||
        ground_height.size() != static_cast<size_t>(h) * w)
        throw DataError("scene: ground field size mismatch");
    const float norm = std::sqrt(light[0] * light[0] + light[1] * light[1] + light[2] * light[2]);
    if (std::fabs(norm - 1.0f) > 1e-3f) throw DataError("scene: light direction not unit length");
    const float elev = elevation_deg(light);
    if (elev < 20.0f - 1e-3f || elev > 70.0f + 1e-3f)
        throw DataError("scene: light elevation " + std::to_string(elev) + " outside [20,70] deg");
    float gmin = 1e9f, gmax = -1e9f;
    for (float g : ground_height) {
        gmin = std::min(gmin, g);
        gmax = std::max(gmax, g);
    }
    if (!ground_height.empty() && gmax - gmin > 0.05f + 1e-6f)
        throw DataError("scene: ground gradient range exceeds 0.05");
    for (const auto& o : objects) {
        if (o.radius < 3.0f) throw DataError("scene: object radius < 3 px");
        if (o.height <= 0.1f || o.height > 0.8f)
            throw DataError("scene: object height outside (0.1, 0.8]");
        if (o.albedo < 0.0f || o.albedo > 1.0f) throw DataError("scene: object albedo outside [0,1]");
        const int rad = static_cast<int>(std::ceil(o.radius));
        if (o.row - rad < 0 || o.row + rad >= h || o.col - rad < 0 || o.col + rad >= w)
            throw DataError("scene: object footprint leaves the grid");
        if (mirror.enabled() && o.row + rad >= mirror.r0 && o.row - rad < mirror.r1)
            throw DataError("scene: object footprint intersects the mirror strip");
    }
}

float object_height_at(const ObjectSpec& o, int r, int c) {
    const float dr = static_cast<float>(r - o.row);
    const float dc = static_cast<float>(c - o.col);
    switch (o.kind) {
        case ObjectKind::kBox:
            return (std::fabs(dr) <= o.radius && std::fabs(dc) <= o.radius) ? o.height : 0.0f;
        case ObjectKind::kCylinder:
            return (dr * dr + dc * dc <= o.radius * o.radius) ? o.height : 0.0f;
        case ObjectKind::kDome: {
            const float d2 = (dr * dr + dc * dc) / (o.radius * o.radius);
            return d2 < 1.0f ? o.height * std::sqrt(1.0f - d2) : 0.0f;
        }
    }
    return 0.0f;
}

Mask object_footprint(const SceneSpec& scene, size_t object_id) {
    if (object_id >= scene.objects.size()) throw DataError("object_footprint: no such object");
    const auto& o = scene.objects[object_id];
    Mask m(scene.h, scene.w);
    for (int r = 0; r < scene.h; ++r)
        for (int c = 0; c < scene.w; ++c) m.at(r, c) = object_height_at(o, r, c) > 0.0f ? 1 : 0;
    return m;
}

DepthMap height_field(const SceneSpec& scene, const std::vector<size_t>& include) {
    DepthMap hf(scene.h, scene.w);
    for (int r = 0; r < scene.h; ++r) {
        for (int c = 0; c < scene.w; ++c) {
            float obj = 0.0f;
            for (size_t id : include) obj = std::max(obj, object_height_at(scene.objects[id], r, c));
            hf.at(r, c) = scene.ground_height[static_cast<size_t>(r) * scene.w + c] + obj;
        }
    }
    return hf;
}

DepthMap render_depth(const SceneSpec& scene, const std::vector<size_t>& include) {
    DepthMap d = height_field(scene, include);
    for (auto& v : d.v) v = 1.0f - v;
    return d;
}

Mask shadow_mask(const DepthMap& height, const float light[3]) {
    const float horiz = std::sqrt(light[0] * light[0] + light[1] * light[1]);
    if (light[2] <= 0.0f) throw DataError("shadow_mask: light must have positive elevation");
    Mask out(height.h, height.w);
    if (horiz < 1e-6f) return out;  // light at zenith casts no shadows
    const float ux = light[0] / horiz;
    const float uy = light[1] / horiz;
    const float rise = light[2] / horiz / kHScale;  // depth units per pixel of march
    for (int r = 0; r < height.h; ++r) {
        for (int c = 0; c < height.w; ++c) {
            const float h0 = height.at(r, c);
            for (int s = 1; s <= height.w; ++s) {
                const int rr = static_cast<int>(std::lround(r + s * uy));
                const int cc = static_cast<int>(std::lround(c + s * ux));
                if (rr < 0 || rr >= height.h || cc < 0 || cc >= height.w) break;
                if (height.at(rr, cc) > h0 + s * rise) {
                    out.at(r, c) = 1;
                    break;
                }
            }
        }
    }
    return out;
}

Image render_rgb(const DepthMap& depth, const std::vector<float>& albedo, const float light[3],
                 const Mask& shadow, const MirrorStrip& mirror, const Mask& silhouette) {
    const int H = depth.h, W = depth.w;
    if (albedo.size() != static_cast<size_t>(H) * W || shadow.h != H || shadow.w != W)
        throw ShapeError("render_rgb: field shape mismatch");
    Image img(H, W);
    // Heightfield normals in grid units, central differences (one-sided at
    // the border). Axes: x = columns, y = rows, z = up.
    auto hg = [&](int r, int c) { return (1.0f - depth.at(r, c)) * kHScale; };
    for (int r = 0; r < H; ++r) {
        for (int c = 0; c < W; ++c) {
            const int c0 = std::max(0, c - 1), c1 = std::min(W - 1, c + 1);
            const int r0 = std::max(0, r - 1), r1 = std::min(H - 1, r + 1);
            const float dhdx = (hg(r, c1) - hg(r, c0)) / static_cast<float>(c1 - c0);
            const float dhdy = (hg(r1, c) - hg(r0, c)) / static_cast<float>(r1 - r0);
            const float inv = 1.0f / std::sqrt(dhdx * dhdx + dhdy * dhdy + 1.0f);
            const float shade =
                std::max(0.0f, inv * (-dhdx * light[0] - dhdy * light[1] + light[2]));
            float g = albedo[static_cast<size_t>(r) * W + c] * shade;
            if (shadow.at(r, c)) g *= kShadowAttenuation;
            g = std::min(1.0f, std::max(0.0f, g));
            img.at(r, c, 0) = g;
            img.at(r, c, 1) = g;
            img.at(r, c, 2) = g;
        }
    }
    if (mirror.enabled()) {
        if (silhouette.h != H || silhouette.w != W)
            throw ShapeError("render_rgb: silhouette shape mismatch");
        // Vertical mirror about the strip's top edge; only source pixels
        // above the strip reflect, and only into the strip rows.
        for (int r = 0; r < mirror.r0; ++r) {
            const int rr = 2 * mirror.r0 - 1 - r;
            if (rr < mirror.r0 || rr >= mirror.r1 || rr >= H) continue;
            for (int c = 0; c < W; ++c) {
                if (!silhouette.at(r, c)) continue;
                for (int ch = 0; ch < 3; ++ch) {
                    const float base = img.at(rr, c, ch);
                    img.at(rr, c, ch) = (1.0f - kReflectionOpacity) * base +
                                        kReflectionOpacity * img.at(r, c, ch);
                }
            }
        }
    }
    return img;
}

namespace {

std::vector<float> albedo_field(const SceneSpec& scene, const std::vector<size_t>& include) {
    std::vector<float> a = scene.ground_albedo;
    for (int r = 0; r < scene.h; ++r) {
        for (int c = 0; c < scene.w; ++c) {
            float best = 0.0f;
            int owner = -1;
            for (size_t id : include) {
                const float hp = object_height_at(scene.objects[id], r, c);
                if (hp > best) {
                    best = hp;
                    owner = static_cast<int>(id);
                }
            }
            if (owner >= 0) a[static_cast<size_t>(r) * scene.w + c] = scene.objects[owner].albedo;
        }
    }
    return a;
}

Mask mirror_silhouette(const SceneSpec& scene, const std::vector<size_t>& include) {
    Mask sil(scene.h, scene.w);
    if (!scene.mirror.enabled()) return sil;
    for (int r = 0; r < std::min(scene.h, scene.mirror.r0); ++r)
        for (int c = 0; c < scene.w; ++c)
            for (size_t id : include)
                if (object_height_at(scene.objects[id], r, c) > 0.0f) {
                    sil.at(r, c) = 1;
                    break;
                }
    return sil;
}

Image render_scene(const SceneSpec& scene, const std::vector<size_t>& include, DepthMap* depth_out) {
    DepthMap hf = height_field(scene, include);
    Mask shadow = shadow_mask(hf, scene.light);
    DepthMap depth = hf;
    for (auto& v : depth.v) v = 1.0f - v;
    Image img = render_rgb(depth, albedo_field(scene, include), scene.light, shadow, scene.mirror,
                           mirror_silhouette(scene, include));
    if (depth_out) *depth_out = std::move(depth);
    return img;
}

}  // namespace

PairedSample make_pair(const SceneSpec& scene, size_t target_id) {
    scene.validate();
    if (target_id >= scene.objects.size()) throw DataError("make_pair: no such target object");
    PairedSample p;
    p.mask = object_footprint(scene, target_id);
    if (p.mask.empty()) throw DataError("make_pair: target footprint is empty");

    std::vector<size_t> with, without;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        with.push_back(i);
        if (i != target_id) without.push_back(i);
    }
    p.i_minus = render_scene(scene, with, &p.x0_minus);
    p.i_plus = render_scene(scene, without, &p.x0_plus);

    // Exact causal attribution: everything outside M that the target's
    // presence changed (shadow difference, reflections, boundary shading).
    p.artifact_mask = Mask(scene.h, scene.w);
    for (int64_t i = 0; i < p.artifact_mask.size(); ++i) {
        if (p.mask.v[i]) continue;
        const bool differs = p.i_minus.v[i * 3] != p.i_plus.v[i * 3] ||
                             p.i_minus.v[i * 3 + 1] != p.i_plus.v[i * 3 + 1] ||
                             p.i_minus.v[i * 3 + 2] != p.i_plus.v[i * 3 + 2];
        p.artifact_mask.v[i] = differs ? 1 : 0;
    }
    p.seed = scene.seed;
    return p;
}

DepthMap corrupt_depth(const DepthMap& depth, const Mask& m, CorruptMode mode) {
    if (m.h != depth.h || m.w != depth.w) throw ShapeError("corrupt_depth: mask shape mismatch");
    DepthMap out = depth;
    if (mode == CorruptMode::kFlattenToInput) {
        // The simulated failed edit: masked region keeps the input values.
        return out;
    }
    const int radius = 2;
    for (int r = 0; r < depth.h; ++r) {
        for (int c = 0; c < depth.w; ++c) {
            if (!m.at(r, c)) continue;
            const int r0 = std::max(0, r - radius), r1 = std::min(depth.h - 1, r + radius);
            const int c0 = std::max(0, c - radius), c1 = std::min(depth.w - 1, c + radius);
            double acc = 0.0;
            for (int rr = r0; rr <= r1; ++rr)
                for (int cc = c0; cc <= c1; ++cc) acc += depth.at(rr, cc);
            out.at(r, c) = static_cast<float>(acc / ((r1 - r0 + 1) * (c1 - c0 + 1)));
        }
    }
    return out;
}

SceneSpec sample_scene(Rng& rng, const GenConfig& cfg) {
    SceneSpec s;
    s.h = cfg.height;
    s.w = cfg.width;
    const size_t n = static_cast<size_t>(s.h) * s.w;

    // Ground albedo: base level plus a low-frequency wave, kept in [0,1].
    const float base = rng.uniform(cfg.ground_albedo_min, cfg.ground_albedo_max);
    const float amp = rng.uniform(0.0f, 0.08f);
    const float fr = rng.uniform(0.5f, 2.0f), fc = rng.uniform(0.5f, 2.0f);
    const float phase = rng.uniform(0.0f, static_cast<float>(2.0 * kPi));
    s.ground_albedo.resize(n);
    for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c)
            s.ground_albedo[static_cast<size_t>(r) * s.w + c] = std::min(
                1.0f, std::max(0.0f, base + amp * std::sin(2.0f * static_cast<float>(kPi) *
                                                               (fr * r / s.h + fc * c / s.w) +
                                                           phase)));

    // Ground height: linear ramp with range <= ground_slope_max.
    const float slope = rng.uniform(0.0f, cfg.ground_slope_max);
    const float theta = rng.uniform(0.0f, static_cast<float>(2.0 * kPi));
    const float dx = std::cos(theta), dy = std::sin(theta);
    s.ground_height.resize(n);
    float pmin = 1e9f, pmax = -1e9f;
    for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c) {
            const float proj = dx * c + dy * r;
            pmin = std::min(pmin, proj);
            pmax = std::max(pmax, proj);
        }
    for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c)
            s.ground_height[static_cast<size_t>(r) * s.w + c] =
                slope * (dx * c + dy * r - pmin) / std::max(1e-6f, pmax - pmin);

    // Light.
    const float elev = rng.uniform(cfg.elevation_min_deg, cfg.elevation_max_deg) *
                       static_cast<float>(kPi) / 180.0f;
    const float az = rng.uniform(0.0f, static_cast<float>(2.0 * kPi));
    s.light[0] = std::cos(elev) * std::cos(az);
    s.light[1] = std::cos(elev) * std::sin(az);
    s.light[2] = std::sin(elev);

    // Mirror strip near the bottom; objects are placed clear of it.
    if (rng.uniform() < cfg.mirror_prob) {
        const int width = static_cast<int>(rng.uniform_int(5, 8));
        const int r0 = static_cast<int>(rng.uniform_int(s.h - 16, s.h - width - 1));
        s.mirror = {r0, r0 + width};
    }

    const int want = static_cast<int>(rng.uniform_int(cfg.min_objects, cfg.max_objects));
    for (int k = 0; k < want; ++k) {
        for (int attempt = 0; attempt < 60; ++attempt) {
            ObjectSpec o;
            const int kind = static_cast<int>(rng.uniform_int(0, 2));
            o.kind = kind == 0 ? ObjectKind::kBox
                               : (kind == 1 ? ObjectKind::kCylinder : ObjectKind::kDome);
            o.radius = rng.uniform(cfg.radius_min, cfg.radius_max);
            o.height = rng.uniform(cfg.object_height_min, cfg.object_height_max);
            o.albedo = rng.uniform(cfg.albedo_min, cfg.albedo_max);
            const int rad = static_cast<int>(std::ceil(o.radius));
            const int rmax = (s.mirror.enabled() ? s.mirror.r0 : s.h) - rad - 2;
            if (rmax <= rad + 1) break;
            o.row = static_cast<int>(rng.uniform_int(rad + 1, rmax));
            o.col = static_cast<int>(rng.uniform_int(rad + 1, s.w - rad - 2));
            bool clear = true;
            for (const auto& other : s.objects) {
                const float min_gap = o.radius + other.radius + 2.0f;
                const float dr = static_cast<float>(o.row - other.row);
                const float dc = static_cast<float>(o.col - other.col);
                if (dr * dr + dc * dc < min_gap * min_gap) {
                    clear = false;
                    break;
                }
            }
            if (clear) {
                s.objects.push_back(o);
                break;
            }
        }
    }
    if (s.objects.empty()) {
        // Guaranteed fallback so every drawn scene has a removable target.
        ObjectSpec o;
        o.kind = ObjectKind::kCylinder;
        o.radius = cfg.radius_min;
        o.height = 0.4f;
        o.albedo = 0.6f;
        o.row = s.h / 3;
        o.col = s.w / 2;
        s.objects.push_back(o);
    }
    return s;
}

std::string split_for_id(const std::string& id, double val_fraction) {
    const uint64_t bucket = fnv1a(id) % 10000;
    return bucket < static_cast<uint64_t>(std::lround(val_fraction * 10000.0)) ? "val" : "train";
}

std::string gen_dataset(const GenConfig& cfg, uint64_t seed, const std::string& out_dir) {
    fs::create_directories(out_dir);
    if (!fs::is_directory(out_dir)) throw DataError("gen_dataset: cannot create " + out_dir);

    struct Entry {
        std::string id, split;
        uint64_t sample_seed;
    };
    std::vector<Entry> entries(cfg.count);
    for (int i = 0; i < cfg.count; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "s%06d", i);
        entries[i].id = buf;
        entries[i].sample_seed = seed ^ fnv1a(entries[i].id);
        entries[i].split = split_for_id(entries[i].id, cfg.val_fraction);
    }

    parallel_for(cfg.count, [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            Rng rng(entries[i].sample_seed);
            SceneSpec scene = sample_scene(rng, cfg);
            scene.seed = entries[i].sample_seed;
            PairedSample p = make_pair(scene, 0);
            const fs::path dir = fs::path(out_dir) / entries[i].id;
            fs::create_directories(dir);
            write_image_png((dir / "i_minus.png").string(), p.i_minus);
            write_image_png((dir / "i_plus.png").string(), p.i_plus);
            write_depth_png((dir / "x_minus.png").string(), p.x0_minus);
            write_depth_png((dir / "x_plus.png").string(), p.x0_plus);
            write_mask_png((dir / "mask.png").string(), p.mask);
            write_mask_png((dir / "artifact_mask.png").string(), p.artifact_mask);
        }
    });

    json manifest = json::array();
    for (const auto& e : entries) {
        manifest.push_back({{"id", e.id},
                            {"files",
                             {{"i_minus", e.id + "/i_minus.png"},
                              {"i_plus", e.id + "/i_plus.png"},
                              {"x_minus", e.id + "/x_minus.png"},
                              {"x_plus", e.id + "/x_plus.png"},
                              {"mask", e.id + "/mask.png"},
                              {"artifact_mask", e.id + "/artifact_mask.png"}}},
                            {"seed", e.sample_seed},
                            {"split", e.split}});
    }
    const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
    std::ofstream out(manifest_path);
    if (!out) throw DataError("gen_dataset: cannot write " + manifest_path);
    out << manifest.dump(2) << "\n";
    return manifest_path;
}

}  // namespace grlb::scenegen
