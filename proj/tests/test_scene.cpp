#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "grlb/scene.hpp"

using namespace grlb;
using namespace grlb::scenegen;
namespace fs = std::filesystem;

namespace {

SceneSpec flat_scene(int h = 64, int w = 64) {
    SceneSpec s;
    s.h = h;
    s.w = w;
    s.ground_albedo.assign(static_cast<size_t>(h) * w, 0.6f);
    s.ground_height.assign(static_cast<size_t>(h) * w, 0.0f);
    const float elev = 45.0f * 3.14159265f / 180.0f;
    s.light[0] = std::cos(elev);  // light along +columns
    s.light[1] = 0.0f;
    s.light[2] = std::sin(elev);
    return s;
}

}  // namespace

TEST_CASE("render_depth") {
    SUBCASE("empty flat scene is constant depth 1") {
        SceneSpec s = flat_scene();
        DepthMap d = render_depth(s, {});
        for (float v : d.v) CHECK(v == 1.0f);
    }
    SUBCASE("box of height 0.5 reads 0.5 inside, ground outside") {
        SceneSpec s = flat_scene();
        s.objects.push_back({ObjectKind::kBox, 32, 32, 5.0f, 0.5f, 0.8f});
        DepthMap d = render_depth(s, {0});
        CHECK(d.at(32, 32) == 0.5f);
        CHECK(d.at(32, 36) == 0.5f);
        CHECK(d.at(32, 40) == 1.0f);
    }
    SUBCASE("dome follows the closed-form profile") {
        SceneSpec s = flat_scene();
        const float r = 6.0f, hgt = 0.4f;
        s.objects.push_back({ObjectKind::kDome, 30, 30, r, hgt, 0.8f});
        DepthMap d = render_depth(s, {0});
        for (int dc = 0; dc < 6; ++dc) {
            const float dist = static_cast<float>(dc);
            const float expect = 1.0f - hgt * std::sqrt(1.0f - (dist / r) * (dist / r));
            CHECK(d.at(30, 30 + dc) == doctest::Approx(expect).epsilon(1e-6));
        }
    }
}

TEST_CASE("shadow_mask") {
    SUBCASE("flat scene casts nothing") {
        SceneSpec s = flat_scene();
        DepthMap h = height_field(s, {});
        CHECK(shadow_mask(h, s.light).count() == 0);
    }
    SUBCASE("box shadow length matches the 1-D ray-march formula") {
        // Height h, elevation 45 deg: the shadow runs floor(h * kHScale)
        // pixels away from the light azimuth (here light points along
        // +columns, so the shadow extends toward smaller columns).
        SceneSpec s = flat_scene();
        const float hgt = 0.26f;  // 0.26 * 32 = 8.32 -> 8 px
        s.objects.push_back({ObjectKind::kBox, 32, 32, 4.0f, hgt, 0.8f});
        DepthMap h = height_field(s, {0});
        Mask m = shadow_mask(h, s.light);
        const int left_edge = 28;  // box occupies columns [28, 36]
        const int expect = static_cast<int>(hgt * kHScale);  // 8
        for (int k = 1; k <= expect; ++k) CHECK(m.at(32, left_edge - k) == 1);
        CHECK(m.at(32, left_edge - expect - 1) == 0);
    }
    SUBCASE("two disjoint boxes shadow the union of their single-box masks") {
        SceneSpec s = flat_scene();
        s.objects.push_back({ObjectKind::kBox, 16, 40, 4.0f, 0.3f, 0.8f});
        s.objects.push_back({ObjectKind::kBox, 48, 40, 4.0f, 0.45f, 0.8f});
        Mask both = shadow_mask(height_field(s, {0, 1}), s.light);
        Mask a = shadow_mask(height_field(s, {0}), s.light);
        Mask b = shadow_mask(height_field(s, {1}), s.light);
        for (int64_t i = 0; i < both.size(); ++i)
            CHECK(static_cast<int>(both.v[i]) == static_cast<int>(a.v[i] || b.v[i]));
    }
    SUBCASE("taller objects never shrink their shadow") {
        SceneSpec s = flat_scene();
        s.objects.push_back({ObjectKind::kCylinder, 32, 32, 5.0f, 0.2f, 0.8f});
        Mask small = shadow_mask(height_field(s, {0}), s.light);
        s.objects[0].height = 0.6f;
        Mask tall = shadow_mask(height_field(s, {0}), s.light);
        for (int64_t i = 0; i < small.size(); ++i)
            if (small.v[i]) CHECK(tall.v[i] == 1);
    }
}

TEST_CASE("render_rgb") {
    SUBCASE("flat unshadowed scene shades to albedo * (light . normal)") {
        SceneSpec s = flat_scene();
        DepthMap d = render_depth(s, {});
        Mask shadow(s.h, s.w, 0);
        Mask sil(s.h, s.w, 0);
        Image img = render_rgb(d, s.ground_albedo, s.light, shadow, s.mirror, sil);
        const float expect = 0.6f * s.light[2];  // flat normal = up
        for (int64_t i = 0; i < img.pixels(); ++i)
            CHECK(img.v[i * 3] == doctest::Approx(expect).epsilon(1e-6));
    }
    SUBCASE("shadowed pixels are exactly 0.45x their unshadowed value") {
        SceneSpec s = flat_scene();
        DepthMap d = render_depth(s, {});
        Mask none(s.h, s.w, 0), some(s.h, s.w, 0), sil(s.h, s.w, 0);
        some.at(10, 10) = 1;
        Image lit = render_rgb(d, s.ground_albedo, s.light, none, s.mirror, sil);
        Image shaded = render_rgb(d, s.ground_albedo, s.light, some, s.mirror, sil);
        CHECK(shaded.at(10, 10, 0) == doctest::Approx(0.45f * lit.at(10, 10, 0)).epsilon(1e-6));
        CHECK(shaded.at(10, 11, 0) == lit.at(10, 11, 0));
    }
}

TEST_CASE("make_pair invariants on a single box") {
    SceneSpec s = flat_scene();
    s.objects.push_back({ObjectKind::kBox, 30, 36, 4.0f, 0.4f, 0.9f});
    PairedSample p = make_pair(s, 0);

    CHECK(!p.mask.empty());
    // Depth identical outside M, bit-exact.
    for (int64_t i = 0; i < p.mask.size(); ++i)
        if (!p.mask.v[i]) CHECK(p.x0_minus.v[i] == p.x0_plus.v[i]);
    // Images identical outside M + artifact.
    for (int64_t i = 0; i < p.mask.size(); ++i)
        if (!p.mask.v[i] && !p.artifact_mask.v[i])
            for (int ch = 0; ch < 3; ++ch)
                CHECK(p.i_minus.v[i * 3 + ch] == p.i_plus.v[i * 3 + ch]);
    CHECK([&] {
        for (int64_t i = 0; i < p.mask.size(); ++i)
            if (p.mask.v[i] && p.artifact_mask.v[i]) return false;
        return true;
    }());

    // The artifact region contains the shadow difference and nothing
    // farther than one pixel from the shadow or the footprint (the 1-px
    // ring comes from the shading normals' stencil).
    Mask shadow_minus = shadow_mask(height_field(s, {0}), s.light);
    Mask shadow_plus = shadow_mask(height_field(s, {}), s.light);
    auto near_mask = [&](const Mask& m, int r, int c) {
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                const int rr = r + dr, cc = c + dc;
                if (rr >= 0 && rr < m.h && cc >= 0 && cc < m.w && m.at(rr, cc)) return true;
            }
        return false;
    };
    for (int r = 0; r < s.h; ++r)
        for (int c = 0; c < s.w; ++c) {
            const bool shadow_diff = shadow_minus.at(r, c) && !shadow_plus.at(r, c);
            if (shadow_diff && !p.mask.at(r, c)) CHECK(p.artifact_mask.at(r, c) == 1);
            if (p.artifact_mask.at(r, c))
                CHECK((near_mask(shadow_minus, r, c) || near_mask(p.mask, r, c)));
        }
}

TEST_CASE("make_pair with a mirror strip includes reflection pixels") {
    SceneSpec s = flat_scene();
    s.mirror = {50, 58};
    s.objects.push_back({ObjectKind::kBox, 44, 32, 4.0f, 0.5f, 0.9f});
    PairedSample p = make_pair(s, 0);
    // The object bottom row is 48; its reflection lands starting at row 51.
    bool any_reflection = false;
    for (int r = s.mirror.r0; r < s.mirror.r1 && !any_reflection; ++r)
        for (int c = 28; c <= 36; ++c)
            if (p.artifact_mask.at(r, c)) {
                any_reflection = true;
                break;
            }
    CHECK(any_reflection);
}

TEST_CASE("removing object A leaves object B bit-identical outside A's artifact region") {
    SceneSpec s = flat_scene();
    s.objects.push_back({ObjectKind::kBox, 20, 20, 4.0f, 0.5f, 0.9f});       // A (target)
    s.objects.push_back({ObjectKind::kCylinder, 44, 44, 5.0f, 0.3f, 0.4f});  // B
    PairedSample p = make_pair(s, 0);
    Mask bfoot = object_footprint(s, 1);
    for (int64_t i = 0; i < bfoot.size(); ++i) {
        if (!bfoot.v[i] || p.artifact_mask.v[i] || p.mask.v[i]) continue;
        for (int ch = 0; ch < 3; ++ch)
            CHECK(p.i_minus.v[i * 3 + ch] == p.i_plus.v[i * 3 + ch]);
    }
}

TEST_CASE("make_pair refuses a missing or empty target") {
    SceneSpec s = flat_scene();
    CHECK_THROWS_AS(make_pair(s, 0), DataError);
}

TEST_CASE("paired-sample invariants hold over 500 random scenes") {
    GenConfig cfg;
    cfg.height = 48;
    cfg.width = 48;
    int checked = 0;
    for (int i = 0; i < 500; ++i) {
        Rng rng(1000 + i);
        SceneSpec s = sample_scene(rng, cfg);
        PairedSample p = make_pair(s, 0);
        checked++;
        REQUIRE(!p.mask.empty());
        bool ok_depth = true, ok_img = true, ok_disjoint = true;
        for (int64_t k = 0; k < p.mask.size(); ++k) {
            if (!p.mask.v[k] && p.x0_minus.v[k] != p.x0_plus.v[k]) ok_depth = false;
            if (!p.mask.v[k] && !p.artifact_mask.v[k]) {
                for (int ch = 0; ch < 3; ++ch)
                    if (p.i_minus.v[k * 3 + ch] != p.i_plus.v[k * 3 + ch]) ok_img = false;
            }
            if (p.mask.v[k] && p.artifact_mask.v[k]) ok_disjoint = false;
        }
        REQUIRE(ok_depth);
        REQUIRE(ok_img);
        REQUIRE(ok_disjoint);
    }
    CHECK(checked == 500);
}

TEST_CASE("corrupt_depth") {
    SceneSpec s = flat_scene();
    s.objects.push_back({ObjectKind::kBox, 30, 30, 4.0f, 0.5f, 0.8f});
    PairedSample p = make_pair(s, 0);
    SUBCASE("flatten keeps the object-present depth inside M") {
        DepthMap out = corrupt_depth(p.x0_minus, p.mask, CorruptMode::kFlattenToInput);
        for (int64_t i = 0; i < out.size(); ++i)
            if (p.mask.v[i]) CHECK(out.v[i] == p.x0_minus.v[i]);
    }
    SUBCASE("blur leaves constant regions unchanged") {
        DepthMap flat(16, 16, 0.5f);
        Mask m(16, 16, 1);
        DepthMap out = corrupt_depth(flat, m, CorruptMode::kBlur);
        for (float v : out.v) CHECK(v == doctest::Approx(0.5f).epsilon(1e-6));
    }
    SUBCASE("blur smears a step edge like a direct box filter") {
        DepthMap step(8, 8);
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) step.at(r, c) = c < 4 ? 0.0f : 1.0f;
        Mask m(8, 8, 1);
        DepthMap out = corrupt_depth(step, m, CorruptMode::kBlur);
        // Direct 5x5 box filter at (4,3): columns -1..5 clipped to 0..7.
        double acc = 0.0;
        int n = 0;
        for (int rr = 2; rr <= 6; ++rr)
            for (int cc = 1; cc <= 5; ++cc) {
                acc += step.at(rr, cc);
                n++;
            }
        CHECK(out.at(4, 3) == doctest::Approx(acc / n).epsilon(1e-6));
    }
}

TEST_CASE("gen_dataset") {
    const fs::path base = fs::temp_directory_path() / "grlb_scene_tests";
    fs::remove_all(base);
    SUBCASE("N=0 gives an empty, valid manifest") {
        GenConfig cfg;
        cfg.count = 0;
        std::string mp = gen_dataset(cfg, 7, (base / "empty").string());
        std::ifstream in(mp);
        nlohmann::json j;
        in >> j;
        CHECK(j.is_array());
        CHECK(j.empty());
    }
    SUBCASE("same seed twice gives identical manifests and files") {
        GenConfig cfg;
        cfg.count = 6;
        cfg.height = 32;
        cfg.width = 32;
        std::string m1 = gen_dataset(cfg, 7, (base / "a").string());
        std::string m2 = gen_dataset(cfg, 7, (base / "b").string());
        auto slurp = [](const std::string& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        CHECK(slurp(m1) == slurp(m2));
        CHECK(slurp((base / "a" / "s000000" / "i_minus.png").string()) ==
              slurp((base / "b" / "s000000" / "i_minus.png").string()));
    }
    SUBCASE("split is recomputable from the id hash") {
        GenConfig cfg;
        cfg.count = 40;
        cfg.height = 32;
        cfg.width = 32;
        std::string mp = gen_dataset(cfg, 9, (base / "c").string());
        std::ifstream in(mp);
        nlohmann::json j;
        in >> j;
        int val = 0;
        for (const auto& e : j) {
            CHECK(e["split"] == split_for_id(e["id"], cfg.val_fraction));
            val += e["split"] == "val";
        }
        CHECK(val > 0);
        CHECK(val < 40);
    }
}
