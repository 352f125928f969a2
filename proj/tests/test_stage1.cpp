#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "grlb/stage1.hpp"

using namespace grlb;
using namespace grlb::stage1;
namespace fs = std::filesystem;

namespace {

// Shared tiny dataset for trainer tests: 32x32 scenes, 40 pairs.
const std::string& tiny_manifest() {
    static std::string path = [] {
        const fs::path dir = fs::temp_directory_path() / "grlb_stage1_data";
        fs::remove_all(dir);
        scenegen::GenConfig cfg;
        cfg.count = 40;
        cfg.height = 32;
        cfg.width = 32;
        cfg.val_fraction = 0.15;
        return scenegen::gen_dataset(cfg, 77, dir.string());
    }();
    return path;
}

TrainConfig tiny_config(int steps, float lambda_bt) {
    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch = 4;
    cfg.widths = {8, 8, 8};
    cfg.lambda_bt = lambda_bt;
    cfg.seed = 5;
    cfg.log_every = 10;
    cfg.checkpoint_every = 1000;
    return cfg;
}

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("bt loss calibration") {
    SUBCASE("zero gap sits exactly at ln 2") {
        CHECK(std::abs(bt_loss_from_gap(0.0) - std::log(2.0)) < 1e-12);
        DepthMap x(4, 4, 0.5f);
        // x0+ == x0-: rewards tie regardless of the prediction.
        DepthMap pred(4, 4);
        for (int i = 0; i < 16; ++i) pred.v[i] = 0.1f * i;
        CHECK(std::abs(bt_loss(pred, x, x) - std::log(2.0)) < 1e-6);
    }
    SUBCASE("gap of 2 evaluates to -ln sigmoid(2)") {
        CHECK(bt_loss_from_gap(2.0) == doctest::Approx(0.126928).epsilon(1e-4));
    }
    SUBCASE("strictly decreasing in the reward gap") {
        double prev = bt_loss_from_gap(-5.0);
        for (double g = -4.75; g <= 5.0; g += 0.25) {
            const double cur = bt_loss_from_gap(g);
            CHECK(cur < prev);
            prev = cur;
        }
    }
    SUBCASE("matching the preferred path beats ln 2") {
        // x_hat == x0+ while x0- carries an object edge.
        DepthMap plus(6, 6, 0.9f);
        DepthMap minus = plus;
        for (int r = 2; r < 4; ++r)
            for (int c = 2; c < 4; ++c) minus.at(r, c) = 0.4f;
        CHECK(bt_loss(plus, plus, minus) < std::log(2.0));
    }
}

TEST_CASE("bt_loss_t agrees with the scalar form and is differentiable") {
    Rng rng(6);
    auto mk = [&](float base) {
        Tensor t({1, 1, 6, 6}, true);
        for (auto& v : t.mutable_data()) v = base + 0.3f * rng.normal();
        return t;
    };
    Tensor xhat = mk(0.0f), xp = mk(0.1f), xm = mk(-0.2f);
    DepthMap dh(6, 6), dp(6, 6), dm(6, 6);
    std::copy(xhat.data().begin(), xhat.data().end(), dh.v.begin());
    std::copy(xp.data().begin(), xp.data().end(), dp.v.begin());
    std::copy(xm.data().begin(), xm.data().end(), dm.v.begin());
    CHECK(bt_loss_t(xhat, xp, xm).value() ==
          doctest::Approx(bt_loss(dh, dp, dm)).epsilon(1e-4));

    Rng fixed(9);
    auto rep = grad_check({xhat}, [&] { return bt_loss_t(xhat, xp, xm); }, 1e-3, fixed, 48);
    CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("total_loss composition") {
    const diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(50);
    ArchDescriptor arch;
    arch.in_channels = 3;
    arch.out_channels = 1;
    arch.widths = {8, 8, 8};
    arch.temb_dim = 16;
    ScoreModel model(arch, 21);

    scenegen::SceneSpec s;
    s.h = 32;
    s.w = 32;
    s.ground_albedo.assign(32 * 32, 0.6f);
    s.ground_height.assign(32 * 32, 0.0f);
    s.light[0] = 0.707107f;
    s.light[1] = 0.0f;
    s.light[2] = 0.707107f;
    s.objects.push_back({scenegen::ObjectKind::kBox, 14, 14, 4.0f, 0.4f, 0.9f});
    auto pair = scenegen::make_pair(s, 0);
    std::vector<scenegen::PairedSample> batch{pair, pair};

    SUBCASE("lambda = 0 equals the bare DSM term") {
        Rng r1(3), r2(3);
        Stage1Loss a = total_loss(model, batch, 0.0f, sched, r1);
        Stage1Loss b = total_loss(model, batch, 0.5f, sched, r2);
        CHECK(a.loss.value() == a.l_dsm);
        CHECK(a.l_bt == 0.0);
        // Same draws: the DSM components agree, the combined loss adds BT.
        CHECK(b.l_dsm == a.l_dsm);
        CHECK(b.loss.value() == doctest::Approx(b.l_dsm + 0.5 * b.l_bt).epsilon(1e-5));
        CHECK(b.l_bt > 0.0);
    }
    SUBCASE("flow-invisible pairs contribute no BT term") {
        scenegen::PairedSample flat = pair;
        flat.x0_minus = flat.x0_plus;  // no geometric difference
        std::vector<scenegen::PairedSample> fbatch{flat};
        Rng r(4);
        Stage1Loss l = total_loss(model, fbatch, 0.5f, sched, r);
        CHECK(l.l_bt == 0.0);
        CHECK(l.loss.value() == l.l_dsm);
    }
}

TEST_CASE("train_stage1: zero steps produces the initialization checkpoint") {
    const fs::path out1 = fs::temp_directory_path() / "grlb_s1_zero_a";
    const fs::path out2 = fs::temp_directory_path() / "grlb_s1_zero_b";
    fs::remove_all(out1);
    fs::remove_all(out2);
    TrainConfig cfg = tiny_config(0, 0.1f);
    std::string ck1 = train_stage1(tiny_manifest(), cfg, out1.string());
    std::string ck2 = train_stage1(tiny_manifest(), cfg, out2.string());
    CHECK(slurp(ck1) == slurp(ck2));
    Checkpoint ck = load_checkpoint(ck1);
    CHECK(ck.step == 0);
}

TEST_CASE("train_stage1: smoke run halves the early loss on an overfit set") {
    const fs::path out = fs::temp_directory_path() / "grlb_s1_overfit";
    fs::remove_all(out);
    TrainConfig cfg = tiny_config(200, 0.1f);
    train_stage1(tiny_manifest(), cfg, out.string());

    std::ifstream log((out / "metrics.jsonl").string());
    REQUIRE(log.good());
    std::vector<double> losses;
    std::string line;
    while (std::getline(log, line))
        losses.push_back(nlohmann::json::parse(line).at("loss").get<double>());
    REQUIRE(losses.size() >= 10);
    const double early = losses.front();          // mean of steps 1..10
    const double late = losses.back();            // mean of the last window
    CHECK(late <= 0.5 * early);
}

TEST_CASE("train_stage1: resume reproduces the uninterrupted run byte for byte") {
    const fs::path full = fs::temp_directory_path() / "grlb_s1_full";
    const fs::path half = fs::temp_directory_path() / "grlb_s1_half";
    fs::remove_all(full);
    fs::remove_all(half);
    TrainConfig cfg = tiny_config(24, 0.1f);
    cfg.checkpoint_every = 12;
    std::string ck_full = train_stage1(tiny_manifest(), cfg, full.string());

    TrainConfig cfg_half = cfg;
    cfg_half.steps = 12;
    std::string ck_half = train_stage1(tiny_manifest(), cfg_half, half.string());
    std::string ck_resumed = train_stage1(tiny_manifest(), cfg, half.string(), ck_half);

    CHECK(slurp(ck_full) == slurp(ck_resumed));
    CHECK(slurp(ck_full + ".json") == slurp(ck_resumed + ".json"));
}

TEST_CASE("remove_geometry") {
    const diffusion::NoiseSchedule sched = diffusion::NoiseSchedule::linear(50);
    ArchDescriptor arch;
    arch.in_channels = 3;
    arch.out_channels = 1;
    arch.widths = {8, 8, 8};
    arch.temb_dim = 16;
    ScoreModel model(arch, 33);

    Rng rng(8);
    DepthMap depth(32, 32);
    for (auto& v : depth.v) v = 0.3f + 0.5f * rng.uniform();
    Mask m(32, 32, 0);
    for (int r = 10; r < 18; ++r)
        for (int c = 12; c < 20; ++c) m.at(r, c) = 1;

    SUBCASE("unmasked pixels equal the input bit-exactly") {
        DepthMap out = remove_geometry(model, sched, depth, m, 8, 99);
        for (int64_t i = 0; i < out.size(); ++i)
            if (!m.v[i]) CHECK(out.v[i] == depth.v[i]);
    }
    SUBCASE("deterministic under the seed") {
        DepthMap a = remove_geometry(model, sched, depth, m, 8, 123);
        DepthMap b = remove_geometry(model, sched, depth, m, 8, 123);
        CHECK(a.v == b.v);
    }
    SUBCASE("empty mask is rejected") {
        Mask empty(32, 32, 0);
        CHECK_THROWS_AS(remove_geometry(model, sched, depth, empty, 8, 0), DataError);
    }
}
