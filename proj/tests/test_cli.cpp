// End-to-end checks of the grlb binary (path passed as argv[1]).
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int g_failures = 0;
std::string g_bin;
fs::path g_work;

#define CHECK_MSG(cond, msg)                                            \
    do {                                                                \
        if (!(cond)) {                                                  \
            std::fprintf(stderr, "[FAIL] %s:%d %s\n", __FILE__, __LINE__, msg); \
            g_failures++;                                               \
        }                                                               \
    } while (0)

int run(const std::string& args) {
    const std::string cmd = g_bin + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: grlb_cli_tests <grlb-binary>\n");
        return 2;
    }
    g_bin = argv[1];
    g_work = fs::temp_directory_path() / "grlb_cli_tests";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    // Usage errors exit with 1.
    CHECK_MSG(run("no-such-command") == 1, "unknown subcommand should exit 1");
    CHECK_MSG(run("remove --bogus-flag x") == 1, "unknown flag should exit 1");
    CHECK_MSG(run("") == 1, "missing subcommand should exit 1");

    // Data errors exit with 2.
    CHECK_MSG(run("train-stage1 --manifest /nope/manifest.json --out " +
                  (g_work / "t").string()) == 2,
              "missing manifest should exit 2");

    // gen-data: determinism and config echo.
    const fs::path data_a = g_work / "data_a";
    const fs::path data_b = g_work / "data_b";
    write_file(g_work / "gen.json", R"({"count": 8, "height": 32, "width": 32})");
    CHECK_MSG(run("gen-data --config " + (g_work / "gen.json").string() + " --out " +
                  data_a.string() + " --seed 7") == 0,
              "gen-data should succeed");
    CHECK_MSG(run("gen-data --config " + (g_work / "gen.json").string() + " --out " +
                  data_b.string() + " --seed 7") == 0,
              "gen-data rerun should succeed");
    CHECK_MSG(slurp(data_a / "manifest.json") == slurp(data_b / "manifest.json"),
              "same-seed manifests must be identical");
    CHECK_MSG(slurp(data_a / "s000003" / "x_minus.png") ==
                  slurp(data_b / "s000003" / "x_minus.png"),
              "same-seed sample files must be identical");
    CHECK_MSG(fs::exists(data_a / "resolved_config.json"), "gen-data echoes its config");

    // Unknown config keys are rejected.
    write_file(g_work / "bad.json", R"({"count": 4, "heihgt": 32})");
    CHECK_MSG(run("gen-data --config " + (g_work / "bad.json").string() + " --out " +
                  (g_work / "bad_out").string()) == 2,
              "unknown config key should exit 2");

    // Tiny training runs (correctness of plumbing, not quality).
    const std::string manifest = (data_a / "manifest.json").string();
    write_file(g_work / "train.json",
               R"({"steps": 6, "batch": 2, "widths": [8, 8, 8], "seed": 3,)"
               R"( "log_every": 2, "checkpoint_every": 100, "schedule_t": 50})");
    const fs::path s1 = g_work / "s1";
    const fs::path s2 = g_work / "s2";
    const fs::path os = g_work / "os";
    CHECK_MSG(run("train-stage1 --manifest " + manifest + " --config " +
                  (g_work / "train.json").string() + " --out " + s1.string()) == 0,
              "train-stage1 should succeed");
    CHECK_MSG(run("train-stage2 --manifest " + manifest + " --config " +
                  (g_work / "train.json").string() + " --out " + s2.string()) == 0,
              "train-stage2 should succeed");
    CHECK_MSG(run("train-onestage --manifest " + manifest + " --config " +
                  (g_work / "train.json").string() + " --out " + os.string()) == 0,
              "train-onestage should succeed");
    CHECK_MSG(fs::exists(s1 / "resolved_config.json"), "training echoes its config");
    CHECK_MSG(fs::exists(s1 / "metrics.jsonl"), "training writes a metrics log");

    // remove: end-to-end, deterministic, mask-aligned depth output.
    const std::string img = (data_a / "s000000" / "i_minus.png").string();
    const std::string dep = (data_a / "s000000" / "x_minus.png").string();
    const std::string msk = (data_a / "s000000" / "mask.png").string();
    const std::string ck1 = (s1 / "ckpt.grlb").string();
    const std::string ck2 = (s2 / "ckpt.grlb").string();
    const fs::path out1 = g_work / "out1.png";
    const fs::path out2 = g_work / "out2.png";
    const fs::path dout = g_work / "depth_out.png";
    const fs::path panel = g_work / "panel.png";
    const std::string base_cmd = "remove --image " + img + " --depth " + dep + " --mask " + msk +
                                 " --stage1 " + ck1 + " --stage2 " + ck2 +
                                 " --steps 6 --seed 11 ";
    CHECK_MSG(run(base_cmd + "--out " + out1.string() + " --depth-out " + dout.string() +
                  " --panel-export " + panel.string()) == 0,
              "remove should succeed");
    CHECK_MSG(run(base_cmd + "--out " + out2.string()) == 0, "remove rerun should succeed");
    CHECK_MSG(slurp(out1) == slurp(out2), "remove must be deterministic under --seed");
    CHECK_MSG(fs::exists(panel), "panel export should exist");

    CHECK_MSG(fs::exists(dout), "depth-out should exist");

    // run-onestage.
    const fs::path os_out = g_work / "os.png";
    CHECK_MSG(run("run-onestage --image " + img + " --depth " + dep + " --mask " + msk +
                  " --ckpt " + (os / "ckpt.grlb").string() + " --steps 6 --seed 2 --out " +
                  os_out.string()) == 0,
              "run-onestage should succeed");

    // eval on a perfect run dir: copy ground truth as outputs.
    const fs::path run_dir = g_work / "perfect_run";
    for (const auto& entry : fs::directory_iterator(data_a)) {
        if (!entry.is_directory()) continue;
        const std::string id = entry.path().filename().string();
        fs::create_directories(run_dir / id);
        fs::copy_file(entry.path() / "i_plus.png", run_dir / id / "output.png");
        fs::copy_file(entry.path() / "x_plus.png", run_dir / id / "stage1.png");
    }
    CHECK_MSG(run("eval --run " + run_dir.string() + " --manifest " + manifest +
                  " --split all --both-iou") == 0,
              "eval on a perfect run should pass");
    CHECK_MSG(fs::exists(run_dir / "report.json"), "eval writes report.json");

    // Gates: an impossible PSNR gate must fail with exit 3.
    write_file(g_work / "gates.json", R"({"min_ssim": 2.0})");
    CHECK_MSG(run("eval --run " + run_dir.string() + " --manifest " + manifest +
                  " --split all --gates " + (g_work / "gates.json").string()) == 3,
              "failed gate should exit 3");

    // eval lists missing outputs without failing.
    const fs::path partial = g_work / "partial_run";
    fs::create_directories(partial / "s000000");
    fs::copy_file(data_a / "s000000" / "i_plus.png", partial / "s000000" / "output.png");
    CHECK_MSG(run("eval --run " + partial.string() + " --manifest " + manifest +
                  " --split all") == 0,
              "eval with missing outputs still reports");

    // ablate smoke: a minuscule grid end to end.
    write_file(g_work / "ablate.json",
               R"({"stage1": {"steps": 4, "batch": 2, "widths": [8,8,8], "seed": 1,)"
               R"( "schedule_t": 50, "checkpoint_every": 50},)"
               R"( "stage2": {"steps": 4, "batch": 2, "widths": [8,8,8], "seed": 1,)"
               R"( "schedule_t": 50, "checkpoint_every": 50},)"
               R"( "lambdas": [0.0, 0.1], "eval_steps": 4, "eval_limit": 2})");
    const fs::path ab = g_work / "ablate_out";
    CHECK_MSG(run("ablate --manifest " + manifest + " --config " +
                  (g_work / "ablate.json").string() + " --out " + ab.string()) == 0,
              "ablate should succeed");
    CHECK_MSG(fs::exists(ab / "comparison.json") && fs::exists(ab / "comparison.txt"),
              "ablate emits the comparison table");

    if (g_failures == 0) std::printf("cli tests: all passed\n");
    return g_failures == 0 ? 0 : 1;
}
