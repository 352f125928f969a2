#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "grlb/image.hpp"
#include "grlb/rng.hpp"

using namespace grlb;
namespace fs = std::filesystem;

namespace {

std::string tmp_path(const char* name) {
    fs::path dir = fs::temp_directory_path() / "grlb_image_tests";
    fs::create_directories(dir);
    return (dir / name).string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("depth png round trip stays within one quantization step") {
    Rng rng(5);
    DepthMap d(9, 13);
    for (auto& v : d.v) v = rng.uniform();
    const std::string path = tmp_path("d.png");
    write_depth_png(path, d);
    DepthMap back = read_depth_png(path);
    REQUIRE(back.h == d.h);
    REQUIRE(back.w == d.w);
    for (int64_t i = 0; i < d.size(); ++i)
        CHECK(std::abs(back.v[i] - d.v[i]) <= 0.5f / 65535.0f + 1e-7f);
}

TEST_CASE("image png round trip stays within one 8-bit step") {
    Rng rng(6);
    Image img(7, 5);
    for (auto& v : img.v) v = rng.uniform();
    const std::string path = tmp_path("i.png");
    write_image_png(path, img);
    Image back = read_image_png(path);
    for (size_t i = 0; i < img.v.size(); ++i)
        CHECK(std::abs(back.v[i] - img.v[i]) <= 0.5f / 255.0f + 1e-7f);
}

TEST_CASE("mask png round trip is exact") {
    Rng rng(7);
    Mask m(8, 8);
    for (auto& v : m.v) v = rng.uniform() < 0.5f ? 1 : 0;
    const std::string path = tmp_path("m.png");
    write_mask_png(path, m);
    Mask back = read_mask_png(path);
    CHECK(back.v == m.v);
}

TEST_CASE("png writes are byte-deterministic") {
    Rng rng(8);
    DepthMap d(16, 16);
    for (auto& v : d.v) v = rng.uniform();
    const std::string p1 = tmp_path("det1.png"), p2 = tmp_path("det2.png");
    write_depth_png(p1, d);
    write_depth_png(p2, d);
    CHECK(file_bytes(p1) == file_bytes(p2));
}

TEST_CASE("reading a missing file raises a data error") {
    CHECK_THROWS_AS(read_depth_png("/nonexistent/nope.png"), DataError);
}
