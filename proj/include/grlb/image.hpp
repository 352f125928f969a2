#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grlb/common.hpp"

namespace grlb {

// Dense H x W scalar field in [0,1]. Row-major.
struct DepthMap {
    int h = 0, w = 0;
    std::vector<float> v;

    DepthMap() = default;
    DepthMap(int h_, int w_, float fill = 0.0f) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}
    float& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    float at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
    int64_t size() const { return static_cast<int64_t>(h) * w; }
};

// H x W x 3 RGB field in [0,1], interleaved.
struct Image {
    int h = 0, w = 0;
    std::vector<float> v;

    Image() = default;
    Image(int h_, int w_, float fill = 0.0f) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_ * 3, fill) {}
    float& at(int r, int c, int ch) { return v[(static_cast<size_t>(r) * w + c) * 3 + ch]; }
    float at(int r, int c, int ch) const { return v[(static_cast<size_t>(r) * w + c) * 3 + ch]; }
    int64_t pixels() const { return static_cast<int64_t>(h) * w; }
};

// H x W binary field.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    Mask() = default;
    Mask(int h_, int w_, uint8_t fill = 0) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}
    uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * w + c]; }
    uint8_t at(int r, int c) const { return v[static_cast<size_t>(r) * w + c]; }
    int64_t size() const { return static_cast<int64_t>(h) * w; }
    int64_t count() const {
        int64_t n = 0;
        for (uint8_t b : v) n += (b != 0);
        return n;
    }
    bool empty() const { return count() == 0; }
};

// PNG conventions: depth = 16-bit grayscale (round(d*65535)), image = 8-bit
// RGB (round(c*255)), mask = 8-bit grayscale {0,255}. Deterministic bytes
// for identical inputs.
void write_depth_png(const std::string& path, const DepthMap& d);
void write_image_png(const std::string& path, const Image& img);
void write_mask_png(const std::string& path, const Mask& m);

DepthMap read_depth_png(const std::string& path);
Image read_image_png(const std::string& path);
Mask read_mask_png(const std::string& path);

}  // namespace grlb
