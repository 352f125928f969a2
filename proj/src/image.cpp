#include "grlb/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>

namespace grlb {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint16_t quant16(float x) {
    float q = std::lround(std::min(1.0f, std::max(0.0f, x)) * 65535.0f);
    return static_cast<uint16_t>(q);
}

uint8_t quant8(float x) {
    return static_cast<uint8_t>(std::lround(std::min(1.0f, std::max(0.0f, x)) * 255.0f));
}

void write_png(const std::string& path, int h, int w, int bit_depth, int color_type,
               const std::vector<png_bytep>& rows, bool swap16) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot open for write: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png write failed: " + path);
    }
    png_init_io(png, f.get());
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, w, h, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (swap16) png_set_swap(png);
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

bool is_little_endian() {
    const uint16_t one = 1;
    return *reinterpret_cast<const uint8_t*>(&one) == 1;
}

}  // namespace

void write_depth_png(const std::string& path, const DepthMap& d) {
    std::vector<uint16_t> buf(d.size());
    for (int64_t i = 0; i < d.size(); ++i) buf[i] = quant16(d.v[i]);
    std::vector<png_bytep> rows(d.h);
    for (int r = 0; r < d.h; ++r)
        rows[r] = reinterpret_cast<png_bytep>(buf.data() + static_cast<int64_t>(r) * d.w);
    write_png(path, d.h, d.w, 16, PNG_COLOR_TYPE_GRAY, rows, is_little_endian());
}

void write_image_png(const std::string& path, const Image& img) {
    std::vector<uint8_t> buf(img.pixels() * 3);
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = quant8(img.v[i]);
    std::vector<png_bytep> rows(img.h);
    for (int r = 0; r < img.h; ++r) rows[r] = buf.data() + static_cast<int64_t>(r) * img.w * 3;
    write_png(path, img.h, img.w, 8, PNG_COLOR_TYPE_RGB, rows, false);
}

void write_mask_png(const std::string& path, const Mask& m) {
    std::vector<uint8_t> buf(m.size());
    for (int64_t i = 0; i < m.size(); ++i) buf[i] = m.v[i] ? 255 : 0;
    std::vector<png_bytep> rows(m.h);
    for (int r = 0; r < m.h; ++r) rows[r] = buf.data() + static_cast<int64_t>(r) * m.w;
    write_png(path, m.h, m.w, 8, PNG_COLOR_TYPE_GRAY, rows, false);
}

namespace {

struct PngReader {
    int h = 0, w = 0, channels = 0, bit_depth = 0;
    std::vector<uint8_t> data;  // rows packed, native endianness for 16-bit

    explicit PngReader(const std::string& path, bool want_rgb) {
        FilePtr file(std::fopen(path.c_str(), "rb"));
        if (!file) throw DataError("cannot open: " + path);
        png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        png_infop info = png ? png_create_info_struct(png) : nullptr;
        if (!png || !info) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw DataError("libpng init failed for " + path);
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw DataError("png read failed: " + path);
        }
        png_init_io(png, file.get());
        png_read_info(png, info);
        png_set_expand(png);
        if (png_get_valid(png, info, PNG_INFO_tRNS) ||
            (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA))
            png_set_strip_alpha(png);
        if (want_rgb && !(png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR))
            png_set_gray_to_rgb(png);
        if (!want_rgb && (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR))
            png_set_rgb_to_gray(png, PNG_ERROR_ACTION_NONE, -1.0, -1.0);
        if (png_get_bit_depth(png, info) == 16 && is_little_endian()) png_set_swap(png);
        png_read_update_info(png, info);
        h = static_cast<int>(png_get_image_height(png, info));
        w = static_cast<int>(png_get_image_width(png, info));
        channels = png_get_channels(png, info);
        bit_depth = png_get_bit_depth(png, info);
        const size_t rowbytes = png_get_rowbytes(png, info);
        data.resize(rowbytes * h);
        std::vector<png_bytep> rows(h);
        for (int r = 0; r < h; ++r) rows[r] = data.data() + rowbytes * r;
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);
    }
};

}  // namespace

DepthMap read_depth_png(const std::string& path) {
    PngReader r(path, /*want_rgb=*/false);
    DepthMap d(r.h, r.w);
    if (r.bit_depth == 16) {
        const uint16_t* p = reinterpret_cast<const uint16_t*>(r.data.data());
        for (int64_t i = 0; i < d.size(); ++i)
            d.v[i] = static_cast<float>(p[i * r.channels]) / 65535.0f;
    } else {
        for (int64_t i = 0; i < d.size(); ++i)
            d.v[i] = static_cast<float>(r.data[i * r.channels]) / 255.0f;
    }
    return d;
}

Image read_image_png(const std::string& path) {
    PngReader r(path, /*want_rgb=*/true);
    Image img(r.h, r.w);
    if (r.bit_depth == 16) {
        const uint16_t* p = reinterpret_cast<const uint16_t*>(r.data.data());
        for (int64_t i = 0; i < img.pixels(); ++i)
            for (int c = 0; c < 3; ++c)
                img.v[i * 3 + c] = static_cast<float>(p[i * r.channels + c]) / 65535.0f;
    } else {
        for (int64_t i = 0; i < img.pixels(); ++i)
            for (int c = 0; c < 3; ++c)
                img.v[i * 3 + c] = static_cast<float>(r.data[i * r.channels + c]) / 255.0f;
    }
    return img;
}

Mask read_mask_png(const std::string& path) {
    PngReader r(path, /*want_rgb=*/false);
    Mask m(r.h, r.w);
    if (r.bit_depth == 16) {
        const uint16_t* p = reinterpret_cast<const uint16_t*>(r.data.data());
        for (int64_t i = 0; i < m.size(); ++i) m.v[i] = p[i * r.channels] >= 32768 ? 1 : 0;
    } else {
        for (int64_t i = 0; i < m.size(); ++i) m.v[i] = r.data[i * r.channels] >= 128 ? 1 : 0;
    }
    return m;
}

}  // namespace grlb
