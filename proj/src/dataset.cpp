#include "grlb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace grlb {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<ManifestEntry> load_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open manifest: " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("manifest parse error in " + manifest_path + ": " + e.what());
    }
    if (!j.is_array()) throw DataError("manifest is not a JSON array: " + manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<ManifestEntry> out;
    out.reserve(j.size());
    for (const auto& e : j) {
        ManifestEntry m;
        m.id = e.at("id").get<std::string>();
        const auto& f = e.at("files");
        m.i_minus = (base / f.at("i_minus").get<std::string>()).string();
        m.i_plus = (base / f.at("i_plus").get<std::string>()).string();
        m.x_minus = (base / f.at("x_minus").get<std::string>()).string();
        m.x_plus = (base / f.at("x_plus").get<std::string>()).string();
        m.mask = (base / f.at("mask").get<std::string>()).string();
        m.artifact_mask = (base / f.at("artifact_mask").get<std::string>()).string();
        m.seed = e.at("seed").get<uint64_t>();
        m.split = e.at("split").get<std::string>();
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

std::vector<uint8_t> pack_image(const Image& img) {
    std::vector<uint8_t> out(img.v.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<uint8_t>(std::lround(std::min(1.0f, std::max(0.0f, img.v[i])) * 255.0f));
    return out;
}

std::vector<uint16_t> pack_depth(const DepthMap& d) {
    std::vector<uint16_t> out(d.v.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] =
            static_cast<uint16_t>(std::lround(std::min(1.0f, std::max(0.0f, d.v[i])) * 65535.0f));
    return out;
}

}  // namespace

Dataset Dataset::load(const std::string& manifest_path, const std::string& split) {
    auto entries = load_manifest(manifest_path);
    Dataset ds;
    std::vector<const ManifestEntry*> keep;
    for (const auto& e : entries)
        if (split == "all" || e.split == split) keep.push_back(&e);
    ds.ids_.resize(keep.size());
    ds.seeds_.resize(keep.size());
    ds.i_minus_.resize(keep.size());
    ds.i_plus_.resize(keep.size());
    ds.x_minus_.resize(keep.size());
    ds.x_plus_.resize(keep.size());
    ds.mask_.resize(keep.size());
    ds.artifact_.resize(keep.size());

    int h = 0, w = 0;
    std::string first_error;
    parallel_for(static_cast<int64_t>(keep.size()), [&](int64_t lo, int64_t hi) {
        for (int64_t i = lo; i < hi; ++i) {
            const ManifestEntry& e = *keep[i];
            try {
                Image im = read_image_png(e.i_minus);
                Image ip = read_image_png(e.i_plus);
                DepthMap xm = read_depth_png(e.x_minus);
                DepthMap xp = read_depth_png(e.x_plus);
                Mask mk = read_mask_png(e.mask);
                Mask am = read_mask_png(e.artifact_mask);
                if (im.h != ip.h || im.h != xm.h || im.h != mk.h || im.w != mk.w)
                    throw DataError("inconsistent sample extents for id " + e.id);
                ds.ids_[i] = e.id;
                ds.seeds_[i] = e.seed;
                ds.i_minus_[i] = pack_image(im);
                ds.i_plus_[i] = pack_image(ip);
                ds.x_minus_[i] = pack_depth(xm);
                ds.x_plus_[i] = pack_depth(xp);
                ds.mask_[i] = mk.v;
                ds.artifact_[i] = am.v;
                h = im.h;
                w = im.w;
            } catch (const std::exception& ex) {
                if (first_error.empty()) first_error = ex.what();
            }
        }
    });
    if (!first_error.empty()) throw DataError("dataset load failed: " + first_error);
    ds.h_ = h;
    ds.w_ = w;
    return ds;
}

scenegen::PairedSample Dataset::sample(size_t i) const {
    scenegen::PairedSample p;
    p.id = ids_[i];
    p.seed = seeds_[i];
    p.i_minus = Image(h_, w_);
    p.i_plus = Image(h_, w_);
    for (size_t k = 0; k < p.i_minus.v.size(); ++k) {
        p.i_minus.v[k] = static_cast<float>(i_minus_[i][k]) / 255.0f;
        p.i_plus.v[k] = static_cast<float>(i_plus_[i][k]) / 255.0f;
    }
    p.x0_minus = DepthMap(h_, w_);
    p.x0_plus = DepthMap(h_, w_);
    for (size_t k = 0; k < p.x0_minus.v.size(); ++k) {
        p.x0_minus.v[k] = static_cast<float>(x_minus_[i][k]) / 65535.0f;
        p.x0_plus.v[k] = static_cast<float>(x_plus_[i][k]) / 65535.0f;
    }
    p.mask = Mask(h_, w_);
    p.mask.v = mask_[i];
    p.artifact_mask = Mask(h_, w_);
    p.artifact_mask.v = artifact_[i];
    return p;
}

Tensor depth_to_tensor(const DepthMap& d) {
    Tensor t({1, 1, d.h, d.w});
    auto out = t.mutable_data();
    for (int64_t i = 0; i < d.size(); ++i) out[i] = norm_unit(d.v[i]);
    return t;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, 3, img.h, img.w});
    auto out = t.mutable_data();
    const int64_t plane = img.pixels();
    for (int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) out[c * plane + i] = norm_unit(img.v[i * 3 + c]);
    return t;
}

Tensor mask_to_tensor(const Mask& m) {
    Tensor t({1, 1, m.h, m.w});
    auto out = t.mutable_data();
    for (int64_t i = 0; i < m.size(); ++i) out[i] = m.v[i] ? 1.0f : 0.0f;
    return t;
}

DepthMap tensor_to_depth(const Tensor& t, int example) {
    const auto& s = t.shape();
    if (s.size() != 4 || s[1] != 1) throw ShapeError("tensor_to_depth: expects [N,1,H,W]");
    DepthMap d(s[2], s[3]);
    const int64_t plane = d.size();
    const float* p = t.data().data() + static_cast<int64_t>(example) * plane;
    for (int64_t i = 0; i < plane; ++i)
        d.v[i] = std::min(1.0f, std::max(0.0f, denorm_unit(p[i])));
    return d;
}

Image tensor_to_image(const Tensor& t, int example) {
    const auto& s = t.shape();
    if (s.size() != 4 || s[1] != 3) throw ShapeError("tensor_to_image: expects [N,3,H,W]");
    Image img(s[2], s[3]);
    const int64_t plane = img.pixels();
    const float* p = t.data().data() + static_cast<int64_t>(example) * 3 * plane;
    for (int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            img.v[i * 3 + c] = std::min(1.0f, std::max(0.0f, denorm_unit(p[c * plane + i])));
    return img;
}

Tensor stack_batch(const std::vector<Tensor>& examples) {
    if (examples.empty()) throw ShapeError("stack_batch: no examples");
    const auto& s0 = examples[0].shape();
    int total = 0;
    for (const auto& e : examples) {
        const auto& s = e.shape();
        if (s.size() != 4 || s[1] != s0[1] || s[2] != s0[2] || s[3] != s0[3])
            throw ShapeError("stack_batch: inconsistent example shapes");
        total += s[0];
    }
    Tensor out({total, s0[1], s0[2], s0[3]});
    auto dst = out.mutable_data();
    int64_t off = 0;
    for (const auto& e : examples) {
        auto src = e.data();
        std::copy(src.begin(), src.end(), dst.begin() + off);
        off += src.size();
    }
    return out;
}

}  // namespace grlb
