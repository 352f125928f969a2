#include "grlb/geometry.hpp"

#include <cmath>
#include <cstdio>

namespace grlb::geometry {

namespace {

void check_same(const char* op, const DepthMap& a, const DepthMap& b) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError(std::string(op) + ": shape mismatch, got [" + std::to_string(a.h) + "," +
                         std::to_string(a.w) + "] vs [" + std::to_string(b.h) + "," +
                         std::to_string(b.w) + "]");
}

}  // namespace

FlowField depth_flow(const DepthMap& x) {
    if (x.h < 2 || x.w < 2)
        throw ShapeError("depth_flow: degenerate map [" + std::to_string(x.h) + "," +
                         std::to_string(x.w) + "], need H,W >= 2");
    FlowField f;
    f.h = x.h;
    f.w = x.w;
    f.vert.resize(static_cast<size_t>(x.h - 1) * x.w);
    f.horiz.resize(static_cast<size_t>(x.h) * (x.w - 1));
    for (int r = 0; r + 1 < x.h; ++r)
        for (int c = 0; c < x.w; ++c)
            f.vert[static_cast<size_t>(r) * x.w + c] = std::fabs(x.at(r + 1, c) - x.at(r, c));
    for (int r = 0; r < x.h; ++r)
        for (int c = 0; c + 1 < x.w; ++c)
            f.horiz[static_cast<size_t>(r) * (x.w - 1) + c] = std::fabs(x.at(r, c + 1) - x.at(r, c));
    return f;
}

double flow_loss(const DepthMap& a, const DepthMap& b) {
    check_same("flow_loss", a, b);
    const FlowField fa = depth_flow(a);
    const FlowField fb = depth_flow(b);
    const int vh = a.h - 1, vw = a.w - 1;
    double acc = 0.0;
    for (int r = 0; r < vh; ++r)
        for (int c = 0; c < vw; ++c)
            acc += std::fabs(fa.vert_at(r, c) - fb.vert_at(r, c)) +
                   std::fabs(fa.horiz_at(r, c) - fb.horiz_at(r, c));
    return acc / (static_cast<double>(vh) * vw);
}

double reward(const DepthMap& x_hat, const DepthMap& x) { return -flow_loss(x_hat, x); }

namespace {

// |forward difference| components of a [N,1,H,W] tensor, cropped to the
// (H-1)x(W-1) valid window.
std::pair<Tensor, Tensor> flow_components(const Tensor& x) {
    const auto& s = x.shape();
    const int H = s[2], W = s[3];
    Tensor vert = ops::abs(ops::sub(ops::crop2d(x, 1, H, 0, W), ops::crop2d(x, 0, H - 1, 0, W)));
    Tensor horiz = ops::abs(ops::sub(ops::crop2d(x, 0, H, 1, W), ops::crop2d(x, 0, H, 0, W - 1)));
    return {ops::crop2d(vert, 0, H - 1, 0, W - 1), ops::crop2d(horiz, 0, H - 1, 0, W - 1)};
}

}  // namespace

Tensor flow_loss_t(const Tensor& x_hat, const Tensor& x) {
    if (x_hat.shape() != x.shape() || x_hat.shape().size() != 4 || x_hat.shape()[1] != 1)
        throw ShapeError("flow_loss_t: expects matching [N,1,H,W] tensors");
    const int H = x_hat.shape()[2], W = x_hat.shape()[3];
    if (H < 2 || W < 2) throw ShapeError("flow_loss_t: degenerate map, need H,W >= 2");
    auto [pv, ph] = flow_components(x_hat);
    auto [qv, qh] = flow_components(x);
    Tensor total =
        ops::add(ops::sum(ops::abs(ops::sub(pv, qv))), ops::sum(ops::abs(ops::sub(ph, qh))));
    const float inv = 1.0f / (static_cast<float>(x_hat.shape()[0]) * (H - 1) * (W - 1));
    return ops::mul_scalar(total, inv);
}

DepthMap mask_align_replace(const DepthMap& pred, const DepthMap& original, const Mask& m) {
    check_same("mask_align_replace", pred, original);
    if (m.h != pred.h || m.w != pred.w) throw ShapeError("mask_align_replace: mask shape mismatch");
    DepthMap out = original;
    for (int64_t i = 0; i < out.size(); ++i)
        if (m.v[i]) out.v[i] = pred.v[i];
    return out;
}

double masked_mae(const DepthMap& pred, const DepthMap& gt, const Mask& m) {
    check_same("masked_mae", pred, gt);
    if (m.h != pred.h || m.w != pred.w) throw ShapeError("masked_mae: mask shape mismatch");
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = 0; i < pred.size(); ++i) {
        if (m.v[i]) {
            acc += std::fabs(static_cast<double>(pred.v[i]) - static_cast<double>(gt.v[i]));
            n++;
        }
    }
    if (n == 0) throw DataError("masked_mae: empty mask");
    return acc / static_cast<double>(n);
}

DepthMap local_max_fill_in(const DepthMap& depth, const Mask& m, int window) {
    if (window < 1) throw DataError("local_max_fill_in: window must be >= 1");
    if (m.h != depth.h || m.w != depth.w) throw ShapeError("local_max_fill_in: mask shape mismatch");
    // Centered window; for even sizes the extra cell goes to the high side.
    const int lo = (window - 1) / 2, hi = window / 2;
    DepthMap out = depth;
    for (int r = 0; r < depth.h; ++r) {
        for (int c = 0; c < depth.w; ++c) {
            if (!m.at(r, c)) continue;
            const int r0 = std::max(0, r - lo), r1 = std::min(depth.h - 1, r + hi);
            const int c0 = std::max(0, c - lo), c1 = std::min(depth.w - 1, c + hi);
            float best = depth.at(r, c);
            for (int rr = r0; rr <= r1; ++rr)
                for (int cc = c0; cc <= c1; ++cc) best = std::max(best, depth.at(rr, cc));
            out.at(r, c) = best;
        }
    }
    return out;
}

Image colorize_depth(const DepthMap& x) {
    bool warned = false;
    Image img(x.h, x.w);
    for (int64_t i = 0; i < x.size(); ++i) {
        float v = x.v[i];
        if (v < 0.0f || v > 1.0f) {
            if (!warned) {
                std::fprintf(stderr, "colorize_depth: clamping out-of-range depth %g\n", v);
                warned = true;
            }
            v = std::min(1.0f, std::max(0.0f, v));
        }
        img.v[i * 3 + 0] = v;
        img.v[i * 3 + 1] = v;
        img.v[i * 3 + 2] = v;
    }
    return img;
}

}  // namespace grlb::geometry
