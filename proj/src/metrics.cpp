#include "grlb/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "grlb/common.hpp"

namespace grlb::metrics {

namespace {

void check_same(const char* op, const Image& a, const Image& b) {
    if (a.h != b.h || a.w != b.w)
        throw ShapeError(std::string(op) + ": shape mismatch, got [" + std::to_string(a.h) + "," +
                         std::to_string(a.w) + "] vs [" + std::to_string(b.h) + "," +
                         std::to_string(b.w) + "]");
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_same("psnr", a, b);
    double acc = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        const double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(a.v.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
    check_same("ssim", a, b);
    constexpr int kWin = 8;
    if (a.h < kWin || a.w < kWin)
        throw DataError("ssim: image smaller than the 8x8 window");
    constexpr double c1 = 0.01 * 0.01;  // (k1*L)^2, L = 1
    constexpr double c2 = 0.03 * 0.03;
    const int oh = a.h - kWin + 1, ow = a.w - kWin + 1;
    const double inv_n = 1.0 / (kWin * kWin);
    double total = 0.0;
    for (int ch = 0; ch < 3; ++ch) {
        double chan = 0.0;
        for (int r = 0; r < oh; ++r) {
            for (int c = 0; c < ow; ++c) {
                double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
                for (int i = 0; i < kWin; ++i)
                    for (int j = 0; j < kWin; ++j) {
                        const double x = a.at(r + i, c + j, ch);
                        const double y = b.at(r + i, c + j, ch);
                        sx += x;
                        sy += y;
                        sxx += x * x;
                        syy += y * y;
                        sxy += x * y;
                    }
                const double mx = sx * inv_n, my = sy * inv_n;
                const double vx = sxx * inv_n - mx * mx;
                const double vy = syy * inv_n - my * my;
                const double cov = sxy * inv_n - mx * my;
                chan += ((2 * mx * my + c1) * (2 * cov + c2)) /
                        ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
        total += chan / (static_cast<double>(oh) * ow);
    }
    return total / 3.0;
}

namespace {

std::vector<uint8_t> changed_mask(const Image& i_in, const Image& i_out, int threshold) {
    std::vector<uint8_t> p(i_in.pixels(), 0);
    for (int64_t i = 0; i < i_in.pixels(); ++i) {
        int diff = 0;
        for (int ch = 0; ch < 3; ++ch) {
            const int a = static_cast<int>(
                std::lround(std::min(1.0f, std::max(0.0f, i_in.v[i * 3 + ch])) * 255.0f));
            const int b = static_cast<int>(
                std::lround(std::min(1.0f, std::max(0.0f, i_out.v[i * 3 + ch])) * 255.0f));
            diff = std::max(diff, std::abs(a - b));
        }
        p[i] = diff > threshold ? 1 : 0;
    }
    return p;
}

double iou(const std::vector<uint8_t>& p, const Mask& a) {
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const bool pp = p[i] != 0, aa = a.v[i] != 0;
        inter += pp && aa;
        uni += pp || aa;
    }
    if (uni == 0) return 1.0;  // both empty
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double residue_iou(const Image& i_in, const Image& i_out, const Mask& artifact_mask,
                   int threshold) {
    check_same("residue_iou", i_in, i_out);
    if (artifact_mask.h != i_in.h || artifact_mask.w != i_in.w)
        throw ShapeError("residue_iou: mask shape mismatch");
    return iou(changed_mask(i_in, i_out, threshold), artifact_mask);
}

double residue_iou_within_region(const Image& i_in, const Image& i_out, const Mask& artifact_mask,
                                 int threshold) {
    check_same("residue_iou", i_in, i_out);
    if (artifact_mask.h != i_in.h || artifact_mask.w != i_in.w)
        throw ShapeError("residue_iou: mask shape mismatch");
    auto p = changed_mask(i_in, i_out, threshold);
    for (int64_t i = 0; i < artifact_mask.size(); ++i)
        if (!artifact_mask.v[i]) p[i] = 0;
    return iou(p, artifact_mask);
}

std::optional<double> mask_flow_energy(const DepthMap& depth, const Mask& m) {
    if (m.h != depth.h || m.w != depth.w) throw ShapeError("mask_flow_energy: shape mismatch");
    double acc = 0.0;
    int64_t n = 0;
    for (int r = 0; r + 1 < depth.h; ++r) {
        for (int c = 0; c + 1 < depth.w; ++c) {
            if (!m.at(r, c)) continue;
            bool interior = true;
            for (int dr = -1; dr <= 1 && interior; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= m.h || cc < 0 || cc >= m.w || !m.at(rr, cc)) {
                        interior = false;
                        break;
                    }
                }
            if (!interior) continue;
            acc += std::fabs(depth.at(r + 1, c) - depth.at(r, c)) +
                   std::fabs(depth.at(r, c + 1) - depth.at(r, c));
            n++;
        }
    }
    if (n == 0) return std::nullopt;
    return acc / static_cast<double>(n);
}

InsertionResult insertion_rate(const std::vector<const DepthMap*>& pred_depths,
                               const std::vector<const DepthMap*>& gt_plus_depths,
                               const std::vector<const Mask*>& masks, double ratio_threshold) {
    if (pred_depths.size() != gt_plus_depths.size() || pred_depths.size() != masks.size())
        throw DataError("insertion_rate: input count mismatch");
    InsertionResult out;
    out.flagged.assign(pred_depths.size(), -1);
    int64_t flagged = 0, scored = 0;
    for (size_t i = 0; i < pred_depths.size(); ++i) {
        auto e_pred = mask_flow_energy(*pred_depths[i], *masks[i]);
        auto e_gt = mask_flow_energy(*gt_plus_depths[i], *masks[i]);
        if (!e_pred || !e_gt) {
            std::fprintf(stderr, "insertion_rate: sample %zu skipped (eroded mask empty)\n", i);
            out.skipped++;
            continue;
        }
        const double denom = std::max(*e_gt, 1e-4);
        const bool inserted = *e_pred / denom > ratio_threshold;
        out.flagged[i] = inserted ? 1 : 0;
        flagged += inserted;
        scored++;
    }
    out.rate = scored == 0 ? 0.0 : static_cast<double>(flagged) / static_cast<double>(scored);
    return out;
}

}  // namespace grlb::metrics
