#pragma once

#include <optional>
#include <vector>

#include "grlb/image.hpp"

namespace grlb::metrics {

// 10*log10(1/MSE) over all pixels and channels, values in [0,1].
// Identical images return +infinity.
double psnr(const Image& a, const Image& b);

// Single-scale SSIM, 8x8 uniform window (valid positions), k1=0.01,
// k2=0.03, dynamic range 1.0, channel-averaged.
double ssim(const Image& a, const Image& b);

// CausRem-style residue score: P = pixels whose 0-255 channel-max absolute
// difference between input and output exceeds `threshold` (whole image);
// returns IoU(P, artifact_mask), 1.0 when both sets are empty.
double residue_iou(const Image& i_in, const Image& i_out, const Mask& artifact_mask,
                   int threshold = 20);

// Variant restricted to the artifact region (the other reading of the
// protocol); P is intersected with the mask before the IoU.
double residue_iou_within_region(const Image& i_in, const Image& i_out, const Mask& artifact_mask,
                                 int threshold = 20);

// Mean first-order flow magnitude (|dv| + |dh|) over the mask eroded by
// 1 px (8-neighborhood), restricted to pixels where both components exist.
// Returns nullopt when the eroded mask is empty.
std::optional<double> mask_flow_energy(const DepthMap& depth, const Mask& m);

struct InsertionResult {
    double rate = 0.0;  // flagged fraction over scored samples
    std::vector<int> flagged;  // per-sample 0/1, -1 when skipped
    int skipped = 0;
};

// A sample counts as an insertion when its predicted in-mask flow energy
// exceeds ratio_threshold times the ground-truth energy (floored at 1e-4).
InsertionResult insertion_rate(const std::vector<const DepthMap*>& pred_depths,
                               const std::vector<const DepthMap*>& gt_plus_depths,
                               const std::vector<const Mask*>& masks,
                               double ratio_threshold = 3.0);

}  // namespace grlb::metrics
