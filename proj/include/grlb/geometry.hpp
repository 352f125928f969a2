#pragma once

#include "grlb/image.hpp"
#include "grlb/tensor.hpp"

namespace grlb::geometry {

// Per-pixel absolute forward differences of a depth map. The vertical
// component |d(i+1,j)-d(i,j)| is defined for i < H-1, the horizontal
// component |d(i,j+1)-d(i,j)| for j < W-1.
struct FlowField {
    int h = 0, w = 0;              // source map extents
    std::vector<float> vert;       // (h-1) x w
    std::vector<float> horiz;      // h x (w-1)

    float vert_at(int r, int c) const { return vert[static_cast<size_t>(r) * w + c]; }
    float horiz_at(int r, int c) const { return horiz[static_cast<size_t>(r) * (w - 1) + c]; }
};

FlowField depth_flow(const DepthMap& x);

// Mean over the valid-pixel set (both components defined, i.e. the
// (H-1)x(W-1) interior) of the L1 distance between the two flows.
double flow_loss(const DepthMap& a, const DepthMap& b);

// r = -flow_loss.
double reward(const DepthMap& x_hat, const DepthMap& x);

// Differentiable flow loss over [N,1,H,W] tensors (same valid-pixel
// convention, mean over N*(H-1)*(W-1)).
Tensor flow_loss_t(const Tensor& x_hat, const Tensor& x);

// output == original where M=0 (bit-exact), == pred where M=1.
DepthMap mask_align_replace(const DepthMap& pred, const DepthMap& original, const Mask& m);

// Mean absolute error over M=1 pixels; throws on empty mask.
double masked_mae(const DepthMap& pred, const DepthMap& gt, const Mask& m);

// Every M=1 pixel receives the max depth over the window x window
// neighborhood centered on it (clipped at borders), computed from the
// input map. M=0 pixels unchanged.
DepthMap local_max_fill_in(const DepthMap& depth, const Mask& m, int window = 10);

// Grayscale triplication; channel 0 inverts it. Out-of-range values are
// clamped with a warning on stderr.
Image colorize_depth(const DepthMap& x);

}  // namespace grlb::geometry
