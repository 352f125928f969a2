#pragma once

#include <string>
#include <vector>

#include "grlb/image.hpp"
#include "grlb/scene.hpp"
#include "grlb/tensor.hpp"

namespace grlb {

struct ManifestEntry {
    std::string id;
    std::string i_minus, i_plus, x_minus, x_plus, mask, artifact_mask;  // absolute paths
    uint64_t seed = 0;
    std::string split;
};

std::vector<ManifestEntry> load_manifest(const std::string& manifest_path);

// In-RAM dataset over one split ("train", "val", or "all"). Pixels are kept
// quantized (u8 RGB, u16 depth) and expanded to float on access.
class Dataset {
public:
    static Dataset load(const std::string& manifest_path, const std::string& split);

    size_t size() const { return ids_.size(); }
    int height() const { return h_; }
    int width() const { return w_; }
    const std::string& id(size_t i) const { return ids_[i]; }

    scenegen::PairedSample sample(size_t i) const;

private:
    int h_ = 0, w_ = 0;
    std::vector<std::string> ids_;
    std::vector<uint64_t> seeds_;
    std::vector<std::vector<uint8_t>> i_minus_, i_plus_;   // h*w*3
    std::vector<std::vector<uint16_t>> x_minus_, x_plus_;  // h*w
    std::vector<std::vector<uint8_t>> mask_, artifact_;    // h*w, 0/1
};

// Panels are mapped to [-1,1] before diffusion (global affine over the
// [0,1] pixel range) and back on output.
inline float norm_unit(float v) { return 2.0f * v - 1.0f; }
inline float denorm_unit(float x) { return 0.5f * (x + 1.0f); }

Tensor depth_to_tensor(const DepthMap& d);                      // [1,1,H,W], normalized
Tensor image_to_tensor(const Image& img);                       // [1,3,H,W], normalized planar
Tensor mask_to_tensor(const Mask& m);                           // [1,1,H,W], {0,1}
DepthMap tensor_to_depth(const Tensor& t, int example = 0);     // denormalized, clamped [0,1]
Image tensor_to_image(const Tensor& t, int example = 0);        // denormalized, clamped [0,1]

// Stacks [1,C,H,W] tensors along the batch dimension.
Tensor stack_batch(const std::vector<Tensor>& examples);

}  // namespace grlb
