#pragma once

#include <optional>
#include <string>
#include <vector>

#include "grlb/image.hpp"
#include "grlb/rng.hpp"

namespace grlb::scenegen {

// Grid units per depth unit: a height step of h depth units is h*kHScale
// pixels tall for shadow geometry.
inline constexpr float kHScale = 32.0f;
inline constexpr float kShadowAttenuation = 0.45f;
inline constexpr float kReflectionOpacity = 0.6f;

enum class ObjectKind { kBox, kCylinder, kDome };

struct ObjectSpec {
    ObjectKind kind = ObjectKind::kBox;
    int row = 0, col = 0;     // footprint center
    float radius = 4.0f;      // half-extent for boxes, radius otherwise; >= 3 px
    float height = 0.4f;      // depth units, in (0.1, 0.8]
    float albedo = 0.7f;      // [0,1]
};

struct MirrorStrip {
    int r0 = 0, r1 = 0;  // row interval [r0, r1); empty when r1 <= r0
    bool enabled() const { return r1 > r0; }
};

struct SceneSpec {
    int h = 64, w = 64;
    std::vector<float> ground_albedo;  // h*w field in [0,1]
    std::vector<float> ground_height;  // h*w gentle deterministic gradient, range <= 0.05
    float light[3] = {0.5f, 0.5f, 0.70710678f};  // unit (col,row,up), positive elevation
    std::vector<ObjectSpec> objects;
    MirrorStrip mirror;
    uint64_t seed = 0;

    // Throws DataError on violated invariants (light elevation in [20,70]
    // degrees, objects fully inside the grid, mirror strip free of object
    // footprints, heights/radii in range).
    void validate() const;
};

// One scene rendered with and without a target object.
struct PairedSample {
    std::string id;
    Image i_minus;        // object present, with its shadow/reflection
    Image i_plus;         // object and causal artifacts absent
    DepthMap x0_minus;    // object present
    DepthMap x0_plus;     // object absent
    Mask mask;            // object footprint M
    Mask artifact_mask;   // pixels outside M whose rendering the object changed
    uint64_t seed = 0;
};

// Height profile of a single object at (r,c); 0 outside its footprint.
float object_height_at(const ObjectSpec& o, int r, int c);
Mask object_footprint(const SceneSpec& scene, size_t object_id);

// Heightfield in depth units: ground plus the pointwise max of included
// object profiles. include 0-based indexes into scene.objects.
DepthMap height_field(const SceneSpec& scene, const std::vector<size_t>& include);

// depth = 1 - height.
DepthMap render_depth(const SceneSpec& scene, const std::vector<size_t>& include);

// A pixel is shadowed iff marching from it toward the light (1 px steps,
// up to W samples) some terrain sample exceeds the ray height
// h0 + distance * tan(elevation) / kHScale.
Mask shadow_mask(const DepthMap& height, const float light[3]);

// Lambert shading from heightfield normals times albedo; shadowed pixels
// attenuated by kShadowAttenuation; mirror-strip pixels composite the
// vertically reflected silhouette pixels at kReflectionOpacity.
Image render_rgb(const DepthMap& depth, const std::vector<float>& albedo, const float light[3],
                 const Mask& shadow, const MirrorStrip& mirror, const Mask& silhouette);

// Renders the scene with and without the target. artifact_mask is the exact
// set of pixels outside M where the two renders differ.
PairedSample make_pair(const SceneSpec& scene, size_t target_id);

enum class CorruptMode { kFlattenToInput, kBlur };

// flatten-to-input: masked depth equals the (object-present) input depth,
// i.e. a stage-1 edit that changed nothing. blur: box blur radius 2 inside
// the mask, computed from the input map.
DepthMap corrupt_depth(const DepthMap& depth, const Mask& m, CorruptMode mode);

struct GenConfig {
    int count = 2000;
    int height = 64, width = 64;
    double val_fraction = 0.1;
    int min_objects = 1, max_objects = 3;
    float object_height_min = 0.15f, object_height_max = 0.7f;
    float radius_min = 3.0f, radius_max = 8.0f;
    float albedo_min = 0.15f, albedo_max = 0.95f;
    float ground_albedo_min = 0.3f, ground_albedo_max = 0.9f;
    float ground_slope_max = 0.05f;
    float elevation_min_deg = 25.0f, elevation_max_deg = 65.0f;
    float mirror_prob = 0.35f;
};

// Deterministic per-sample scene draw (rng should be seeded from the
// per-sample seed). Returns the scene; the target object is index 0.
SceneSpec sample_scene(Rng& rng, const GenConfig& cfg);

// Writes count PairedSamples plus manifest.json under out_dir. Per-sample
// seed = seed ^ fnv1a(id); split assignment recomputable from the id hash.
// Returns the manifest path.
std::string gen_dataset(const GenConfig& cfg, uint64_t seed, const std::string& out_dir);

std::string split_for_id(const std::string& id, double val_fraction);

}  // namespace grlb::scenegen
