#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "metadet/detector.hpp"
#include "metadet/tensor.hpp"

namespace metadet {

// Deterministic RNG used everywhere randomness is needed. Wraps a fixed
// generator with hand-rolled distributions so streams are reproducible
// independent of the standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}
    uint64_t next_u64();
    double uniform();                        // [0,1)
    double uniform(double lo, double hi);
    double normal();                         // N(0,1), Box-Muller
    int64_t uniform_int(int64_t lo, int64_t hi);  // inclusive

    static uint64_t mix(uint64_t a, uint64_t b);

private:
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0;
};

enum class ObjectShape { kRectangle, kEllipse, kTriangle };

struct SynthConfig {
    int64_t canvas_size = 128;
    std::vector<ObjectShape> shapes = {ObjectShape::kRectangle, ObjectShape::kEllipse,
                                       ObjectShape::kTriangle};
    double min_object_size = 18;
    double max_object_size = 48;
    double motion_sigma = 2.0;      // per-frame translation
    double scale_sigma = 0.01;      // per-frame log-scale drift
    double appearance_sigma = 0.0;  // per-frame color drift
    int64_t distractor_count = 0;
    int64_t sequence_length = 20;
    uint64_t seed = 0;

    void validate() const;
};

struct Sequence {
    std::vector<Tensor> frames;       // [3,H,W] each, values in [0,1]
    std::vector<BoundingBox> gt;      // one per frame
    int64_t instance_id = 0;
};

Sequence generate_sequence(const SynthConfig& cfg, int64_t instance_id);

// Binary mask [1,H,W] of all rendered objects in one frame; test oracle hook.
Tensor render_object_mask(const SynthConfig& cfg, int64_t instance_id, int64_t frame_idx);

// Affine frame->patch mapping produced by crop_search_region.
struct PatchTransform {
    double scale = 1;   // patch units per frame pixel
    double off_x = 0;   // frame-space crop origin
    double off_y = 0;

    BoundingBox apply(const BoundingBox& frame_box) const;
    BoundingBox invert(const BoundingBox& patch_box) const;
};

// Square context crop of side 2*sqrt((w+p)(h+p)), p=(w+h)/4, resized to
// out_size with bilinear sampling; out-of-frame area takes the frame mean.
std::pair<Tensor, PatchTransform> crop_search_region(const Tensor& frame, const BoundingBox& box,
                                                     int64_t out_size);
// Same crop with an explicit scale factor applied to the crop side.
std::pair<Tensor, PatchTransform> crop_search_region_scaled(const Tensor& frame,
                                                            const BoundingBox& box,
                                                            int64_t out_size, double side_scale);

struct Sample {
    Tensor image;
    BoundingBox box;
};

// Zoom augmentation: crops at side scales {1/1.08, 1, 1.08}.
std::vector<Sample> make_support_set(const Tensor& frame, const BoundingBox& box,
                                     int64_t out_size);

struct Task {
    std::vector<Sample> support;
    std::vector<Sample> target;
};

Task sample_task(const std::vector<Sequence>& pool, const SynthConfig& cfg, int64_t out_size,
                 Rng& rng);

// Directory export: meta.txt plus per-frame binary tensors.
void export_sequence(const std::string& dir, const Sequence& seq);
Sequence import_sequence(const std::string& dir);

}  // namespace metadet
