#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metadet/autodiff.hpp"
#include "metadet/tensor.hpp"

namespace metadet {

enum class HeadStyle { kAnchorBased, kAnchorFree };

struct DetectorConfig {
    HeadStyle head_style = HeadStyle::kAnchorFree;
    int64_t input_size = 96;
    int64_t stride = 8;
    double anchor_size = 64.0;
    std::vector<int64_t> trunk_channels = {16, 32, 32, 64};
    bool shared_trunk = true;
    int64_t frozen_prefix_layers = 0;
    Precision precision = Precision::kDouble;

    int64_t grid() const { return input_size / stride; }
    void validate() const;
};

// Axis-aligned box, center + extent, in pixels.
struct BoundingBox {
    double cx = 0, cy = 0, w = 0, h = 0;

    double x1() const { return cx - w / 2; }
    double y1() const { return cy - h / 2; }
    double x2() const { return cx + w / 2; }
    double y2() const { return cy + h / 2; }
    double area() const { return w * h; }
    bool valid() const { return w > 0 && h > 0; }
};

double iou(const BoundingBox& a, const BoundingBox& b);

struct ParamEntry {
    Tensor weight;
    bool trainable = true;
    Tensor lr;  // empty (numel-tracking via shape) only when frozen
};

// Ordered collection of named parameters with per-entry learning rates.
class ParamSet {
public:
    void add(std::string name, Tensor weight, bool trainable, double alpha_init);
    bool has(const std::string& name) const;
    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;
    const std::vector<std::string>& names() const { return order_; }
    size_t size() const { return order_.size(); }

private:
    std::vector<std::string> order_;
    std::map<std::string, ParamEntry> entries_;
};

// Learning-rate tensor shape for a given weight: one rate per output kernel
// for rank-4 conv weights, elementwise otherwise.
std::vector<int64_t> lr_shape_for(const Tensor& weight);

using ParamNodeMap = std::map<std::string, NodePtr>;

ParamNodeMap make_param_nodes(const ParamSet& params, bool requires_grad = true);
ParamSet extract_params(const ParamSet& reference, const ParamNodeMap& nodes);

struct DetectorOutput {
    NodePtr cls_map;  // [1, g, g] logits / pre-activation centerness
    NodePtr reg_map;  // [4, g, g]
};

struct LabelTargets {
    Tensor cls_target;  // [1,g,g]
    Tensor cls_mask;    // [1,g,g]: +1 positive, -1 negative, 0 ignore
    Tensor reg_target;  // [4,g,g]
    Tensor reg_mask;    // [1,g,g]: 1 where regression is supervised
};

ParamSet init_detector_params(const DetectorConfig& cfg, double alpha_init, uint64_t seed);

DetectorOutput detector_forward(const NodePtr& image, const ParamNodeMap& params,
                                const DetectorConfig& cfg);
DetectorOutput detector_forward(const Tensor& image, const ParamSet& params,
                                const DetectorConfig& cfg);

LabelTargets assign_labels(const BoundingBox& gt, const DetectorConfig& cfg);

NodePtr detection_loss(const DetectorOutput& out, const LabelTargets& targets,
                       const DetectorConfig& cfg);

// Per-cell box parameterization (shared by assign_labels and decode).
std::vector<double> encode_box(const BoundingBox& gt, int64_t row, int64_t col,
                               const DetectorConfig& cfg);
BoundingBox decode_cell(const double reg[4], int64_t row, int64_t col,
                        const DetectorConfig& cfg);

struct Detection {
    BoundingBox box;
    double score = 0;
};

// All grid cells as candidates, row-major, clipped to image bounds.
std::vector<Detection> decode(const Tensor& cls_map, const Tensor& reg_map,
                              const DetectorConfig& cfg);

}  // namespace metadet
