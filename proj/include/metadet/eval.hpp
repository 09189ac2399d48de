#pragma once

#include <string>
#include <vector>

#include "metadet/detector.hpp"
#include "metadet/meta.hpp"
#include "metadet/synth.hpp"

namespace metadet {

struct FrameRecord {
    int64_t frame = 0;
    double iou = 0;
    double center_dist = 0;
};

struct EvalReport {
    double mean_iou = 0;
    std::vector<double> success;  // 101 thresholds 0.00 .. 1.00
    double auc = 0;
    double precision_20px = 0;
    std::vector<FrameRecord> frames;
};

// One-pass evaluation: success(t) = fraction of frames with IoU strictly
// above t; AUC = mean of the curve; precision = center error <= 20 px.
EvalReport evaluate(const std::vector<BoundingBox>& predictions,
                    const std::vector<BoundingBox>& gt);

std::string report_table(const EvalReport& r);
std::string report_metrics(const EvalReport& r);  // machine-readable metric=value block
std::string success_curve_text(const EvalReport& r);

// Highest-scoring detection of a forward pass, in patch coordinates.
BoundingBox best_detection(const Tensor& image, const ParamSet& params,
                           const DetectorConfig& cfg, double* score = nullptr);

struct AdaptationSide {
    double iou_before = 0;
    double iou_after = 0;
    double loss_before = 0;
    double loss_after = 0;
    std::vector<double> loss_curve;  // mean target loss at step 0..k
};

struct AdaptationReport {
    AdaptationSide meta;
    AdaptationSide baseline;
    int64_t tasks = 0;
    int64_t steps = 0;
};

// Paired experiment: adapt both parameter sets on each task's support set
// with the same k-step GD rule and compare target-set IoU and loss.
AdaptationReport adaptation_gap(const ParamSet& meta_params, const ParamSet& baseline_params,
                                const std::vector<Task>& tasks, int64_t steps,
                                const DetectorConfig& cfg);

std::string adaptation_report_text(const AdaptationReport& r);

}  // namespace metadet
