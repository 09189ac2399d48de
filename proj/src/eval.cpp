#include "metadet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace metadet {

EvalReport evaluate(const std::vector<BoundingBox>& predictions,
                    const std::vector<BoundingBox>& gt) {
    if (predictions.size() != gt.size())
        throw std::invalid_argument("evaluate: prediction/gt length mismatch");
    EvalReport r;
    r.frames.reserve(predictions.size());
    for (size_t i = 0; i < predictions.size(); ++i) {
        FrameRecord rec;
        rec.frame = static_cast<int64_t>(i);
        rec.iou = iou(predictions[i], gt[i]);
        double dx = predictions[i].cx - gt[i].cx;
        double dy = predictions[i].cy - gt[i].cy;
        rec.center_dist = std::sqrt(dx * dx + dy * dy);
        r.frames.push_back(rec);
    }
    size_t n = r.frames.size();
    r.success.assign(101, 0.0);
    if (n == 0) return r;
    double iou_sum = 0;
    size_t close = 0;
    for (const auto& rec : r.frames) {
        iou_sum += rec.iou;
        if (rec.center_dist <= 20.0) ++close;
        for (int t = 0; t < 101; ++t)
            if (rec.iou > t / 100.0) r.success[t] += 1.0;
    }
    for (auto& s : r.success) s /= static_cast<double>(n);
    r.mean_iou = iou_sum / static_cast<double>(n);
    double auc = 0;
    for (double s : r.success) auc += s;
    r.auc = auc / 101.0;
    r.precision_20px = static_cast<double>(close) / static_cast<double>(n);
    return r;
}

std::string report_table(const EvalReport& r) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "frames      " << r.frames.size() << "\n";
    os << "mean_iou    " << r.mean_iou << "\n";
    os << "auc         " << r.auc << "\n";
    os << "prec@20px   " << r.precision_20px << "\n";
    return os.str();
}

std::string report_metrics(const EvalReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "frames=" << r.frames.size() << "\n";
    os << "mean_iou=" << r.mean_iou << "\n";
    os << "auc=" << r.auc << "\n";
    os << "precision_20px=" << r.precision_20px << "\n";
    return os.str();
}

std::string success_curve_text(const EvalReport& r) {
    std::ostringstream os;
    os.precision(17);
    for (size_t t = 0; t < r.success.size(); ++t)
        os << t / 100.0 << " " << r.success[t] << "\n";
    return os.str();
}

BoundingBox best_detection(const Tensor& image, const ParamSet& params,
                           const DetectorConfig& cfg, double* score) {
    DetectorOutput out = detector_forward(image, params, cfg);
    auto dets = decode(out.cls_map->value, out.reg_map->value, cfg);
    size_t best = 0;
    for (size_t i = 1; i < dets.size(); ++i)
        if (dets[i].score > dets[best].score) best = i;
    if (score) *score = dets[best].score;
    return dets[best].box;
}

namespace {

double mean_target_iou(const ParamSet& params, const std::vector<Sample>& target,
                       const DetectorConfig& cfg) {
    double sum = 0;
    for (const auto& s : target) sum += iou(best_detection(s.image, params, cfg), s.box);
    return sum / static_cast<double>(target.size());
}

void run_side(AdaptationSide& side, const ParamSet& params, const std::vector<Task>& tasks,
              int64_t steps, const DetectorConfig& cfg) {
    side.loss_curve.assign(static_cast<size_t>(steps) + 1, 0.0);
    for (const auto& task : tasks) {
        auto traj = inner_gd(params, detector_sample_loss(task.support, cfg), steps);
        auto target_loss = detector_sample_loss(task.target, cfg);
        for (int64_t k = 0; k <= steps; ++k) {
            auto nodes = make_param_nodes(traj[static_cast<size_t>(k)], false);
            side.loss_curve[static_cast<size_t>(k)] += scalar_value(target_loss(nodes));
        }
        side.iou_before += mean_target_iou(traj.front(), task.target, cfg);
        side.iou_after += mean_target_iou(traj.back(), task.target, cfg);
    }
    double n = static_cast<double>(tasks.size());
    for (auto& v : side.loss_curve) v /= n;
    side.iou_before /= n;
    side.iou_after /= n;
    side.loss_before = side.loss_curve.front();
    side.loss_after = side.loss_curve.back();
}

}  // namespace

AdaptationReport adaptation_gap(const ParamSet& meta_params, const ParamSet& baseline_params,
                                const std::vector<Task>& tasks, int64_t steps,
                                const DetectorConfig& cfg) {
    if (tasks.empty()) throw std::invalid_argument("adaptation_gap: no tasks");
    AdaptationReport r;
    r.tasks = static_cast<int64_t>(tasks.size());
    r.steps = steps;
    run_side(r.meta, meta_params, tasks, steps, cfg);
    run_side(r.baseline, baseline_params, tasks, steps, cfg);
    return r;
}

std::string adaptation_report_text(const AdaptationReport& r) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << "tasks=" << r.tasks << " steps=" << r.steps << "\n";
    auto side = [&](const char* name, const AdaptationSide& s) {
        os << name << " iou " << s.iou_before << " -> " << s.iou_after << "  loss "
           << s.loss_before << " -> " << s.loss_after << "\n";
        os << name << " loss_curve";
        for (double v : s.loss_curve) os << " " << v;
        os << "\n";
    };
    side("meta    ", r.meta);
    side("baseline", r.baseline);
    return os.str();
}

}  // namespace metadet
