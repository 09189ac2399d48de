#include "metadet/detector.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace metadet {

void DetectorConfig::validate() const {
    if (input_size <= 0 || stride <= 0 || input_size % stride != 0)
        throw numeric_error("detector config: input_size " + std::to_string(input_size) +
                            " must be a positive multiple of stride " + std::to_string(stride));
    if (head_style == HeadStyle::kAnchorBased && anchor_size <= 0)
        throw numeric_error("detector config: anchor_size must be positive for anchor-based heads");
    if (trunk_channels.empty())
        throw numeric_error("detector config: trunk_channels is empty");
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    double ix = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1()));
    double iy = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1()));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0 ? inter / uni : 0.0;
}

std::vector<int64_t> lr_shape_for(const Tensor& weight) {
    if (weight.rank() == 4) return {weight.shape()[0]};
    return weight.shape();
}

void ParamSet::add(std::string name, Tensor weight, bool trainable, double alpha_init) {
    if (entries_.count(name)) throw numeric_error("duplicate parameter '" + name + "'");
    ParamEntry e;
    e.trainable = trainable;
    if (trainable) e.lr = Tensor::full(lr_shape_for(weight), alpha_init, weight.precision());
    e.weight = std::move(weight);
    order_.push_back(name);
    entries_.emplace(std::move(name), std::move(e));
}

bool ParamSet::has(const std::string& name) const { return entries_.count(name) != 0; }

ParamEntry& ParamSet::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw numeric_error("unknown parameter '" + name + "'");
    return it->second;
}

const ParamEntry& ParamSet::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw numeric_error("unknown parameter '" + name + "'");
    return it->second;
}

ParamNodeMap make_param_nodes(const ParamSet& params, bool requires_grad) {
    ParamNodeMap nodes;
    for (const auto& name : params.names()) {
        const ParamEntry& e = params.at(name);
        nodes[name] = e.trainable ? leaf(e.weight, requires_grad) : constant(e.weight);
    }
    return nodes;
}

ParamSet extract_params(const ParamSet& reference, const ParamNodeMap& nodes) {
    ParamSet out;
    for (const auto& name : reference.names()) {
        const ParamEntry& ref = reference.at(name);
        auto it = nodes.find(name);
        Tensor w = it != nodes.end() ? it->second->value : ref.weight;
        out.add(name, std::move(w), ref.trainable, 0.0);
        if (ref.trainable) out.at(name).lr = ref.lr;
    }
    return out;
}

namespace {

struct LayerSpec {
    std::string name;
    int64_t cin, cout, stride;
    bool zero_init;
    bool frozen;
};

// Static layer plan for a config; head layers come after the trunk.
std::vector<LayerSpec> layer_plan(const DetectorConfig& cfg) {
    cfg.validate();
    std::vector<LayerSpec> plan;
    int64_t n = static_cast<int64_t>(cfg.trunk_channels.size());
    int64_t cin = 3;
    for (int64_t i = 0; i < n; ++i) {
        int64_t cout = cfg.trunk_channels[static_cast<size_t>(i)];
        int64_t stride = i == 0 ? 1 : 2;
        bool frozen = i < cfg.frozen_prefix_layers;
        bool last = i == n - 1;
        if (last && !cfg.shared_trunk) {
            plan.push_back({"cls_trunk." + std::to_string(i), cin, cout, stride, false, frozen});
            plan.push_back({"reg_trunk." + std::to_string(i), cin, cout, stride, false, frozen});
        } else {
            plan.push_back({"trunk." + std::to_string(i), cin, cout, stride, false, frozen});
        }
        cin = cout;
    }
    int64_t c = cin;
    plan.push_back({"cls_head.0", c, c, 1, false, false});
    plan.push_back({"cls_head.1", c, 1, 1, true, false});
    plan.push_back({"reg_head.0", c, c, 1, false, false});
    plan.push_back({"reg_head.1", c, 4, 1, true, false});
    return plan;
}

}  // namespace

ParamSet init_detector_params(const DetectorConfig& cfg, double alpha_init, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    ParamSet params;
    for (const auto& l : layer_plan(cfg)) {
        Tensor w({l.cout, l.cin, 3, 3}, cfg.precision);
        if (!l.zero_init) {
            double scale = std::sqrt(2.0 / static_cast<double>(l.cin * 9));
            for (int64_t i = 0; i < w.numel(); ++i) w.set(i, nd(rng) * scale);
        }
        params.add(l.name + ".weight", std::move(w), !l.frozen, alpha_init);
        params.add(l.name + ".bias", Tensor::zeros({l.cout}, cfg.precision), !l.frozen, alpha_init);
    }
    return params;
}

DetectorOutput detector_forward(const NodePtr& image, const ParamNodeMap& params,
                                const DetectorConfig& cfg) {
    const Tensor& img = image->value;
    if (img.rank() != 3 || img.shape()[0] != 3 || img.shape()[1] != cfg.input_size ||
        img.shape()[2] != cfg.input_size)
        throw numeric_error("detector_forward: image " + img.shape_str() + " does not match input_size " +
                            std::to_string(cfg.input_size));

    auto get = [&](const std::string& name) -> const NodePtr& {
        auto it = params.find(name);
        if (it == params.end())
            throw numeric_error("detector_forward: missing parameter '" + name + "' for this config");
        return it->second;
    };
    auto conv = [&](const NodePtr& x, const std::string& layer, int64_t stride) {
        return conv2d(x, get(layer + ".weight"), get(layer + ".bias"), stride, 1);
    };

    int64_t n = static_cast<int64_t>(cfg.trunk_channels.size());
    NodePtr x = image;
    for (int64_t i = 0; i + 1 < n; ++i)
        x = relu(conv(x, "trunk." + std::to_string(i), i == 0 ? 1 : 2));

    std::string last = std::to_string(n - 1);
    int64_t last_stride = n == 1 ? 1 : 2;
    NodePtr cls_feat, reg_feat;
    if (cfg.shared_trunk) {
        NodePtr t = relu(conv(x, "trunk." + last, last_stride));
        cls_feat = t;
        reg_feat = t;
    } else {
        cls_feat = relu(conv(x, "cls_trunk." + last, last_stride));
        reg_feat = relu(conv(x, "reg_trunk." + last, last_stride));
    }

    DetectorOutput out;
    out.cls_map = conv(relu(conv(cls_feat, "cls_head.0", 1)), "cls_head.1", 1);
    out.reg_map = conv(relu(conv(reg_feat, "reg_head.0", 1)), "reg_head.1", 1);
    return out;
}

DetectorOutput detector_forward(const Tensor& image, const ParamSet& params,
                                const DetectorConfig& cfg) {
    return detector_forward(constant(image), make_param_nodes(params, false), cfg);
}

namespace {

BoundingBox cell_anchor(int64_t row, int64_t col, const DetectorConfig& cfg) {
    double s = static_cast<double>(cfg.stride);
    return {(static_cast<double>(col) + 0.5) * s, (static_cast<double>(row) + 0.5) * s,
            cfg.anchor_size, cfg.anchor_size};
}

}  // namespace

std::vector<double> encode_box(const BoundingBox& gt, int64_t row, int64_t col,
                               const DetectorConfig& cfg) {
    if (cfg.head_style == HeadStyle::kAnchorBased) {
        BoundingBox a = cell_anchor(row, col, cfg);
        return {(gt.cx - a.cx) / a.w, (gt.cy - a.cy) / a.h, std::log(gt.w / a.w),
                std::log(gt.h / a.h)};
    }
    double s = static_cast<double>(cfg.stride);
    double px = (static_cast<double>(col) + 0.5) * s;
    double py = (static_cast<double>(row) + 0.5) * s;
    return {(px - gt.x1()) / s, (py - gt.y1()) / s, (gt.x2() - px) / s, (gt.y2() - py) / s};
}

BoundingBox decode_cell(const double reg[4], int64_t row, int64_t col,
                        const DetectorConfig& cfg) {
    if (cfg.head_style == HeadStyle::kAnchorBased) {
        BoundingBox a = cell_anchor(row, col, cfg);
        double tw = std::clamp(reg[2], -10.0, 10.0);
        double th = std::clamp(reg[3], -10.0, 10.0);
        return {a.cx + reg[0] * a.w, a.cy + reg[1] * a.h, a.w * std::exp(tw), a.h * std::exp(th)};
    }
    double s = static_cast<double>(cfg.stride);
    double px = (static_cast<double>(col) + 0.5) * s;
    double py = (static_cast<double>(row) + 0.5) * s;
    double x1 = px - reg[0] * s, y1 = py - reg[1] * s;
    double x2 = px + reg[2] * s, y2 = py + reg[3] * s;
    return {(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
}

LabelTargets assign_labels(const BoundingBox& gt, const DetectorConfig& cfg) {
    cfg.validate();
    if (!gt.valid()) throw numeric_error("assign_labels: degenerate ground-truth box");
    double sz = static_cast<double>(cfg.input_size);
    if (gt.x2() <= 0 || gt.y2() <= 0 || gt.x1() >= sz || gt.y1() >= sz)
        throw numeric_error("assign_labels: box lies fully outside the image");

    int64_t g = cfg.grid();
    LabelTargets t;
    t.cls_target = Tensor::zeros({1, g, g});
    t.cls_mask = Tensor::zeros({1, g, g});
    t.reg_target = Tensor::zeros({4, g, g});
    t.reg_mask = Tensor::zeros({1, g, g});

    for (int64_t r = 0; r < g; ++r) {
        for (int64_t c = 0; c < g; ++c) {
            int64_t cell = r * g + c;
            bool positive = false;
            if (cfg.head_style == HeadStyle::kAnchorBased) {
                double ov = iou(cell_anchor(r, c, cfg), gt);
                if (ov > 0.5) {
                    positive = true;
                    t.cls_mask.set(cell, 1.0);
                    t.cls_target.set(cell, 1.0);
                } else if (ov < 0.3) {
                    t.cls_mask.set(cell, -1.0);
                }  // else ignore, mask stays 0
            } else {
                double s = static_cast<double>(cfg.stride);
                double px = (static_cast<double>(c) + 0.5) * s;
                double py = (static_cast<double>(r) + 0.5) * s;
                // central region: gt shrunk to half extent around its center
                bool central = std::fabs(px - gt.cx) <= gt.w / 4 && std::fabs(py - gt.cy) <= gt.h / 4;
                if (central) {
                    positive = true;
                    double l = px - gt.x1(), rr = gt.x2() - px;
                    double tp = py - gt.y1(), bt = gt.y2() - py;
                    double centerness = std::sqrt((std::min(l, rr) / std::max(l, rr)) *
                                                  (std::min(tp, bt) / std::max(tp, bt)));
                    t.cls_mask.set(cell, 1.0);
                    t.cls_target.set(cell, centerness);
                } else {
                    t.cls_mask.set(cell, -1.0);
                }
            }
            if (positive) {
                t.reg_mask.set(cell, 1.0);
                std::vector<double> enc = encode_box(gt, r, c, cfg);
                for (int64_t k = 0; k < 4; ++k) t.reg_target.set(k * g * g + cell, enc[static_cast<size_t>(k)]);
            }
        }
    }
    return t;
}

NodePtr detection_loss(const DetectorOutput& out, const LabelTargets& targets,
                       const DetectorConfig& cfg) {
    const Tensor& cm = out.cls_map->value;
    int64_t g = cfg.grid();
    if (cm.shape() != std::vector<int64_t>{1, g, g} ||
        out.reg_map->value.shape() != std::vector<int64_t>{4, g, g})
        throw numeric_error("detection_loss: output shapes " + cm.shape_str() + "/" +
                            out.reg_map->value.shape_str() + " do not match grid " +
                            std::to_string(g));
    if (!targets.cls_target.same_shape(cm))
        throw numeric_error("detection_loss: target shape mismatch");

    int64_t n = g * g;
    double npos = 0;
    for (int64_t i = 0; i < n; ++i) npos += targets.reg_mask[i];
    double norm = std::max(1.0, npos);

    // masks as [1,g,g] and [4,g,g] constants
    Tensor pos(std::vector<int64_t>{1, g, g});
    Tensor negm(std::vector<int64_t>{1, g, g});
    Tensor reg4(std::vector<int64_t>{4, g, g});
    for (int64_t i = 0; i < n; ++i) {
        pos.set(i, targets.cls_mask[i] > 0 ? 1.0 : 0.0);
        negm.set(i, targets.cls_mask[i] < 0 ? 1.0 : 0.0);
        for (int64_t k = 0; k < 4; ++k) reg4.set(k * n + i, targets.reg_mask[i]);
    }
    NodePtr pos_mask = constant(pos);
    NodePtr neg_mask = constant(negm);
    NodePtr reg_mask4 = constant(reg4);
    NodePtr cls_tgt = constant(targets.cls_target);
    NodePtr reg_tgt = constant(targets.reg_target);
    NodePtr one = constant(Tensor::scalar(1.0));
    NodePtr inv_norm = constant(Tensor::scalar(1.0 / norm));

    NodePtr capped = clamp(out.cls_map, -20.0, 20.0);
    NodePtr cls_loss, reg_loss;

    if (cfg.head_style == HeadStyle::kAnchorBased) {
        // focal loss, gamma=2, alpha=0.25, over non-ignored cells
        NodePtr p = sigmoid(capped);
        NodePtr fl_pos = mul(constant(Tensor::scalar(-0.25)),
                             mul(square(sub(one, p)), log(p)));
        NodePtr fl_neg = mul(constant(Tensor::scalar(-0.75)),
                             mul(square(p), log(sub(one, p))));
        cls_loss = mul(reduce_sum(add(mul(pos_mask, fl_pos), mul(neg_mask, fl_neg))), inv_norm);

        // smooth L1 with delta = 1/9 over positives
        const double delta = 1.0 / 9.0;
        NodePtr d = sub(out.reg_map, reg_tgt);
        NodePtr ad = abs(d);
        Tensor inner(std::vector<int64_t>{4, g, g});
        for (int64_t i = 0; i < 4 * n; ++i) inner.set(i, ad->value[i] < delta ? 1.0 : 0.0);
        NodePtr in_mask = constant(inner);
        NodePtr quad = mul(constant(Tensor::scalar(0.5 / delta)), square(d));
        NodePtr lin = sub(ad, constant(Tensor::scalar(0.5 * delta)));
        NodePtr huber = add(mul(in_mask, quad), mul(sub(one, in_mask), lin));
        reg_loss = mul(reduce_sum(mul(reg_mask4, huber)), inv_norm);
    } else {
        // L2 on centerness over all cells, L1 on offsets over positives
        NodePtr s = sigmoid(capped);
        cls_loss = reduce_mean(square(sub(s, cls_tgt)));
        NodePtr l1 = mul(reg_mask4, abs(sub(out.reg_map, reg_tgt)));
        reg_loss = mul(reduce_sum(l1), constant(Tensor::scalar(1.0 / (4.0 * norm))));
    }
    return add(cls_loss, reg_loss);
}

std::vector<Detection> decode(const Tensor& cls_map, const Tensor& reg_map,
                              const DetectorConfig& cfg) {
    int64_t g = cfg.grid();
    int64_t n = g * g;
    double sz = static_cast<double>(cfg.input_size);
    std::vector<Detection> dets;
    dets.reserve(static_cast<size_t>(n));
    auto sg = [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
    for (int64_t r = 0; r < g; ++r) {
        for (int64_t c = 0; c < g; ++c) {
            int64_t cell = r * g + c;
            double reg[4];
            for (int64_t k = 0; k < 4; ++k) reg[k] = reg_map[k * n + cell];
            BoundingBox b = decode_cell(reg, r, c, cfg);
            // clip to image with a 2 px minimum extent
            double x1 = std::clamp(b.x1(), 0.0, sz), x2 = std::clamp(b.x2(), 0.0, sz);
            double y1 = std::clamp(b.y1(), 0.0, sz), y2 = std::clamp(b.y2(), 0.0, sz);
            if (x2 - x1 < 2.0) {
                double mid = std::clamp((x1 + x2) / 2, 1.0, sz - 1.0);
                x1 = mid - 1.0;
                x2 = mid + 1.0;
            }
            if (y2 - y1 < 2.0) {
                double mid = std::clamp((y1 + y2) / 2, 1.0, sz - 1.0);
                y1 = mid - 1.0;
                y2 = mid + 1.0;
            }
            dets.push_back({{(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1}, sg(cls_map[cell])});
        }
    }
    return dets;
}

}  // namespace metadet
