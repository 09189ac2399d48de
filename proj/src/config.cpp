#include "metadet/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace metadet {

namespace {

int64_t parse_i64(const std::string& key, const std::string& v) {
    size_t pos = 0;
    int64_t x;
    try {
        x = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    }
    if (pos != v.size()) throw std::invalid_argument("config: bad integer for '" + key + "': " + v);
    return x;
}

double parse_f64(const std::string& key, const std::string& v) {
    size_t pos = 0;
    double x;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    }
    if (pos != v.size()) throw std::invalid_argument("config: bad number for '" + key + "': " + v);
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw std::invalid_argument("config: bad boolean for '" + key + "': " + v);
}

std::vector<std::string> split_csv(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

std::string shape_name(ObjectShape s) {
    switch (s) {
        case ObjectShape::kRectangle: return "rectangle";
        case ObjectShape::kEllipse: return "ellipse";
        case ObjectShape::kTriangle: return "triangle";
    }
    return "rectangle";
}

ObjectShape shape_from(const std::string& v) {
    if (v == "rectangle") return ObjectShape::kRectangle;
    if (v == "ellipse") return ObjectShape::kEllipse;
    if (v == "triangle") return ObjectShape::kTriangle;
    throw std::invalid_argument("config: unknown shape '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
    detector.validate();
    meta.validate();
    synth.validate();
    tracker.validate();
    if (num_sequences < 1) throw std::invalid_argument("config: num_sequences must be >= 1");
}

void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "seed") {
        cfg.seed = static_cast<uint64_t>(parse_i64(key, value));
        cfg.synth.seed = cfg.seed;
    } else if (key == "num_sequences") {
        cfg.num_sequences = parse_i64(key, value);
    } else if (key == "head_style") {
        if (value == "anchor")
            cfg.detector.head_style = HeadStyle::kAnchorBased;
        else if (value == "anchor_free")
            cfg.detector.head_style = HeadStyle::kAnchorFree;
        else
            throw std::invalid_argument("config: head_style must be anchor or anchor_free");
    } else if (key == "input_size") {
        cfg.detector.input_size = parse_i64(key, value);
    } else if (key == "stride") {
        cfg.detector.stride = parse_i64(key, value);
    } else if (key == "anchor_size") {
        cfg.detector.anchor_size = parse_f64(key, value);
    } else if (key == "trunk_channels") {
        cfg.detector.trunk_channels.clear();
        for (const auto& c : split_csv(value))
            cfg.detector.trunk_channels.push_back(parse_i64(key, c));
    } else if (key == "shared_trunk") {
        cfg.detector.shared_trunk = parse_bool(key, value);
    } else if (key == "frozen_prefix_layers") {
        cfg.detector.frozen_prefix_layers = parse_i64(key, value);
    } else if (key == "precision") {
        if (value == "double")
            cfg.detector.precision = Precision::kDouble;
        else if (value == "single")
            cfg.detector.precision = Precision::kSingle;
        else
            throw std::invalid_argument("config: precision must be double or single");
    } else if (key == "inner_steps") {
        cfg.meta.inner_steps = parse_i64(key, value);
    } else if (key == "alpha_init") {
        cfg.meta.alpha_init = parse_f64(key, value);
    } else if (key == "outer_lr") {
        cfg.meta.outer_lr = parse_f64(key, value);
    } else if (key == "tasks_per_iteration") {
        cfg.meta.tasks_per_iteration = parse_i64(key, value);
    } else if (key == "first_order_epochs") {
        cfg.meta.first_order_epochs = parse_i64(key, value);
    } else if (key == "epochs") {
        cfg.meta.epochs = parse_i64(key, value);
    } else if (key == "iterations_per_epoch") {
        cfg.meta.iterations_per_epoch = parse_i64(key, value);
    } else if (key == "learn_alpha") {
        cfg.meta.learn_alpha = parse_bool(key, value);
    } else if (key == "clip_norm") {
        cfg.meta.clip_norm = parse_f64(key, value);
    } else if (key == "gamma_final") {
        cfg.meta.gamma_final.clear();
        for (const auto& c : split_csv(value)) cfg.meta.gamma_final.push_back(parse_f64(key, c));
    } else if (key == "canvas_size") {
        cfg.synth.canvas_size = parse_i64(key, value);
    } else if (key == "shapes") {
        cfg.synth.shapes.clear();
        for (const auto& c : split_csv(value)) cfg.synth.shapes.push_back(shape_from(c));
    } else if (key == "min_object_size") {
        cfg.synth.min_object_size = parse_f64(key, value);
    } else if (key == "max_object_size") {
        cfg.synth.max_object_size = parse_f64(key, value);
    } else if (key == "motion_sigma") {
        cfg.synth.motion_sigma = parse_f64(key, value);
    } else if (key == "scale_sigma") {
        cfg.synth.scale_sigma = parse_f64(key, value);
    } else if (key == "appearance_sigma") {
        cfg.synth.appearance_sigma = parse_f64(key, value);
    } else if (key == "distractor_count") {
        cfg.synth.distractor_count = parse_i64(key, value);
    } else if (key == "sequence_length") {
        cfg.synth.sequence_length = parse_i64(key, value);
    } else if (key == "adapt_steps") {
        cfg.tracker.adapt_steps = parse_i64(key, value);
    } else if (key == "online_steps") {
        cfg.tracker.online_steps = parse_i64(key, value);
    } else if (key == "update_interval") {
        cfg.tracker.update_interval = parse_i64(key, value);
    } else if (key == "score_threshold") {
        cfg.tracker.score_threshold = parse_f64(key, value);
    } else if (key == "psr_threshold") {
        cfg.tracker.psr_threshold = parse_f64(key, value);
    } else if (key == "buffer_capacity") {
        cfg.tracker.buffer_capacity = parse_i64(key, value);
    } else if (key == "add_score") {
        cfg.tracker.add_score = parse_f64(key, value);
    } else if (key == "penalty_k") {
        cfg.tracker.penalty_k = parse_f64(key, value);
    } else if (key == "window_influence") {
        cfg.tracker.window_influence = parse_f64(key, value);
    } else if (key == "shape_lerp") {
        cfg.tracker.shape_lerp = parse_f64(key, value);
    } else {
        throw std::invalid_argument("config: unknown key '" + key + "'");
    }
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open '" + path + "'");
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value");
        apply_config_key(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

RunConfig make_run_config(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides) {
    RunConfig cfg = load_run_config(path);
    for (const auto& [k, v] : overrides) apply_config_key(cfg, k, v);
    cfg.validate();
    return cfg;
}

std::string run_config_text(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "seed=" << cfg.seed << "\n";
    os << "num_sequences=" << cfg.num_sequences << "\n";
    os << "head_style="
       << (cfg.detector.head_style == HeadStyle::kAnchorBased ? "anchor" : "anchor_free") << "\n";
    os << "input_size=" << cfg.detector.input_size << "\n";
    os << "stride=" << cfg.detector.stride << "\n";
    os << "anchor_size=" << cfg.detector.anchor_size << "\n";
    os << "trunk_channels=";
    for (size_t i = 0; i < cfg.detector.trunk_channels.size(); ++i)
        os << (i ? "," : "") << cfg.detector.trunk_channels[i];
    os << "\n";
    os << "shared_trunk=" << (cfg.detector.shared_trunk ? 1 : 0) << "\n";
    os << "frozen_prefix_layers=" << cfg.detector.frozen_prefix_layers << "\n";
    os << "precision=" << (cfg.detector.precision == Precision::kSingle ? "single" : "double")
       << "\n";
    os << "inner_steps=" << cfg.meta.inner_steps << "\n";
    os << "alpha_init=" << cfg.meta.alpha_init << "\n";
    os << "outer_lr=" << cfg.meta.outer_lr << "\n";
    os << "tasks_per_iteration=" << cfg.meta.tasks_per_iteration << "\n";
    os << "first_order_epochs=" << cfg.meta.first_order_epochs << "\n";
    os << "epochs=" << cfg.meta.epochs << "\n";
    os << "iterations_per_epoch=" << cfg.meta.iterations_per_epoch << "\n";
    os << "learn_alpha=" << (cfg.meta.learn_alpha ? 1 : 0) << "\n";
    os << "clip_norm=" << cfg.meta.clip_norm << "\n";
    os << "gamma_final=";
    for (size_t i = 0; i < cfg.meta.gamma_final.size(); ++i)
        os << (i ? "," : "") << cfg.meta.gamma_final[i];
    os << "\n";
    os << "canvas_size=" << cfg.synth.canvas_size << "\n";
    os << "shapes=";
    for (size_t i = 0; i < cfg.synth.shapes.size(); ++i)
        os << (i ? "," : "") << shape_name(cfg.synth.shapes[i]);
    os << "\n";
    os << "min_object_size=" << cfg.synth.min_object_size << "\n";
    os << "max_object_size=" << cfg.synth.max_object_size << "\n";
    os << "motion_sigma=" << cfg.synth.motion_sigma << "\n";
    os << "scale_sigma=" << cfg.synth.scale_sigma << "\n";
    os << "appearance_sigma=" << cfg.synth.appearance_sigma << "\n";
    os << "distractor_count=" << cfg.synth.distractor_count << "\n";
    os << "sequence_length=" << cfg.synth.sequence_length << "\n";
    os << "adapt_steps=" << cfg.tracker.adapt_steps << "\n";
    os << "online_steps=" << cfg.tracker.online_steps << "\n";
    os << "update_interval=" << cfg.tracker.update_interval << "\n";
    os << "score_threshold=" << cfg.tracker.score_threshold << "\n";
    os << "psr_threshold=" << cfg.tracker.psr_threshold << "\n";
    os << "buffer_capacity=" << cfg.tracker.buffer_capacity << "\n";
    os << "add_score=" << cfg.tracker.add_score << "\n";
    os << "penalty_k=" << cfg.tracker.penalty_k << "\n";
    os << "window_influence=" << cfg.tracker.window_influence << "\n";
    os << "shape_lerp=" << cfg.tracker.shape_lerp << "\n";
    return os.str();
}

}  // namespace metadet
