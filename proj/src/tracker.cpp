#include "metadet/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace metadet {

void TrackerConfig::validate() const {
    if (adapt_steps < 0 || online_steps < 0) throw std::invalid_argument("negative step count");
    if (update_interval <= 0) throw std::invalid_argument("update_interval must be positive");
    if (buffer_capacity <= 0) throw std::invalid_argument("buffer_capacity must be positive");
    if (window_influence < 0 || window_influence > 1)
        throw std::invalid_argument("window_influence outside [0,1]");
    if (shape_lerp <= 0 || shape_lerp > 1) throw std::invalid_argument("shape_lerp outside (0,1]");
}

namespace {

Tensor cosine_window(int64_t g) {
    std::vector<double> hann(static_cast<size_t>(g), 1.0);
    if (g > 1)
        for (int64_t i = 0; i < g; ++i)
            hann[static_cast<size_t>(i)] =
                0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i) /
                                      static_cast<double>(g - 1)));
    Tensor w = Tensor::zeros({g, g});
    for (int64_t r = 0; r < g; ++r)
        for (int64_t c = 0; c < g; ++c)
            w.set(r * g + c, hann[static_cast<size_t>(r)] * hann[static_cast<size_t>(c)]);
    return w;
}

std::vector<Sample> flatten_buffer(const std::vector<BufferEntry>& buffer) {
    std::vector<Sample> all;
    for (const auto& entry : buffer) all.insert(all.end(), entry.begin(), entry.end());
    return all;
}

double padded_scale(const BoundingBox& b) {
    double p = (b.w + b.h) / 2;
    return std::sqrt((b.w + p) * (b.h + p));
}

double ratio_max(double a, double b) { return std::max(a / b, b / a); }

}  // namespace

TrackerState tracker_init(const Tensor& frame, const BoundingBox& gt,
                          const ParamSet& base_params, const DetectorConfig& det,
                          const TrackerConfig& cfg) {
    cfg.validate();
    det.validate();
    if (!gt.valid()) throw std::invalid_argument("tracker_init: invalid ground-truth box");
    TrackerState state;
    state.det = det;
    state.cfg = cfg;
    state.prev_box = gt;
    state.window = cosine_window(det.grid());

    std::vector<Sample> support = make_support_set(frame, gt, det.input_size);
    auto traj = inner_gd(base_params, detector_sample_loss(support, det), cfg.adapt_steps);
    state.params = traj.back();
    state.buffer.push_back(std::move(support));
    state.frame_index = 1;
    return state;
}

TrackOutcome track_frame(TrackerState& state, const Tensor& frame) {
    const TrackerConfig& cfg = state.cfg;
    auto [patch, tf] = crop_search_region(frame, state.prev_box, state.det.input_size);
    DetectorOutput out = detector_forward(patch, state.params, state.det);
    std::vector<Detection> dets = decode(out.cls_map->value, out.reg_map->value, state.det);

    TrackOutcome o;
    o.patch = patch;
    state.frame_index += 1;

    double best_raw = 0;
    Tensor score_map = Tensor::zeros({state.det.grid(), state.det.grid()});
    for (size_t j = 0; j < dets.size(); ++j) {
        best_raw = std::max(best_raw, dets[j].score);
        score_map.set(static_cast<int64_t>(j), dets[j].score);
    }
    o.psr = peak_to_sidelobe(score_map);
    if (best_raw < cfg.score_threshold) {
        o.fallback = true;
        o.box = state.prev_box;
        o.score = best_raw;
        return o;
    }

    BoundingBox prev_patch = tf.apply(state.prev_box);
    double r_prev = prev_patch.w / prev_patch.h;
    double s_prev = padded_scale(prev_patch);
    size_t best = 0;
    double best_final = -1;
    for (size_t j = 0; j < dets.size(); ++j) {
        const BoundingBox& b = dets[j].box;
        double mm = ratio_max(b.w / b.h, r_prev) * ratio_max(padded_scale(b), s_prev);
        double penalty = std::exp(-cfg.penalty_k * (mm - 1.0));
        double final_score = (1 - cfg.window_influence) * penalty * dets[j].score +
                             cfg.window_influence * state.window[static_cast<int64_t>(j)];
        if (final_score > best_final) {
            best_final = final_score;
            best = j;
        }
    }

    o.patch_box = dets[best].box;
    o.score = dets[best].score;
    BoundingBox sel = tf.invert(dets[best].box);
    BoundingBox smoothed = sel;
    smoothed.w = (1 - cfg.shape_lerp) * state.prev_box.w + cfg.shape_lerp * sel.w;
    smoothed.h = (1 - cfg.shape_lerp) * state.prev_box.h + cfg.shape_lerp * sel.h;
    state.prev_box = smoothed;
    o.box = smoothed;
    return o;
}

double peak_to_sidelobe(const Tensor& score_map) {
    if (score_map.rank() != 2) throw std::invalid_argument("peak_to_sidelobe: expected 2-d map");
    int64_t rows = score_map.shape()[0], cols = score_map.shape()[1];
    int64_t peak_idx = 0;
    for (int64_t i = 1; i < score_map.numel(); ++i)
        if (score_map[i] > score_map[peak_idx]) peak_idx = i;
    double peak = score_map[peak_idx];
    bool constant = true;
    for (int64_t i = 0; constant && i < score_map.numel(); ++i)
        constant = score_map[i] == peak;
    if (constant) return 0;
    int64_t pr = peak_idx / cols, pc = peak_idx % cols;

    double sum = 0, sq = 0;
    int64_t n = 0;
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            if (std::llabs(r - pr) <= 5 && std::llabs(c - pc) <= 5) continue;
            double v = score_map[r * cols + c];
            sum += v;
            sq += v * v;
            ++n;
        }
    if (n == 0) return 0;
    double mean = sum / static_cast<double>(n);
    double var = std::max(0.0, sq / static_cast<double>(n) - mean * mean);
    double s = (peak - mean) / (std::sqrt(var) + 1e-6);
    s = std::max(0.0, s);
    return s / (s + 5.0);
}

void end_of_frame(TrackerState& state, const Tensor& patch, const BoundingBox& patch_box,
                  double score, double psr) {
    const TrackerConfig& cfg = state.cfg;
    if (score >= cfg.add_score) {
        state.buffer.push_back({Sample{patch, patch_box}});
        if (static_cast<int64_t>(state.buffer.size()) > cfg.buffer_capacity)
            state.buffer.erase(state.buffer.begin() + 1);  // initial entry stays pinned
    }
    bool scheduled = state.frame_index % cfg.update_interval == 0;
    bool triggered = psr > cfg.psr_threshold;
    if ((scheduled || triggered) && cfg.online_steps > 0) {
        auto samples = flatten_buffer(state.buffer);
        auto traj = inner_gd(state.params, detector_sample_loss(samples, state.det),
                             cfg.online_steps);
        state.params = traj.back();
    }
}

std::vector<Detection> run_tracker(const Sequence& seq, const ParamSet& base_params,
                                   const DetectorConfig& det, const TrackerConfig& cfg) {
    if (seq.frames.size() < 2) throw std::invalid_argument("run_tracker: sequence too short");
    TrackerState state = tracker_init(seq.frames[0], seq.gt[0], base_params, det, cfg);
    std::vector<Detection> results;
    results.push_back({seq.gt[0], 1.0});
    for (size_t i = 1; i < seq.frames.size(); ++i) {
        TrackOutcome o = track_frame(state, seq.frames[i]);
        results.push_back({o.box, o.score});
        if (!o.fallback) end_of_frame(state, o.patch, o.patch_box, o.score, o.psr);
    }
    return results;
}

void save_results(const std::string& path, const std::vector<Detection>& results) {
    std::ofstream os(path);
    if (!os) throw std::invalid_argument("cannot open '" + path + "' for writing");
    os.precision(17);
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        os << i << " " << r.box.cx << " " << r.box.cy << " " << r.box.w << " " << r.box.h << " "
           << r.score << "\n";
    }
}

std::vector<Detection> load_results(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open '" + path + "'");
    std::vector<Detection> results;
    size_t idx;
    Detection d;
    while (is >> idx >> d.box.cx >> d.box.cy >> d.box.w >> d.box.h >> d.score) {
        if (idx != results.size())
            throw std::invalid_argument("result file '" + path + "': non-sequential frame index");
        results.push_back(d);
    }
    return results;
}

}  // namespace metadet
