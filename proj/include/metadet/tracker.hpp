#pragma once

#include <vector>

#include "metadet/detector.hpp"
#include "metadet/meta.hpp"
#include "metadet/synth.hpp"

namespace metadet {

struct TrackerConfig {
    int64_t adapt_steps = 5;        // GD steps on the initial frame
    int64_t online_steps = 1;       // GD steps per online update
    int64_t update_interval = 10;   // frames between scheduled updates
    double score_threshold = 0.1;   // below this on every cell: target lost
    double psr_threshold = 0.7;     // distracting-peak trigger
    int64_t buffer_capacity = 30;   // support buffer entries, initial pinned
    double add_score = 0.8;         // min score to store a tracking result
    double penalty_k = 0.04;        // shape-penalty strength
    double window_influence = 0.42; // cosine-window blend weight
    double shape_lerp = 0.3;        // w/h interpolation factor

    void validate() const;
};

// One buffer entry: the samples gathered from a single frame. The initial
// entry holds the zoom support set and is never evicted.
using BufferEntry = std::vector<Sample>;

struct TrackerState {
    ParamSet params;
    BoundingBox prev_box;  // frame coordinates
    std::vector<BufferEntry> buffer;
    int64_t frame_index = 0;  // frames seen so far (init counts as 1)
    Tensor window;            // [g,g] cosine window
    DetectorConfig det;
    TrackerConfig cfg;
};

TrackerState tracker_init(const Tensor& frame, const BoundingBox& gt,
                          const ParamSet& base_params, const DetectorConfig& det,
                          const TrackerConfig& cfg);

struct TrackOutcome {
    BoundingBox box;       // frame coordinates, post-smoothing
    double score = 0;      // raw detector score of the selected candidate
    bool fallback = false; // every raw score below the threshold
    double psr = 0;
    Tensor patch;          // search crop fed to the detector
    BoundingBox patch_box; // selected candidate in patch coordinates
};

TrackOutcome track_frame(TrackerState& state, const Tensor& frame);

// (peak - sidelobe mean) / (sidelobe std + 1e-6), sidelobe excluding an
// 11x11 cell window around the peak, squashed through s/(s+5) into [0,1].
// Constant maps (and maps too small to have a sidelobe) give 0.
double peak_to_sidelobe(const Tensor& score_map);

void end_of_frame(TrackerState& state, const Tensor& patch, const BoundingBox& patch_box,
                  double score, double psr);

std::vector<Detection> run_tracker(const Sequence& seq, const ParamSet& base_params,
                                   const DetectorConfig& det, const TrackerConfig& cfg);

// Result file: one line per frame, `frame_idx cx cy w h score`.
void save_results(const std::string& path, const std::vector<Detection>& results);
std::vector<Detection> load_results(const std::string& path);

}  // namespace metadet
