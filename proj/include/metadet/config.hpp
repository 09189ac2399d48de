#pragma once

#include <string>
#include <utility>
#include <vector>

#include "metadet/detector.hpp"
#include "metadet/meta.hpp"
#include "metadet/synth.hpp"
#include "metadet/tracker.hpp"

namespace metadet {

// Merged flat key=value configuration for every pipeline stage. Precedence
// when building one: command-line override > config file > default.
struct RunConfig {
    DetectorConfig detector;
    MetaConfig meta;
    SynthConfig synth;
    TrackerConfig tracker;
    uint64_t seed = 0;
    int64_t num_sequences = 8;

    void validate() const;
};

// Applies a single key=value pair; unknown keys or unparseable values throw.
void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig load_run_config(const std::string& path);  // "" -> defaults
RunConfig make_run_config(const std::string& path,
                          const std::vector<std::pair<std::string, std::string>>& overrides);

// Full dump, one key=value per line, every known key present.
std::string run_config_text(const RunConfig& cfg);

}  // namespace metadet
