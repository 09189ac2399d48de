#pragma once

#include <iosfwd>
#include <string>

#include "metadet/detector.hpp"
#include "metadet/tensor.hpp"

namespace metadet {

// Flat binary tensor format: magic "MDT1", precision byte, rank and dims as
// 64-bit little-endian, then raw values little-endian (float32 or float64).
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

// Checkpoint: key=value DetectorConfig text block terminated by an empty
// line, then (name-length, name, trainable flag, weight, optional lr) records.
void save_checkpoint(const std::string& path, const DetectorConfig& cfg, const ParamSet& params);
std::pair<DetectorConfig, ParamSet> load_checkpoint(const std::string& path);

std::string detector_config_to_text(const DetectorConfig& cfg);
DetectorConfig detector_config_from_text(const std::string& text);

}  // namespace metadet
