#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uhrnet/analysis.hpp"
#include "uhrnet/graph.hpp"

namespace uhrnet {

struct Preset {
  std::string name;
  Architecture architecture = Architecture::UHRNet;
  std::string structure;  // stage-sequence code, U-HRNet only
  NetworkConfig config;
  std::optional<HrnetV2Preset> hrnetv2;
  std::optional<double> published_gflops;  // at 1x3x1024x2048
};

const std::vector<Preset>& preset_registry();

// Throws UnknownPreset.
const Preset& find_preset(std::string_view name);

LayerGraph build_preset(const Preset& preset);
LayerGraph build_preset(std::string_view name);

// Desk-scale configuration for gradient checks: C=4, small variant, two blocks
// per branch, on the U-HRNet-W18-small sequence.
NetworkConfig micro_config();
LayerGraph build_micro();
inline const Shape4 kMicroInput{1, 3, 64, 64};

inline const Shape4 kReferenceInput{1, 3, 1024, 2048};

// Published totals the automatic convention is fitted against.
struct CalibrationTarget {
  const char* preset;
  double gflops;
};
const std::vector<CalibrationTarget>& calibration_targets();

// Builds the calibration baselines at `input` and fits a convention.
CalibrationResult calibrate_default(const Shape4& input = kReferenceInput);

}  // namespace uhrnet
