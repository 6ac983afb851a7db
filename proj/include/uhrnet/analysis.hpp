#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "uhrnet/graph.hpp"

namespace uhrnet {

enum class GigaUnit : std::uint8_t { Decimal, Binary };  // 1e9 or 2^30

// How FLOPs are counted. Every report records the convention it used.
struct CostConvention {
  int mac_factor = 1;
  bool include_bn = false;
  bool include_relu = false;
  bool include_upsample = false;
  // A 1x1 classifier (num_classes outputs) on top of the representation head.
  bool include_head = false;
  // Add and channel pooling.
  bool include_elementwise = false;
  GigaUnit unit = GigaUnit::Decimal;
  int num_classes = 19;

  double giga() const noexcept { return unit == GigaUnit::Binary ? 1073741824.0 : 1e9; }
  std::string describe() const;
  friend bool operator==(const CostConvention&, const CostConvention&) = default;
};

// All 128 combinations of the boolean toggles, mac_factor and unit.
std::vector<CostConvention> convention_space(int num_classes = 19);

// Resolution level from spatial size: 0 at 1/4 of the input, -1 at 1/2.
inline constexpr int kNoLevel = -100;

struct CostRow {
  int node_id = -1;  // -1 for the task-head classifier
  std::string name;
  std::string role;
  std::string kind;
  int level = kNoLevel;
  std::int64_t flops = 0;
  std::int64_t params = 0;
  std::int64_t trainable_params = 0;
};

struct RoleRollup {
  std::string role;
  std::int64_t flops = 0;
  std::int64_t params = 0;
};

struct CostReport {
  std::string graph_name;
  CostConvention convention;
  std::optional<Shape4> input_shape;
  std::vector<CostRow> rows;
  std::vector<RoleRollup> roles;  // grouped by role_group, first-appearance order
  std::int64_t total_flops = 0;
  std::int64_t total_params = 0;
  std::int64_t trainable_params = 0;

  double gflops() const noexcept { return static_cast<double>(total_flops) / convention.giga(); }
  double params_millions() const noexcept { return static_cast<double>(total_params) / 1e6; }

  // FLOPs per resolution level 0..4 (stem work at 1/2 is excluded).
  std::array<std::int64_t, 5> flops_by_level() const;
  // Share of total FLOPs spent at levels >= `level`.
  double flops_fraction_from_level(int level) const;
};

// Requires shapes. Parameter columns are filled as well.
CostReport count_flops(const LayerGraph& graph, const CostConvention& conv);

// Works on unshaped graphs; FLOP columns stay zero. BN stores 4C values of
// which 2C are trainable.
CostReport count_params(const LayerGraph& graph, const CostConvention& conv = {});

struct Baseline {
  const LayerGraph* graph = nullptr;  // shaped
  double target_gflops = 0;
};

struct CalibrationResidual {
  std::string name;
  double target = 0;
  double computed = 0;
  double relative_error = 0;  // signed, (computed - target) / target
};

struct CalibrationResult {
  CostConvention convention;
  std::vector<CalibrationResidual> residuals;
  double max_abs_error = 0;
  // Set when even the best convention misses some target by more than 5%.
  bool no_convention_within_tolerance = false;
};

inline constexpr double kCalibrationTolerance = 0.05;

// Exhaustive search over convention_space(), minimizing the maximum relative
// error. Ties go to the earlier convention in enumeration order.
CalibrationResult calibrate_convention(const std::vector<Baseline>& baselines, int num_classes = 19);

struct DiffRow {
  std::string role;
  std::int64_t a = 0;
  std::int64_t b = 0;
  std::int64_t delta() const noexcept { return b - a; }
  double relative() const noexcept { return a == 0 ? 0.0 : static_cast<double>(b - a) / static_cast<double>(a); }
};

struct CostDiff {
  std::string a_name;
  std::string b_name;
  CostConvention convention;
  std::vector<DiffRow> rows;
  DiffRow total;
  double headline_gflops() const noexcept { return static_cast<double>(total.delta()) / convention.giga(); }
};

// Per-role deltas b - a. Throws ConventionMismatch if conventions differ.
CostDiff compare(const CostReport& a, const CostReport& b);

std::string render_text(const CostReport& report, bool per_node = false);
std::string render_text(const CostDiff& diff);
std::string report_json(const CostReport& report, bool per_node = false, int indent = 2);
std::string diff_json(const CostDiff& diff, int indent = 2);

}  // namespace uhrnet
