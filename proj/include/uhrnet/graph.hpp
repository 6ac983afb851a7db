#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "uhrnet/arch_dsl.hpp"
#include "uhrnet/ops.hpp"

namespace uhrnet {

struct Shape4 {
  std::int64_t n = 0, c = 0, h = 0, w = 0;
  friend bool operator==(const Shape4&, const Shape4&) = default;
  std::int64_t elements() const noexcept { return n * c * h * w; }
  Dims dims() const { return {n, c, h, w}; }
};

std::string to_string(const Shape4& s);

// Parses "NxCxHxW".
Shape4 parse_shape(std::string_view text);

enum class OpKind : std::uint8_t {
  Input,
  Conv2D,
  BatchNorm,
  ReLU,
  BilinearUpsample,
  ChannelPool,
  Concat,
  Add,
};

const char* to_string(OpKind kind);

struct InputAttrs {
  int channels = 3;
  friend bool operator==(const InputAttrs&, const InputAttrs&) = default;
};
struct Conv2DAttrs {
  int kernel = 3, stride = 1, pad = 1, in_ch = 0, out_ch = 0;
  bool bias = false;
  friend bool operator==(const Conv2DAttrs&, const Conv2DAttrs&) = default;
};
struct BatchNormAttrs {
  int channels = 0;
  double eps = 1e-5;
  friend bool operator==(const BatchNormAttrs&, const BatchNormAttrs&) = default;
};
struct ReluAttrs {
  friend bool operator==(const ReluAttrs&, const ReluAttrs&) = default;
};
struct UpsampleAttrs {
  int factor = 2;
  bool align_corners = true;
  friend bool operator==(const UpsampleAttrs&, const UpsampleAttrs&) = default;
};
struct ChannelPoolAttrs {
  int kernel = 2;
  PoolMode mode = PoolMode::Average;
  friend bool operator==(const ChannelPoolAttrs&, const ChannelPoolAttrs&) = default;
};
struct ConcatAttrs {
  friend bool operator==(const ConcatAttrs&, const ConcatAttrs&) = default;
};
struct AddAttrs {
  friend bool operator==(const AddAttrs&, const AddAttrs&) = default;
};

// Alternative order matches OpKind.
using NodeAttrs = std::variant<InputAttrs, Conv2DAttrs, BatchNormAttrs, ReluAttrs, UpsampleAttrs,
                               ChannelPoolAttrs, ConcatAttrs, AddAttrs>;

struct Node {
  int id = 0;
  NodeAttrs attrs;
  std::vector<int> inputs;
  // Hierarchical layer name, unique within a graph; weight-store key.
  std::string name;
  // stem | stageN.branchL | stageN.exchange | transition | fusion | head
  std::string role;
  std::optional<Shape4> out_shape;

  OpKind kind() const noexcept { return static_cast<OpKind>(attrs.index()); }
  bool has_params() const noexcept {
    return kind() == OpKind::Conv2D || kind() == OpKind::BatchNorm;
  }
  friend bool operator==(const Node&, const Node&) = default;
};

// Role prefix before the first '.', e.g. "stage3" for "stage3.branch2".
std::string role_group(std::string_view role);

enum class FusionKind : std::uint8_t { A, B };

const char* to_string(FusionKind kind);

struct StageInfo {
  int index = 0;  // 1-based
  std::vector<int> levels;
  int hr_modules = 0;
  std::optional<int> shortcut_from;
  friend bool operator==(const StageInfo&, const StageInfo&) = default;
};

// One U-shaped shortcut junction: the upsampled branch entering `stage` merged
// with the higher-resolution output of `shortcut_stage`.
struct FusionJunction {
  int stage = 0;
  int shortcut_stage = 0;
  int level = 0;
  int width = 0;
  FusionKind kind = FusionKind::B;
  int upsampled_node = 0;
  int shortcut_node = 0;
  int output_node = 0;
  friend bool operator==(const FusionJunction&, const FusionJunction&) = default;
};

enum class Architecture : std::uint8_t { UHRNet, HRNetV2 };

const char* to_string(Architecture arch);

struct LayerGraph {
  std::string name;
  Architecture architecture = Architecture::UHRNet;
  int base_width = 0;
  std::vector<Node> nodes;
  int output_id = -1;
  std::vector<StageInfo> stages;
  std::vector<FusionJunction> fusions;
  int head_channels = 0;

  const Node& node(int id) const { return nodes.at(static_cast<std::size_t>(id)); }
  bool shaped() const noexcept;
  std::optional<Shape4> input_shape() const;
  Shape4 output_shape() const;

  friend bool operator==(const LayerGraph&, const LayerGraph&) = default;
};

struct NetworkConfig {
  int base_width = 18;           // C, channels of the 1/4 stream
  int blocks_per_branch = 2;     // residual blocks per branch per hr-module
  bool small_variant = true;     // stage 1 uses 2 bottlenecks instead of 4
  FusionKind fusion = FusionKind::B;
  std::optional<int> stage3_modules_override;
  PoolMode channel_pool = PoolMode::Average;
  bool align_corners = true;
  int max_width = 8192;

  int stage1_blocks() const noexcept { return small_variant ? 2 : 4; }
  // The published configurations use 2 or 4 blocks per branch.
  bool is_canonical() const noexcept { return blocks_per_branch == 2 || blocks_per_branch == 4; }
};

LayerGraph build_uhrnet(const StageSequence& seq, const NetworkConfig& cfg, std::string name = {});

enum class HrnetV2Preset : std::uint8_t { W18SmallV1, W18SmallV2, W48 };

HrnetV2Preset parse_hrnetv2_preset(std::string_view name);
const char* to_string(HrnetV2Preset preset);

LayerGraph build_hrnetv2(HrnetV2Preset preset);

// Level sets per stage for a sequence: {0} for one-branch stages at the 1/4
// stream, {i-1, i} for two-branch stages at resolution index i.
std::vector<std::vector<int>> stage_levels(const StageSequence& seq);

// Annotates every node with its output shape. H and W must be multiples of 64.
LayerGraph infer_shapes(const LayerGraph& graph, const Shape4& input);

inline constexpr int kGraphFormatVersion = 1;

std::string export_graph(const LayerGraph& graph, int indent = 2);
LayerGraph import_graph(std::string_view json_text);

}  // namespace uhrnet
