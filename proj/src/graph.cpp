#include "uhrnet/graph.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <map>

namespace uhrnet {

std::string to_string(const Shape4& s) {
  return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
         std::to_string(s.w);
}

Shape4 parse_shape(std::string_view text) {
  std::array<std::int64_t, 4> v{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t end = (i < 3) ? text.find_first_of("xX", pos) : text.size();
    if (end == std::string_view::npos) {
      throw Error(ErrorCode::ShapeMismatch, "shape must be NxCxHxW, got '" + std::string(text) + "'");
    }
    const auto field = text.substr(pos, end - pos);
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v[i]);
    if (ec != std::errc() || ptr != field.data() + field.size() || v[i] <= 0) {
      throw Error(ErrorCode::ShapeMismatch, "invalid dimension '" + std::string(field) + "' in '" +
                                                std::string(text) + "'");
    }
    pos = end + 1;
  }
  return {v[0], v[1], v[2], v[3]};
}

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::Input: return "Input";
    case OpKind::Conv2D: return "Conv2D";
    case OpKind::BatchNorm: return "BatchNorm";
    case OpKind::ReLU: return "ReLU";
    case OpKind::BilinearUpsample: return "BilinearUpsample";
    case OpKind::ChannelPool: return "ChannelAvgPool";
    case OpKind::Concat: return "ConcatChannels";
    case OpKind::Add: return "Add";
  }
  return "Unknown";
}

const char* to_string(FusionKind kind) { return kind == FusionKind::A ? "A" : "B"; }

const char* to_string(Architecture arch) {
  return arch == Architecture::UHRNet ? "uhrnet" : "hrnetv2";
}

std::string role_group(std::string_view role) {
  return std::string(role.substr(0, role.find('.')));
}

bool LayerGraph::shaped() const noexcept {
  return !nodes.empty() &&
         std::all_of(nodes.begin(), nodes.end(), [](const Node& n) { return n.out_shape.has_value(); });
}

std::optional<Shape4> LayerGraph::input_shape() const {
  if (nodes.empty()) return std::nullopt;
  return nodes.front().out_shape;
}

Shape4 LayerGraph::output_shape() const {
  const auto& s = node(output_id).out_shape;
  if (!s) throw Error(ErrorCode::ShapesMissing, "graph '" + name + "' has no inferred shapes");
  return *s;
}

namespace {

constexpr int kStemWidth = 64;
constexpr int kBottleneckExpansion = 4;

class GraphBuilder {
 public:
  explicit GraphBuilder(LayerGraph& g) : g_(g) {}

  int input(int channels) { return push(InputAttrs{channels}, {}, "input", "input"); }

  int conv(int x, int kernel, int stride, int in_ch, int out_ch, const std::string& name,
           const std::string& role) {
    Conv2DAttrs a{kernel, stride, kernel / 2, in_ch, out_ch, false};
    return push(a, {x}, name, role);
  }
  int bn(int x, int channels, const std::string& name, const std::string& role) {
    return push(BatchNormAttrs{channels, 1e-5}, {x}, name, role);
  }
  int relu(int x, const std::string& name, const std::string& role) {
    return push(ReluAttrs{}, {x}, name, role);
  }
  int conv_bn(int x, int kernel, int stride, int in_ch, int out_ch, const std::string& name,
              const std::string& role) {
    const int c = conv(x, kernel, stride, in_ch, out_ch, name + ".conv", role);
    return bn(c, out_ch, name + ".bn", role);
  }
  int conv_bn_relu(int x, int kernel, int stride, int in_ch, int out_ch, const std::string& name,
                   const std::string& role) {
    return relu(conv_bn(x, kernel, stride, in_ch, out_ch, name, role), name + ".relu", role);
  }
  int upsample(int x, int factor, bool align_corners, const std::string& name, const std::string& role) {
    return push(UpsampleAttrs{factor, align_corners}, {x}, name, role);
  }
  int pool(int x, PoolMode mode, const std::string& name, const std::string& role) {
    return push(ChannelPoolAttrs{2, mode}, {x}, name, role);
  }
  int concat(std::vector<int> xs, const std::string& name, const std::string& role) {
    return push(ConcatAttrs{}, std::move(xs), name, role);
  }
  int add(int x, int y, const std::string& name, const std::string& role) {
    return push(AddAttrs{}, {x, y}, name, role);
  }

  int basic_block(int x, int width, const std::string& name, const std::string& role) {
    const int a = conv_bn_relu(x, 3, 1, width, width, name + ".1", role);
    const int b = conv_bn(a, 3, 1, width, width, name + ".2", role);
    return relu(add(b, x, name + ".add", role), name + ".relu", role);
  }

  int bottleneck(int x, int in_ch, int width, const std::string& name, const std::string& role) {
    const int out_ch = width * kBottleneckExpansion;
    const int a = conv_bn_relu(x, 1, 1, in_ch, width, name + ".1", role);
    const int b = conv_bn_relu(a, 3, 1, width, width, name + ".2", role);
    const int c = conv_bn(b, 1, 1, width, out_ch, name + ".3", role);
    const int residual = (in_ch == out_ch) ? x : conv_bn(x, 1, 1, in_ch, out_ch, name + ".proj", role);
    return relu(add(c, residual, name + ".add", role), name + ".relu", role);
  }

  int stem(int x) {
    const int a = conv_bn_relu(x, 3, 2, 3, kStemWidth, "stem.1", "stem");
    return conv_bn_relu(a, 3, 2, kStemWidth, kStemWidth, "stem.2", "stem");
  }

  // Multi-resolution exchange at the end of an hr-module. Branch i receives
  // every other branch: lower resolutions through 1x1 conv + BN + bilinear
  // upsampling, higher resolutions through a chain of 3x3 stride-2 convs.
  std::vector<int> exchange(const std::vector<int>& xs, const std::vector<int>& levels,
                            const std::vector<int>& widths, bool align_corners,
                            const std::string& name, const std::string& role) {
    const std::size_t n = xs.size();
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string into = name + ".to" + std::to_string(levels[i]);
      int acc = -1;
      for (std::size_t j = 0; j < n; ++j) {
        int y;
        const std::string from = into + ".from" + std::to_string(levels[j]);
        if (j == i) {
          y = xs[j];
        } else if (j > i) {
          y = conv_bn(xs[j], 1, 1, widths[j], widths[i], from, role);
          y = upsample(y, 1 << (levels[j] - levels[i]), align_corners, from + ".up", role);
        } else {
          y = xs[j];
          int ch = widths[j];
          const std::size_t steps = i - j;
          for (std::size_t k = 0; k < steps; ++k) {
            const std::string step = from + ".down" + std::to_string(k);
            if (k + 1 == steps) {
              y = conv_bn(y, 3, 2, ch, widths[i], step, role);
              ch = widths[i];
            } else {
              y = conv_bn_relu(y, 3, 2, ch, widths[j], step, role);
            }
          }
        }
        acc = (acc < 0) ? y : add(acc, y, from + ".add", role);
      }
      out[i] = relu(acc, into + ".relu", role);
    }
    return out;
  }

  int size() const { return static_cast<int>(g_.nodes.size()); }

 private:
  int push(NodeAttrs attrs, std::vector<int> inputs, const std::string& name, const std::string& role) {
    Node n;
    n.id = static_cast<int>(g_.nodes.size());
    n.attrs = std::move(attrs);
    n.inputs = std::move(inputs);
    n.name = name;
    n.role = role;
    g_.nodes.push_back(std::move(n));
    return g_.nodes.back().id;
  }

  LayerGraph& g_;
};

std::string stage_role(int stage) { return "stage" + std::to_string(stage); }

std::string branch_role(int stage, int level) {
  return stage_role(stage) + ".branch" + std::to_string(level);
}

int level_width(int base, int level) { return base << level; }

}  // namespace

std::vector<std::vector<int>> stage_levels(const StageSequence& seq) {
  if (seq.stages.empty() || seq.transitions.size() + 1 != seq.stages.size()) {
    throw Error(ErrorCode::InvalidSequence, "stage and transition counts disagree");
  }
  for (std::size_t k = 0; k < seq.stages.size(); ++k) {
    if (seq.stages[k] < 1 || seq.stages[k] > kMaxModuleCount) {
      throw Error(ErrorCode::InvalidSequence,
                  "stage " + std::to_string(k + 1) + " has an invalid module count");
    }
  }
  if (seq.terminal_two_branch && seq.stages.size() < 2) {
    throw Error(ErrorCode::InvalidSequence, "'=' requires at least two stages");
  }
  const auto idx = seq.resolution_indices();
  const std::size_t n = idx.size();
  std::vector<std::vector<int>> out;
  for (std::size_t k = 0; k < n; ++k) {
    const int i = idx[k];
    if (i < 0 || i > kMaxResolutionLevel) {
      throw Error(ErrorCode::InvalidSequence,
                  "stage " + std::to_string(k + 1) + " leaves the five resolution streams");
    }
    const bool one_branch = (k == 0) || (k + 1 == n && !seq.terminal_two_branch);
    if (one_branch) {
      if (i != 0) {
        throw Error(ErrorCode::InvalidSequence,
                    "one-branch terminal stage " + std::to_string(k + 1) +
                        " must return to the 1/4 stream; end the code with '=' to keep two branches");
      }
      out.push_back({0});
    } else {
      if (i == 0) {
        throw Error(ErrorCode::InvalidSequence,
                    "stage " + std::to_string(k + 1) + " sits on the 1/4 stream and cannot hold two branches");
      }
      out.push_back({i - 1, i});
    }
  }
  return out;
}

LayerGraph build_uhrnet(const StageSequence& seq_in, const NetworkConfig& cfg, std::string name) {
  const int C = cfg.base_width;
  if (C < 2 || C % 2 != 0) {
    throw Error(ErrorCode::InvalidConfig,
                "base width must be a positive even number for channel pooling, got " + std::to_string(C));
  }
  if (cfg.blocks_per_branch < 1) throw Error(ErrorCode::InvalidConfig, "blocks_per_branch must be >= 1");

  StageSequence seq = seq_in;
  if (cfg.stage3_modules_override) {
    if (seq.stages.size() < 3 || *cfg.stage3_modules_override < 1) {
      throw Error(ErrorCode::InvalidConfig, "stage-3 override needs a sequence with at least 3 stages");
    }
    seq.stages[2] = *cfg.stage3_modules_override;
  }
  const auto levels = stage_levels(seq);
  int max_level = 0;
  for (const auto& ls : levels) max_level = std::max(max_level, ls.back());
  if (static_cast<long long>(C) << max_level > cfg.max_width) {
    throw Error(ErrorCode::WidthOverflow, "width " + std::to_string(static_cast<long long>(C) << max_level) +
                                              " exceeds the bound " + std::to_string(cfg.max_width));
  }

  LayerGraph g;
  g.name = name.empty() ? "uhrnet-w" + std::to_string(C) + "-" + format_structure(seq) : std::move(name);
  g.architecture = Architecture::UHRNet;
  g.base_width = C;
  GraphBuilder b(g);

  int x = b.stem(b.input(3));

  // Stage 1: bottleneck modules at the 1/4 stream. Its wide output feeds a 3x3
  // conv to width C and, when stage 2 exists, the stride-2 conv creating the
  // 1/8 branch, as in HRNet's first transition.
  int ch = kStemWidth;
  const int s1_width = 64;
  for (int m = 0; m < seq.stages[0]; ++m) {
    for (int k = 0; k < cfg.stage1_blocks(); ++k) {
      x = b.bottleneck(x, ch, s1_width, "stage1.m" + std::to_string(m) + ".b0.blk" + std::to_string(k),
                       branch_role(1, 0));
      ch = s1_width * kBottleneckExpansion;
    }
  }
  const int stage1_wide = x;
  const int stage1_wide_ch = ch;
  x = b.conv_bn_relu(x, 3, 1, ch, C, "transition1.b0", "transition");
  g.stages.push_back(StageInfo{1, {0}, seq.stages[0], std::nullopt});

  std::vector<std::map<int, int>> stage_out{{{0, x}}};
  std::array<int, kMaxResolutionLevel + 1> latest;
  latest.fill(-1);
  latest[0] = x;

  for (std::size_t k = 1; k < seq.stages.size(); ++k) {
    const int stage = static_cast<int>(k) + 1;
    const std::string role = stage_role(stage);
    const auto& cur_levels = levels[k];
    const std::map<int, int>& prev = stage_out.back();
    const std::string tname = "transition" + std::to_string(k);
    std::map<int, int> next;
    StageInfo info{stage, cur_levels, seq.stages[k], std::nullopt};

    for (int l : cur_levels) {
      if (auto it = prev.find(l); it != prev.end()) {
        next[l] = it->second;
        continue;
      }
      if (seq.transitions[k - 1] == Direction::Down) {
        const bool from_stage1 = k == 1;
        next[l] = b.conv_bn_relu(from_stage1 ? stage1_wide : prev.at(l - 1), 3, 2,
                                 from_stage1 ? stage1_wide_ch : level_width(C, l - 1), level_width(C, l),
                                 tname + ".down", "transition");
        continue;
      }
      // Upsampling creates the higher-resolution branch from the previous
      // stage's higher-resolution output.
      int up = b.conv_bn(prev.at(l + 1), 1, 1, level_width(C, l + 1), level_width(C, l), tname + ".up",
                         "transition");
      up = b.upsample(up, 2, cfg.align_corners, tname + ".up.resize", "transition");

      std::optional<std::size_t> source;
      for (std::size_t j = k; j-- > 0;) {
        if (levels[j].size() == 2 && levels[j].front() == l) {
          source = j;
          break;
        }
      }
      const std::string fname = "fusion" + std::to_string(stage);
      if (!source) {
        next[l] = b.relu(up, fname + ".relu", "fusion");
        continue;
      }
      const int skip = stage_out[*source].at(l);
      int fused;
      if (cfg.fusion == FusionKind::B) {
        const int pu = b.pool(up, cfg.channel_pool, fname + ".pool_up", "fusion");
        const int ps = b.pool(skip, cfg.channel_pool, fname + ".pool_skip", "fusion");
        fused = b.concat({pu, ps}, fname + ".concat", "fusion");
      } else {
        fused = b.add(up, skip, fname + ".add", "fusion");
      }
      fused = b.relu(fused, fname + ".relu", "fusion");
      next[l] = fused;
      info.shortcut_from = static_cast<int>(*source) + 1;
      g.fusions.push_back(FusionJunction{stage, static_cast<int>(*source) + 1, l, level_width(C, l),
                                         cfg.fusion, up, skip, fused});
    }

    for (int m = 0; m < seq.stages[k]; ++m) {
      const std::string mname = role + ".m" + std::to_string(m);
      for (int l : cur_levels) {
        for (int blk = 0; blk < cfg.blocks_per_branch; ++blk) {
          next[l] = b.basic_block(next[l], level_width(C, l),
                                  mname + ".b" + std::to_string(l) + ".blk" + std::to_string(blk),
                                  branch_role(stage, l));
        }
      }
      if (cur_levels.size() == 2) {
        std::vector<int> xs{next[cur_levels[0]], next[cur_levels[1]]};
        std::vector<int> widths{level_width(C, cur_levels[0]), level_width(C, cur_levels[1])};
        auto ys = b.exchange(xs, cur_levels, widths, cfg.align_corners, mname + ".exchange",
                             role + ".exchange");
        next[cur_levels[0]] = ys[0];
        next[cur_levels[1]] = ys[1];
      }
    }
    for (int l : cur_levels) latest[static_cast<std::size_t>(l)] = next[l];
    stage_out.push_back(std::move(next));
    g.stages.push_back(std::move(info));
  }

  // Representation head: the most recent feature of every resolution reached,
  // resized to 1/4 and concatenated. With all five streams present each feature
  // is channel-pooled by 2 first.
  const bool pooled = (max_level == kMaxResolutionLevel);
  std::vector<int> parts;
  int head_ch = 0;
  for (int l = 0; l <= max_level; ++l) {
    int f = latest[static_cast<std::size_t>(l)];
    int w = level_width(C, l);
    const std::string hname = "head.l" + std::to_string(l);
    if (pooled) {
      f = b.pool(f, cfg.channel_pool, hname + ".pool", "head");
      w /= 2;
    }
    if (l > 0) f = b.upsample(f, 1 << l, cfg.align_corners, hname + ".resize", "head");
    parts.push_back(f);
    head_ch += w;
  }
  const int cat = b.concat(parts, "head.concat", "head");
  g.output_id = b.conv_bn_relu(cat, 1, 1, head_ch, head_ch, "head.1", "head");
  g.head_channels = head_ch;
  return g;
}

namespace {

struct HrnetV2Spec {
  const char* name;
  int width;
  int stage1_blocks;
  int stage1_width;
  std::array<int, 3> modules;  // stages 2-4
  int blocks;
};

HrnetV2Spec hrnetv2_spec(HrnetV2Preset p) {
  switch (p) {
    // Small-v1 runs its streams at 16/32/64/128 channels despite the name.
    case HrnetV2Preset::W18SmallV1: return {"hrnetv2-w18-small-v1", 16, 1, 32, {1, 1, 1}, 2};
    case HrnetV2Preset::W18SmallV2: return {"hrnetv2-w18-small-v2", 18, 2, 64, {1, 3, 2}, 2};
    case HrnetV2Preset::W48: return {"hrnetv2-w48", 48, 4, 64, {1, 4, 3}, 4};
  }
  throw Error(ErrorCode::UnknownPreset, "unknown HRNetV2 preset");
}

}  // namespace

const char* to_string(HrnetV2Preset preset) { return hrnetv2_spec(preset).name; }

HrnetV2Preset parse_hrnetv2_preset(std::string_view name) {
  for (auto p : {HrnetV2Preset::W18SmallV1, HrnetV2Preset::W18SmallV2, HrnetV2Preset::W48}) {
    if (name == hrnetv2_spec(p).name) return p;
  }
  throw Error(ErrorCode::UnknownPreset, "unknown HRNetV2 preset '" + std::string(name) + "'");
}

LayerGraph build_hrnetv2(HrnetV2Preset preset) {
  const HrnetV2Spec spec = hrnetv2_spec(preset);
  const int C = spec.width;
  LayerGraph g;
  g.name = spec.name;
  g.architecture = Architecture::HRNetV2;
  g.base_width = C;
  GraphBuilder b(g);

  int x = b.stem(b.input(3));
  int ch = kStemWidth;
  for (int k = 0; k < spec.stage1_blocks; ++k) {
    x = b.bottleneck(x, ch, spec.stage1_width, "stage1.m0.b0.blk" + std::to_string(k), branch_role(1, 0));
    ch = spec.stage1_width * kBottleneckExpansion;
  }
  g.stages.push_back(StageInfo{1, {0}, 1, std::nullopt});

  std::vector<int> branches{
      b.conv_bn_relu(x, 3, 1, ch, C, "transition1.b0", "transition"),
      b.conv_bn_relu(x, 3, 2, ch, 2 * C, "transition1.b1", "transition"),
  };
  for (int s = 0; s < 3; ++s) {
    const int stage = s + 2;
    const int nb = stage;
    if (s > 0) {
      const int l = nb - 1;
      branches.push_back(b.conv_bn_relu(branches.back(), 3, 2, level_width(C, l - 1), level_width(C, l),
                                        "transition" + std::to_string(stage - 1) + ".b" + std::to_string(l),
                                        "transition"));
    }
    std::vector<int> levels(static_cast<std::size_t>(nb));
    std::vector<int> widths(static_cast<std::size_t>(nb));
    for (int l = 0; l < nb; ++l) {
      levels[static_cast<std::size_t>(l)] = l;
      widths[static_cast<std::size_t>(l)] = level_width(C, l);
    }
    const std::string role = stage_role(stage);
    for (int m = 0; m < spec.modules[static_cast<std::size_t>(s)]; ++m) {
      const std::string mname = role + ".m" + std::to_string(m);
      for (int l = 0; l < nb; ++l) {
        auto& br = branches[static_cast<std::size_t>(l)];
        for (int blk = 0; blk < spec.blocks; ++blk) {
          br = b.basic_block(br, widths[static_cast<std::size_t>(l)],
                             mname + ".b" + std::to_string(l) + ".blk" + std::to_string(blk),
                             branch_role(stage, l));
        }
      }
      branches = b.exchange(branches, levels, widths, true, mname + ".exchange", role + ".exchange");
    }
    g.stages.push_back(StageInfo{stage, levels, spec.modules[static_cast<std::size_t>(s)], std::nullopt});
  }

  std::vector<int> parts{branches[0]};
  for (int l = 1; l < 4; ++l) {
    parts.push_back(b.upsample(branches[static_cast<std::size_t>(l)], 1 << l, true,
                               "head.l" + std::to_string(l) + ".resize", "head"));
  }
  const int head_ch = 15 * C;
  const int cat = b.concat(parts, "head.concat", "head");
  g.output_id = b.conv_bn_relu(cat, 1, 1, head_ch, head_ch, "head.1", "head");
  g.head_channels = head_ch;
  return g;
}

LayerGraph infer_shapes(const LayerGraph& graph, const Shape4& input) {
  constexpr std::int64_t kStride = 64;
  if (input.h % kStride != 0 || input.w % kStride != 0) {
    throw Error(ErrorCode::IndivisibleInput, "input " + to_string(input) +
                                                 ": height and width must be multiples of 64");
  }
  LayerGraph out = graph;
  auto fail = [](const Node& n, const std::string& what) -> Error {
    return Error(ErrorCode::ShapeMismatch,
                 "node " + std::to_string(n.id) + " (" + n.name + "): " + what,
                 static_cast<std::size_t>(n.id));
  };
  for (auto& n : out.nodes) {
    std::vector<Shape4> ins;
    for (int id : n.inputs) {
      if (id < 0 || id >= n.id) throw fail(n, "inputs must precede the node");
      ins.push_back(*out.nodes[static_cast<std::size_t>(id)].out_shape);
    }
    Shape4 s;
    switch (n.kind()) {
      case OpKind::Input: {
        const auto& a = std::get<InputAttrs>(n.attrs);
        if (input.c != a.channels) throw fail(n, "expected " + std::to_string(a.channels) + " input channels");
        s = input;
        break;
      }
      case OpKind::Conv2D: {
        const auto& a = std::get<Conv2DAttrs>(n.attrs);
        if (ins.size() != 1 || ins[0].c != a.in_ch) {
          throw fail(n, "conv expects " + std::to_string(a.in_ch) + " input channels");
        }
        s = {ins[0].n, a.out_ch, (ins[0].h + 2 * a.pad - a.kernel) / a.stride + 1,
             (ins[0].w + 2 * a.pad - a.kernel) / a.stride + 1};
        break;
      }
      case OpKind::BatchNorm: {
        const auto& a = std::get<BatchNormAttrs>(n.attrs);
        if (ins.size() != 1 || ins[0].c != a.channels) throw fail(n, "batchnorm channel count");
        s = ins[0];
        break;
      }
      case OpKind::ReLU:
        if (ins.size() != 1) throw fail(n, "relu takes one input");
        s = ins[0];
        break;
      case OpKind::BilinearUpsample: {
        const auto& a = std::get<UpsampleAttrs>(n.attrs);
        if (ins.size() != 1) throw fail(n, "upsample takes one input");
        s = {ins[0].n, ins[0].c, ins[0].h * a.factor, ins[0].w * a.factor};
        break;
      }
      case OpKind::ChannelPool:
        if (ins.size() != 1 || ins[0].c % 2 != 0) throw fail(n, "channel pooling needs an even channel count");
        s = {ins[0].n, ins[0].c / 2, ins[0].h, ins[0].w};
        break;
      case OpKind::Concat: {
        if (ins.empty()) throw fail(n, "concat without inputs");
        s = ins[0];
        s.c = 0;
        for (const auto& i : ins) {
          if (i.n != s.n || i.h != s.h || i.w != s.w) throw fail(n, "concat inputs differ spatially");
          s.c += i.c;
        }
        break;
      }
      case OpKind::Add:
        if (ins.size() != 2 || !(ins[0] == ins[1])) throw fail(n, "add inputs differ in shape");
        s = ins[0];
        break;
    }
    n.out_shape = s;
  }
  return out;
}

}  // namespace uhrnet
