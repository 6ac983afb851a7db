#include <json.hpp>

#include "uhrnet/graph.hpp"

namespace uhrnet {

using nlohmann::json;

namespace {

json attrs_to_json(const NodeAttrs& attrs) {
  return std::visit(
      [](const auto& a) -> json {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, InputAttrs>) {
          return {{"channels", a.channels}};
        } else if constexpr (std::is_same_v<A, Conv2DAttrs>) {
          return {{"kernel", a.kernel}, {"stride", a.stride}, {"pad", a.pad},
                  {"in_ch", a.in_ch},   {"out_ch", a.out_ch}, {"bias", a.bias}};
        } else if constexpr (std::is_same_v<A, BatchNormAttrs>) {
          return {{"channels", a.channels}, {"eps", a.eps}};
        } else if constexpr (std::is_same_v<A, UpsampleAttrs>) {
          return {{"factor", a.factor}, {"align_corners", a.align_corners}};
        } else if constexpr (std::is_same_v<A, ChannelPoolAttrs>) {
          return {{"kernel", a.kernel}, {"mode", a.mode == PoolMode::Average ? "avg" : "max"}};
        } else {
          return json::object();
        }
      },
      attrs);
}

NodeAttrs attrs_from_json(std::string_view kind, const json& j) {
  if (kind == "Input") return InputAttrs{j.at("channels").get<int>()};
  if (kind == "Conv2D") {
    return Conv2DAttrs{j.at("kernel").get<int>(), j.at("stride").get<int>(), j.at("pad").get<int>(),
                       j.at("in_ch").get<int>(),  j.at("out_ch").get<int>(), j.at("bias").get<bool>()};
  }
  if (kind == "BatchNorm") return BatchNormAttrs{j.at("channels").get<int>(), j.at("eps").get<double>()};
  if (kind == "ReLU") return ReluAttrs{};
  if (kind == "BilinearUpsample") {
    return UpsampleAttrs{j.at("factor").get<int>(), j.at("align_corners").get<bool>()};
  }
  if (kind == "ChannelAvgPool") {
    const auto mode = j.at("mode").get<std::string>();
    if (mode != "avg" && mode != "max") throw Error(ErrorCode::FormatError, "unknown pool mode '" + mode + "'");
    return ChannelPoolAttrs{j.at("kernel").get<int>(), mode == "avg" ? PoolMode::Average : PoolMode::Max};
  }
  if (kind == "ConcatChannels") return ConcatAttrs{};
  if (kind == "Add") return AddAttrs{};
  throw Error(ErrorCode::FormatError, "unknown node kind '" + std::string(kind) + "'");
}

json shape_json(const std::optional<Shape4>& s) {
  if (!s) return nullptr;
  return json::array({s->n, s->c, s->h, s->w});
}

}  // namespace

std::string export_graph(const LayerGraph& g, int indent) {
  json nodes = json::array();
  for (const auto& n : g.nodes) {
    nodes.push_back({{"id", n.id},
                     {"kind", to_string(n.kind())},
                     {"attrs", attrs_to_json(n.attrs)},
                     {"inputs", n.inputs},
                     {"role", n.role},
                     {"name", n.name},
                     {"out_shape", shape_json(n.out_shape)}});
  }
  json stages = json::array();
  for (const auto& s : g.stages) {
    stages.push_back({{"index", s.index},
                      {"levels", s.levels},
                      {"hr_modules", s.hr_modules},
                      {"shortcut_from", s.shortcut_from ? json(*s.shortcut_from) : json(nullptr)}});
  }
  json fusions = json::array();
  for (const auto& f : g.fusions) {
    fusions.push_back({{"stage", f.stage},
                       {"shortcut_stage", f.shortcut_stage},
                       {"level", f.level},
                       {"width", f.width},
                       {"kind", to_string(f.kind)},
                       {"upsampled_node", f.upsampled_node},
                       {"shortcut_node", f.shortcut_node},
                       {"output_node", f.output_node}});
  }
  json doc = {{"format_version", kGraphFormatVersion},
              {"name", g.name},
              {"architecture", to_string(g.architecture)},
              {"base_width", g.base_width},
              {"head_channels", g.head_channels},
              {"nodes", std::move(nodes)},
              {"output_id", g.output_id},
              {"stages", std::move(stages)},
              {"fusions", std::move(fusions)}};
  return doc.dump(indent);
}

LayerGraph import_graph(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::FormatError, std::string("graph JSON: ") + e.what(), e.byte);
  }
  try {
    if (doc.at("format_version").get<int>() != kGraphFormatVersion) {
      throw Error(ErrorCode::FormatError, "unsupported graph format version");
    }
    LayerGraph g;
    g.name = doc.at("name").get<std::string>();
    const auto arch = doc.at("architecture").get<std::string>();
    if (arch == "uhrnet") {
      g.architecture = Architecture::UHRNet;
    } else if (arch == "hrnetv2") {
      g.architecture = Architecture::HRNetV2;
    } else {
      throw Error(ErrorCode::FormatError, "unknown architecture '" + arch + "'");
    }
    g.base_width = doc.at("base_width").get<int>();
    g.head_channels = doc.at("head_channels").get<int>();
    g.output_id = doc.at("output_id").get<int>();
    for (const auto& jn : doc.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<int>();
      if (n.id != static_cast<int>(g.nodes.size())) {
        throw Error(ErrorCode::FormatError, "node ids must be dense and ordered");
      }
      n.attrs = attrs_from_json(jn.at("kind").get<std::string>(), jn.at("attrs"));
      n.inputs = jn.at("inputs").get<std::vector<int>>();
      for (int in : n.inputs) {
        if (in < 0 || in >= n.id) throw Error(ErrorCode::FormatError, "node inputs must precede the node");
      }
      n.role = jn.at("role").get<std::string>();
      n.name = jn.at("name").get<std::string>();
      const auto& s = jn.at("out_shape");
      if (!s.is_null()) {
        const auto v = s.get<std::vector<std::int64_t>>();
        if (v.size() != 4) throw Error(ErrorCode::FormatError, "out_shape must have 4 entries");
        n.out_shape = Shape4{v[0], v[1], v[2], v[3]};
      }
      g.nodes.push_back(std::move(n));
    }
    if (g.output_id < 0 || g.output_id >= static_cast<int>(g.nodes.size())) {
      throw Error(ErrorCode::FormatError, "output_id out of range");
    }
    for (const auto& js : doc.at("stages")) {
      StageInfo s;
      s.index = js.at("index").get<int>();
      s.levels = js.at("levels").get<std::vector<int>>();
      s.hr_modules = js.at("hr_modules").get<int>();
      if (!js.at("shortcut_from").is_null()) s.shortcut_from = js.at("shortcut_from").get<int>();
      g.stages.push_back(std::move(s));
    }
    for (const auto& jf : doc.at("fusions")) {
      FusionJunction f;
      f.stage = jf.at("stage").get<int>();
      f.shortcut_stage = jf.at("shortcut_stage").get<int>();
      f.level = jf.at("level").get<int>();
      f.width = jf.at("width").get<int>();
      f.kind = jf.at("kind").get<std::string>() == "A" ? FusionKind::A : FusionKind::B;
      f.upsampled_node = jf.at("upsampled_node").get<int>();
      f.shortcut_node = jf.at("shortcut_node").get<int>();
      f.output_node = jf.at("output_node").get<int>();
      g.fusions.push_back(f);
    }
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("graph JSON: ") + e.what());
  }
}

}  // namespace uhrnet
