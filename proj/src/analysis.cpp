#include "uhrnet/analysis.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include <json.hpp>

namespace uhrnet {

std::string CostConvention::describe() const {
  std::string s = "mac_factor=" + std::to_string(mac_factor);
  auto flag = [&](const char* name, bool on) { s += std::string(" ") + name + "=" + (on ? "on" : "off"); };
  flag("bn", include_bn);
  flag("relu", include_relu);
  flag("upsample", include_upsample);
  flag("elementwise", include_elementwise);
  flag("head", include_head);
  s += unit == GigaUnit::Binary ? " unit=2^30" : " unit=1e9";
  if (include_head) s += " classes=" + std::to_string(num_classes);
  return s;
}

std::vector<CostConvention> convention_space(int num_classes) {
  std::vector<CostConvention> out;
  for (int bits = 0; bits < 128; ++bits) {
    CostConvention c;
    c.mac_factor = (bits & 1) ? 2 : 1;
    c.include_head = bits & 2;
    c.unit = (bits & 4) ? GigaUnit::Binary : GigaUnit::Decimal;
    c.include_bn = bits & 8;
    c.include_relu = bits & 16;
    c.include_upsample = bits & 32;
    c.include_elementwise = bits & 64;
    c.num_classes = num_classes;
    out.push_back(c);
  }
  return out;
}

namespace {

// Raw counts per category, independent of the convention.
struct NodeCost {
  std::int64_t macs = 0;
  std::int64_t bn = 0;
  std::int64_t relu = 0;
  std::int64_t upsample = 0;
  std::int64_t elementwise = 0;

  std::int64_t flops(const CostConvention& c) const {
    return c.mac_factor * macs + (c.include_bn ? bn : 0) + (c.include_relu ? relu : 0) +
           (c.include_upsample ? upsample : 0) + (c.include_elementwise ? elementwise : 0);
  }
  NodeCost& operator+=(const NodeCost& o) {
    macs += o.macs;
    bn += o.bn;
    relu += o.relu;
    upsample += o.upsample;
    elementwise += o.elementwise;
    return *this;
  }
};

NodeCost node_cost(const LayerGraph& g, const Node& n) {
  NodeCost c;
  const Shape4 out = *n.out_shape;
  switch (n.kind()) {
    case OpKind::Conv2D: {
      const auto& a = std::get<Conv2DAttrs>(n.attrs);
      c.macs = std::int64_t{a.kernel} * a.kernel * a.in_ch * a.out_ch * out.n * out.h * out.w;
      break;
    }
    case OpKind::BatchNorm: c.bn = 2 * out.elements(); break;
    case OpKind::ReLU: c.relu = out.elements(); break;
    case OpKind::BilinearUpsample: c.upsample = 7 * out.elements(); break;
    case OpKind::ChannelPool: c.elementwise = g.node(n.inputs.at(0)).out_shape->elements(); break;
    case OpKind::Add: c.elementwise = out.elements(); break;
    case OpKind::Input:
    case OpKind::Concat: break;
  }
  return c;
}

std::int64_t node_params(const Node& n, std::int64_t* trainable) {
  switch (n.kind()) {
    case OpKind::Conv2D: {
      const auto& a = std::get<Conv2DAttrs>(n.attrs);
      const std::int64_t p = std::int64_t{a.kernel} * a.kernel * a.in_ch * a.out_ch + (a.bias ? a.out_ch : 0);
      *trainable = p;
      return p;
    }
    case OpKind::BatchNorm: {
      const std::int64_t ch = std::get<BatchNormAttrs>(n.attrs).channels;
      *trainable = 2 * ch;
      return 4 * ch;
    }
    default: *trainable = 0; return 0;
  }
}

int level_of(const Shape4& input, const Shape4& out) {
  if (out.h <= 0 || input.h % out.h != 0) return kNoLevel;
  const auto ratio = static_cast<std::uint64_t>(input.h / out.h);
  if (!std::has_single_bit(ratio)) return kNoLevel;
  return std::countr_zero(ratio) - 2;
}

NodeCost task_head_cost(const LayerGraph& g, int num_classes) {
  const Shape4 out = g.output_shape();
  NodeCost c;
  c.macs = std::int64_t{g.head_channels} * num_classes * out.n * out.h * out.w;
  return c;
}

void require_shapes(const LayerGraph& g) {
  if (!g.shaped()) {
    throw Error(ErrorCode::ShapesMissing, "graph '" + g.name + "' has no inferred shapes; run infer_shapes first");
  }
}

CostReport build_report(const LayerGraph& g, const CostConvention& conv, bool with_flops) {
  CostReport r;
  r.graph_name = g.name;
  r.convention = conv;
  if (with_flops) r.input_shape = g.input_shape();
  std::map<std::string, std::size_t> role_index;
  auto add_row = [&](CostRow row) {
    r.total_flops += row.flops;
    r.total_params += row.params;
    r.trainable_params += row.trainable_params;
    const std::string group = role_group(row.role);
    auto [it, fresh] = role_index.try_emplace(group, r.roles.size());
    if (fresh) r.roles.push_back(RoleRollup{group, 0, 0});
    r.roles[it->second].flops += row.flops;
    r.roles[it->second].params += row.params;
    r.rows.push_back(std::move(row));
  };
  for (const auto& n : g.nodes) {
    CostRow row;
    row.node_id = n.id;
    row.name = n.name;
    row.role = n.role;
    row.kind = to_string(n.kind());
    row.params = node_params(n, &row.trainable_params);
    if (with_flops) {
      row.flops = node_cost(g, n).flops(conv);
      row.level = level_of(*r.input_shape, *n.out_shape);
    }
    add_row(std::move(row));
  }
  if (conv.include_head) {
    CostRow row;
    row.name = "task_head.classifier";
    row.role = "task_head";
    row.kind = "Conv2D";
    row.level = 0;
    row.params = std::int64_t{g.head_channels} * conv.num_classes + conv.num_classes;
    row.trainable_params = row.params;
    if (with_flops) row.flops = task_head_cost(g, conv.num_classes).flops(conv);
    add_row(std::move(row));
  }
  return r;
}

}  // namespace

std::array<std::int64_t, 5> CostReport::flops_by_level() const {
  std::array<std::int64_t, 5> out{};
  for (const auto& row : rows) {
    if (row.level >= 0 && row.level <= 4) out[static_cast<std::size_t>(row.level)] += row.flops;
  }
  return out;
}

double CostReport::flops_fraction_from_level(int level) const {
  if (total_flops == 0) return 0.0;
  std::int64_t sum = 0;
  for (const auto& row : rows) {
    if (row.level != kNoLevel && row.level >= level) sum += row.flops;
  }
  return static_cast<double>(sum) / static_cast<double>(total_flops);
}

CostReport count_flops(const LayerGraph& graph, const CostConvention& conv) {
  require_shapes(graph);
  return build_report(graph, conv, true);
}

CostReport count_params(const LayerGraph& graph, const CostConvention& conv) {
  return build_report(graph, conv, false);
}

CalibrationResult calibrate_convention(const std::vector<Baseline>& baselines, int num_classes) {
  if (baselines.empty()) throw Error(ErrorCode::InvalidConfig, "calibration needs at least one baseline");
  struct Totals {
    NodeCost body;
    NodeCost head;
  };
  std::vector<Totals> totals;
  for (const auto& b : baselines) {
    require_shapes(*b.graph);
    Totals t;
    for (const auto& n : b.graph->nodes) t.body += node_cost(*b.graph, n);
    t.head = task_head_cost(*b.graph, num_classes);
    totals.push_back(t);
  }

  CalibrationResult best;
  best.max_abs_error = std::numeric_limits<double>::infinity();
  for (const auto& conv : convention_space(num_classes)) {
    CalibrationResult cand;
    cand.convention = conv;
    for (std::size_t i = 0; i < baselines.size(); ++i) {
      std::int64_t flops = totals[i].body.flops(conv);
      if (conv.include_head) flops += totals[i].head.flops(conv);
      const double g = static_cast<double>(flops) / conv.giga();
      const double target = baselines[i].target_gflops;
      const double rel = (g - target) / target;
      cand.residuals.push_back({baselines[i].graph->name, target, g, rel});
      cand.max_abs_error = std::max(cand.max_abs_error, std::abs(rel));
    }
    if (cand.max_abs_error < best.max_abs_error) best = std::move(cand);
  }
  best.no_convention_within_tolerance = best.max_abs_error > kCalibrationTolerance;
  return best;
}

CostDiff compare(const CostReport& a, const CostReport& b) {
  if (!(a.convention == b.convention)) {
    throw Error(ErrorCode::ConventionMismatch, "reports use different conventions: [" + a.convention.describe() +
                                                   "] vs [" + b.convention.describe() + "]");
  }
  CostDiff d;
  d.a_name = a.graph_name;
  d.b_name = b.graph_name;
  d.convention = a.convention;
  std::map<std::string, std::size_t> index;
  auto slot = [&](const std::string& role) -> DiffRow& {
    auto [it, fresh] = index.try_emplace(role, d.rows.size());
    if (fresh) d.rows.push_back(DiffRow{role, 0, 0});
    return d.rows[it->second];
  };
  for (const auto& r : a.roles) slot(r.role).a = r.flops;
  for (const auto& r : b.roles) slot(r.role).b = r.flops;
  d.total = DiffRow{"total", a.total_flops, b.total_flops};
  return d;
}

namespace {

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool right = false) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

nlohmann::json convention_json(const CostConvention& c) {
  return {{"mac_factor", c.mac_factor},
          {"include_bn", c.include_bn},
          {"include_relu", c.include_relu},
          {"include_upsample", c.include_upsample},
          {"include_elementwise", c.include_elementwise},
          {"include_head", c.include_head},
          {"unit", c.unit == GigaUnit::Binary ? "binary" : "decimal"},
          {"num_classes", c.num_classes}};
}

}  // namespace

std::string render_text(const CostReport& r, bool per_node) {
  const double giga = r.convention.giga();
  std::string out = "model       " + r.graph_name + "\n";
  if (r.input_shape) out += "input       " + to_string(*r.input_shape) + "\n";
  out += "convention  " + r.convention.describe() + "\n\n";
  out += pad("role", 14) + pad("GFLOPs", 12, true) + pad("params", 14, true) + pad("share", 9, true) + "\n";
  for (const auto& role : r.roles) {
    const double share = r.total_flops ? 100.0 * static_cast<double>(role.flops) / static_cast<double>(r.total_flops) : 0.0;
    out += pad(role.role, 14) + pad(fmt("%.3f", static_cast<double>(role.flops) / giga), 12, true) +
           pad(std::to_string(role.params), 14, true) + pad(fmt("%.1f%%", share), 9, true) + "\n";
  }
  out += pad("total", 14) + pad(fmt("%.1f", r.gflops()), 12, true) + pad(std::to_string(r.total_params), 14, true) +
         "\n";
  out += "params      " + fmt("%.2fM", r.params_millions()) + " stored, " +
         fmt("%.2fM", static_cast<double>(r.trainable_params) / 1e6) + " trainable\n";
  if (r.input_shape) {
    const auto levels = r.flops_by_level();
    out += "by level   ";
    for (std::size_t l = 0; l < levels.size(); ++l) {
      out += " L" + std::to_string(l) + "=" + fmt("%.2f", static_cast<double>(levels[l]) / giga);
    }
    out += "\n";
  }
  if (per_node) {
    out += "\n";
    for (const auto& row : r.rows) {
      out += pad(std::to_string(row.node_id), 6, true) + "  " + pad(row.kind, 17) + pad(row.name, 44) +
             pad(std::to_string(row.flops), 16, true) + pad(std::to_string(row.params), 10, true) + "\n";
    }
  }
  return out;
}

std::string render_text(const CostDiff& d) {
  const double giga = d.convention.giga();
  std::string out = "a           " + d.a_name + "\nb           " + d.b_name + "\nconvention  " +
                    d.convention.describe() + "\n\n";
  out += pad("role", 14) + pad("a GFLOPs", 12, true) + pad("b GFLOPs", 12, true) + pad("delta", 12, true) +
         pad("rel", 10, true) + "\n";
  auto line = [&](const DiffRow& row) {
    const std::string rel = row.a == 0 ? (row.b == 0 ? "0.0%" : "new") : fmt("%+.1f%%", 100.0 * row.relative());
    out += pad(row.role, 14) + pad(fmt("%.3f", static_cast<double>(row.a) / giga), 12, true) +
           pad(fmt("%.3f", static_cast<double>(row.b) / giga), 12, true) +
           pad(fmt("%+.3f", static_cast<double>(row.delta()) / giga), 12, true) + pad(rel, 10, true) + "\n";
  };
  for (const auto& row : d.rows) line(row);
  line(d.total);
  out += "\nheadline    " + fmt("%+.1f", d.headline_gflops()) + " GFLOPs (b - a)\n";
  return out;
}

std::string report_json(const CostReport& r, bool per_node, int indent) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto& role : r.roles) rows.push_back({{"role", role.role}, {"flops", role.flops}, {"params", role.params}});
  json doc = {{"model", r.graph_name},
              {"convention", convention_json(r.convention)},
              {"input_shape", r.input_shape ? json::array({r.input_shape->n, r.input_shape->c, r.input_shape->h,
                                                           r.input_shape->w})
                                            : json(nullptr)},
              {"rows", std::move(rows)},
              {"total",
               {{"flops", r.total_flops},
                {"gflops", r.gflops()},
                {"params", r.total_params},
                {"trainable_params", r.trainable_params}}}};
  if (r.input_shape) {
    doc["flops_by_level"] = r.flops_by_level();
    doc["fraction_level_ge2"] = r.flops_fraction_from_level(2);
  }
  if (per_node) {
    json nodes = json::array();
    for (const auto& row : r.rows) {
      nodes.push_back({{"id", row.node_id},
                       {"name", row.name},
                       {"role", row.role},
                       {"kind", row.kind},
                       {"level", row.level == kNoLevel ? json(nullptr) : json(row.level)},
                       {"flops", row.flops},
                       {"params", row.params}});
    }
    doc["nodes"] = std::move(nodes);
  }
  return doc.dump(indent);
}

std::string diff_json(const CostDiff& d, int indent) {
  using nlohmann::json;
  json rows = json::array();
  for (const auto& row : d.rows) {
    rows.push_back({{"role", row.role}, {"a_flops", row.a}, {"b_flops", row.b}, {"delta", row.delta()},
                    {"relative", row.relative()}});
  }
  json doc = {{"a", d.a_name},
              {"b", d.b_name},
              {"convention", convention_json(d.convention)},
              {"rows", std::move(rows)},
              {"total", {{"a_flops", d.total.a}, {"b_flops", d.total.b}, {"delta", d.total.delta()}}},
              {"headline_gflops", d.headline_gflops()}};
  return doc.dump(indent);
}

}  // namespace uhrnet
