#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "uhrnet/analysis.hpp"
#include "uhrnet/arch_dsl.hpp"
#include "uhrnet/error.hpp"
#include "uhrnet/graph.hpp"
#include "uhrnet/presets.hpp"
#include "uhrnet/runtime.hpp"
#include "uhrnet/tensor_io.hpp"

using namespace uhrnet;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitVerification = 5;

bool g_json = false;

void emit(const std::string& text) {
  std::fwrite(text.data(), 1, text.size(), stdout);
  if (!text.empty() && text.back() != '\n') std::fputc('\n', stdout);
}

void emit(const json& doc) { emit(doc.dump(2)); }

// Which network a command acts on. Exactly one of preset, structure or micro.
struct ModelChoice {
  std::string preset;
  std::string structure;
  bool micro = false;
  int width = 18;
  int blocks = 2;
  bool full_stage1 = false;

  void add_to(CLI::App* cmd, bool allow_structure) {
    auto* p = cmd->add_option("--preset", preset, "Registered model name");
    auto* m = cmd->add_flag("--micro", micro, "Desk-scale gradient-check configuration");
    p->excludes(m);
    if (allow_structure) {
      auto* s = cmd->add_option("--structure", structure, "Stage-sequence code, e.g. 1v1v2v2v2^1^1^1^1");
      s->excludes(p)->excludes(m);
      cmd->add_option("--width", width, "Base width C for --structure")->needs(s);
      cmd->add_option("--blocks", blocks, "Residual blocks per branch for --structure")->needs(s);
      cmd->add_flag("--full-stage1", full_stage1, "Four bottlenecks in stage 1 for --structure")->needs(s);
    }
  }

  LayerGraph build() const {
    if (micro) return build_micro();
    if (!structure.empty()) {
      NetworkConfig cfg;
      cfg.base_width = width;
      cfg.blocks_per_branch = blocks;
      cfg.small_variant = !full_stage1;
      return build_uhrnet(parse_structure(structure), cfg);
    }
    if (preset.empty()) throw CLI::ValidationError("a model is required: --preset, --structure or --micro");
    return build_preset(preset);
  }
};

// The fitted convention does not depend on the input size, so it is always
// fitted at the reference input the published totals refer to.
CostConvention parse_convention(const std::string& spec) {
  if (spec == "auto") return calibrate_default(kReferenceInput).convention;
  CostConvention c;
  if (spec == "none") return c;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok == "mac2") c.mac_factor = 2;
    else if (tok == "bn") c.include_bn = true;
    else if (tok == "relu") c.include_relu = true;
    else if (tok == "upsample") c.include_upsample = true;
    else if (tok == "head") c.include_head = true;
    else if (tok == "elementwise") c.include_elementwise = true;
    else if (tok == "binary") c.unit = GigaUnit::Binary;
    else if (tok == "decimal") c.unit = GigaUnit::Decimal;
    else throw CLI::ValidationError("--convention", "unknown flag '" + tok + "'");
  }
  return c;
}

json stage_table_json(const StageSequence& seq) {
  const auto levels = stage_levels(seq);
  const auto res = seq.resolution_indices();
  json rows = json::array();
  for (std::size_t i = 0; i < seq.stage_count(); ++i) {
    rows.push_back({{"stage", i + 1},
                    {"hr_modules", seq.stages[i]},
                    {"entered_by", i == 0 ? "-" : (seq.transitions[i - 1] == Direction::Down ? "down" : "up")},
                    {"resolution_index", res[i]},
                    {"levels", levels[i]}});
  }
  return {{"structure", format_structure(seq)},
          {"stages", std::move(rows)},
          {"terminal_two_branch", seq.terminal_two_branch}};
}

int cmd_parse(const std::string& code) {
  const StageSequence seq = parse_structure(code);
  const json doc = stage_table_json(seq);
  if (g_json) {
    emit(doc);
    return 0;
  }
  std::string out = "structure " + format_structure(seq) + "\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-6s %-8s %-6s %-11s %s\n", "stage", "modules", "entry", "resolution", "levels");
  out += buf;
  for (const auto& r : doc["stages"]) {
    std::string lv;
    for (const auto& l : r["levels"]) lv += (lv.empty() ? "" : ",") + std::to_string(l.get<int>());
    std::snprintf(buf, sizeof buf, "%-6d %-8d %-6s %-11d {%s}\n", r["stage"].get<int>(), r["hr_modules"].get<int>(),
                  r["entered_by"].get<std::string>().c_str(), r["resolution_index"].get<int>(), lv.c_str());
    out += buf;
  }
  emit(out);
  return 0;
}

int cmd_summarize(const ModelChoice& model, const std::string& input, const std::string& convention,
                  bool per_node) {
  const Shape4 shape = parse_shape(input);
  const LayerGraph g = infer_shapes(model.build(), shape);
  const CostReport report = count_flops(g, parse_convention(convention));
  emit(g_json ? report_json(report, per_node) : render_text(report, per_node));
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b, const std::string& input, const std::string& convention) {
  const Shape4 shape = parse_shape(input);
  const CostConvention conv = parse_convention(convention);
  const CostReport ra = count_flops(infer_shapes(build_preset(a), shape), conv);
  const CostReport rb = count_flops(infer_shapes(build_preset(b), shape), conv);
  const CostDiff diff = compare(ra, rb);
  emit(g_json ? diff_json(diff) : render_text(diff));
  return 0;
}

int cmd_init(const ModelChoice& model, std::uint64_t seed, const std::string& out) {
  const LayerGraph g = model.build();
  const WeightStore w = init_weights(g, seed);
  save_weights(w, out);
  std::size_t values = 0;
  for (const auto& e : w.entries()) values += e.tensor.size();
  if (g_json) {
    emit(json{{"model", g.name}, {"seed", seed}, {"tensors", w.size()}, {"values", values}, {"out", out}});
  } else {
    emit("wrote " + std::to_string(w.size()) + " tensors (" + std::to_string(values) + " values) for " + g.name +
         " to " + out);
  }
  return 0;
}

int cmd_sample(const std::string& shape_text, std::uint64_t seed, const std::string& out) {
  const Shape4 shape = parse_shape(shape_text);
  save_tensor(out, random_input(shape, seed));
  if (g_json) {
    emit(json{{"shape", to_string(shape)}, {"seed", seed}, {"out", out}});
  } else {
    emit("wrote " + to_string(shape) + " tensor to " + out);
  }
  return 0;
}

int cmd_forward(const ModelChoice& model, std::uint64_t seed, const std::string& weights_path,
                const std::string& in_path, const std::string& out_path) {
  const LayerGraph g = model.build();
  const Tensor x = load_tensor(in_path);
  const WeightStore w = weights_path.empty() ? init_weights(g, seed) : load_weights(weights_path);
  const Tensor y = forward(g, w, x);
  save_tensor(out_path, y);
  std::string dims;
  for (auto d : y.dims()) dims += (dims.empty() ? "" : "x") + std::to_string(d);
  if (g_json) {
    emit(json{{"model", g.name}, {"output_shape", y.dims()}, {"out", out_path}});
  } else {
    emit(g.name + ": output " + dims + " written to " + out_path);
  }
  return 0;
}

int cmd_gradcheck(const ModelChoice& model, std::uint64_t seed, const GradCheckOptions& base,
                  const std::string& input) {
  const LayerGraph g = model.build();
  const Shape4 shape = input.empty() ? kMicroInput : parse_shape(input);
  const WeightStore w = init_weights(g, seed);
  GradCheckOptions opt = base;
  opt.seed = seed;
  const GradCheckReport r = gradcheck(g, w, random_input(shape, seed), opt);
  emit(g_json ? report_json(r) : render_text(r));
  return r.passed ? 0 : kExitVerification;
}

int cmd_export(const ModelChoice& model, const std::string& input, const std::string& out) {
  LayerGraph g = model.build();
  if (!input.empty()) g = infer_shapes(g, parse_shape(input));
  const std::string text = export_graph(g);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + out + " for writing");
  f << text << '\n';
  if (!f) throw Error(ErrorCode::IoError, "write failed: " + out);
  if (g_json) {
    emit(json{{"model", g.name}, {"nodes", g.nodes.size()}, {"shaped", g.shaped()}, {"out", out}});
  } else {
    emit("exported " + g.name + " (" + std::to_string(g.nodes.size()) + " nodes) to " + out);
  }
  return 0;
}

int report_error(const Error& e) {
  if (g_json) {
    json doc = {{"error", to_string(e.code())}, {"message", e.what()}};
    doc["location"] = e.location() ? json(*e.location()) : json(nullptr);
    emit(doc);
  } else {
    std::fprintf(stderr, "error [%s]: %s\n", to_string(e.code()), e.what());
  }
  return exit_code_for(e.code());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"U-HRNet architecture toolkit: structure parsing, cost analysis, execution and gradient checks"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--json", g_json, "Machine-readable output");
  app.set_version_flag("--version", "uhrnet 1.0");

  std::uint64_t seed = 0;
  std::string sum_input, cmp_input, gc_input, exp_input, convention = "auto", out, code;

  auto* parse = app.add_subcommand("parse", "Parse a stage-sequence code and print the stage table");
  parse->add_option("code", code, "Structure code")->required();

  ModelChoice sum_model;
  bool per_node = false;
  auto* summarize = app.add_subcommand("summarize", "FLOPs and parameter report");
  sum_model.add_to(summarize, true);
  summarize->add_option("--input", sum_input, "Input shape NxCxHxW")->default_val("1x3x1024x2048");
  summarize->add_option("--convention", convention,
                        "auto, none, or a comma list of mac2,bn,relu,upsample,head,elementwise,binary");
  summarize->add_flag("--per-node", per_node, "Include one row per node");

  std::string a, b;
  auto* cmp = app.add_subcommand("compare", "Per-role cost difference b - a");
  cmp->add_option("--a", a, "Baseline preset")->required();
  cmp->add_option("--b", b, "Compared preset")->required();
  cmp->add_option("--input", cmp_input, "Input shape NxCxHxW")->default_val("1x3x1024x2048");
  cmp->add_option("--convention", convention, "Same values as for summarize");

  ModelChoice init_model;
  auto* init = app.add_subcommand("init", "Write seeded initial weights");
  init_model.add_to(init, false);
  init->add_option("--seed", seed, "Random seed");
  init->add_option("--out", out, "Weight file (.hrws)")->required();

  std::string shape_text;
  auto* sample = app.add_subcommand("sample", "Write a seeded standard-normal input tensor");
  sample->add_option("--shape", shape_text, "NxCxHxW")->required();
  sample->add_option("--seed", seed, "Random seed");
  sample->add_option("--out", out, "Tensor file (.hrtf)")->required();

  ModelChoice fwd_model;
  std::string weights, in_file, out_file;
  auto* fwd = app.add_subcommand("forward", "Run inference on an HRTF tensor");
  fwd_model.add_to(fwd, false);
  fwd->add_option("--seed", seed, "Seed for weights when --weights is not given");
  fwd->add_option("--weights", weights, "Weight file (.hrws)");
  fwd->add_option("--input-file", in_file, "Input tensor (.hrtf)")->required();
  fwd->add_option("--out-file", out_file, "Output tensor (.hrtf)")->required();

  ModelChoice gc_model;
  GradCheckOptions gc;
  auto* gcheck = app.add_subcommand("gradcheck", "Compare analytic and central-difference gradients");
  gc_model.add_to(gcheck, false);
  gcheck->add_option("--seed", seed, "Seed for weights, input and coordinate sampling");
  gcheck->add_option("--eps", gc.eps, "Central-difference step");
  gcheck->add_option("--tol", gc.tolerance, "Maximum relative error");
  gcheck->add_option("--samples", gc.samples, "Coordinates per parameter tensor");
  gcheck->add_option("--input", gc_input, "Input shape NxCxHxW (default 1x3x64x64)");
  gcheck->add_flag("--adaptive-step", gc.adaptive_step,
                   "Diagnostic: shrink the step where a ReLU kink lies inside the stencil");

  ModelChoice exp_model;
  auto* exp = app.add_subcommand("export", "Write the layer graph as JSON");
  exp_model.add_to(exp, true);
  exp->add_option("--input", exp_input, "Input shape for shape annotation");
  exp->add_option("--out", out, "Graph file (.json)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*parse) return cmd_parse(code);
    if (*summarize) return cmd_summarize(sum_model, sum_input, convention, per_node);
    if (*cmp) return cmd_compare(a, b, cmp_input, convention);
    if (*init) return cmd_init(init_model, seed, out);
    if (*sample) return cmd_sample(shape_text, seed, out);
    if (*fwd) return cmd_forward(fwd_model, seed, weights, in_file, out_file);
    if (*gcheck) {
      if (gc_model.preset.empty()) gc_model.micro = true;
      return cmd_gradcheck(gc_model, seed, gc, gc_input);
    }
    if (*exp) return cmd_export(exp_model, exp_input, out);
  } catch (const Error& e) {
    return report_error(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
