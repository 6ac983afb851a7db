#include "uhrnet/presets.hpp"

namespace uhrnet {

namespace {

Preset uhrnet_preset(std::string name, std::string structure, bool small, FusionKind fusion, double gflops) {
  Preset p;
  p.name = std::move(name);
  p.architecture = Architecture::UHRNet;
  p.structure = std::move(structure);
  p.config.base_width = small ? 18 : 48;
  p.config.blocks_per_branch = small ? 2 : 4;
  p.config.small_variant = small;
  p.config.fusion = fusion;
  p.published_gflops = gflops;
  return p;
}

Preset hrnet_preset(HrnetV2Preset which, std::optional<double> gflops) {
  Preset p;
  p.name = to_string(which);
  p.architecture = Architecture::HRNetV2;
  p.hrnetv2 = which;
  p.config.base_width = which == HrnetV2Preset::W18SmallV1 ? 16 : which == HrnetV2Preset::W48 ? 48 : 18;
  p.config.blocks_per_branch = which == HrnetV2Preset::W48 ? 4 : 2;
  p.config.small_variant = which != HrnetV2Preset::W48;
  p.published_gflops = gflops;
  return p;
}

std::vector<Preset> make_registry() {
  using F = FusionKind;
  std::vector<Preset> r;
  // Module counts of stages 2-8 for the full model are 1, 5, 2, 2, 1, 1, 1.
  r.push_back(uhrnet_preset("uhrnet-w48", "1v1v5v2v2^1^1^1^1", false, F::B, 698.6));
  r.push_back(uhrnet_preset("uhrnet-w18-small", "1v1v2v2v2^1^1^1^1", true, F::B, 73.1));
  r.push_back(uhrnet_preset("uhrnet-w18-small-va", "1v1v3v2=", true, F::B, 58.6));
  r.push_back(uhrnet_preset("uhrnet-w18-small-vb", "1v1v3v5=", true, F::B, 67.7));
  r.push_back(uhrnet_preset("uhrnet-w18-small-vc", "1v1v3v7=", true, F::B, 73.8));
  r.push_back(uhrnet_preset("uhrnet-w18-small-vd", "1v1v2v5^1=", true, F::B, 67.7));
  r.push_back(uhrnet_preset("uhrnet-w18-small-ve", "1v1v2v5^1^1^1", true, F::B, 72.2));
  r.push_back(uhrnet_preset("uhrnet-w18-small-vf", "1v1v4v1v1^1^1^1^1", true, F::B, 73.1));
  r.push_back(uhrnet_preset("uhrnet-w18-small-vg", "1v1v2v1v1^1^2^2^1", true, F::B, 73.1));
  r.push_back(uhrnet_preset("uhrnet-w18-small-vh", "1v1v2v2v2^1^1^1^1", true, F::A, 73.1));
  r.push_back(hrnet_preset(HrnetV2Preset::W18SmallV1, std::nullopt));
  r.push_back(hrnet_preset(HrnetV2Preset::W18SmallV2, 71.6));
  r.push_back(hrnet_preset(HrnetV2Preset::W48, 696.2));
  return r;
}

}  // namespace

const std::vector<Preset>& preset_registry() {
  static const std::vector<Preset> registry = make_registry();
  return registry;
}

const Preset& find_preset(std::string_view name) {
  for (const auto& p : preset_registry()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const auto& p : preset_registry()) known += (known.empty() ? "" : ", ") + p.name;
  throw Error(ErrorCode::UnknownPreset, "unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

LayerGraph build_preset(const Preset& p) {
  if (p.hrnetv2) return build_hrnetv2(*p.hrnetv2);
  return build_uhrnet(parse_structure(p.structure), p.config, p.name);
}

LayerGraph build_preset(std::string_view name) { return build_preset(find_preset(name)); }

NetworkConfig micro_config() {
  NetworkConfig c;
  c.base_width = 4;
  c.blocks_per_branch = 2;
  c.small_variant = true;
  return c;
}

LayerGraph build_micro() {
  return build_uhrnet(parse_structure(find_preset("uhrnet-w18-small").structure), micro_config(), "uhrnet-micro");
}

const std::vector<CalibrationTarget>& calibration_targets() {
  // Published GFLOPs of the two HRNetV2 baselines at 1024x2048.
  static const std::vector<CalibrationTarget> targets{
      {"hrnetv2-w18-small-v2", 71.6},
      {"hrnetv2-w48", 696.2},
  };
  return targets;
}

CalibrationResult calibrate_default(const Shape4& input) {
  std::vector<LayerGraph> graphs;
  for (const auto& t : calibration_targets()) graphs.push_back(infer_shapes(build_preset(t.preset), input));
  // Targets refer to the reference resolution; rescale for other inputs.
  const double scale = static_cast<double>(input.n * input.h * input.w) /
                       static_cast<double>(kReferenceInput.n * kReferenceInput.h * kReferenceInput.w);
  std::vector<Baseline> baselines;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    baselines.push_back({&graphs[i], calibration_targets()[i].gflops * scale});
  }
  return calibrate_convention(baselines);
}

}  // namespace uhrnet
