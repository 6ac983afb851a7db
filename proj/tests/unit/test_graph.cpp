#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "uhrnet/graph.hpp"
#include "uhrnet/presets.hpp"

using namespace uhrnet;

namespace {

// Walks the transitions: a down step keeps the lowest-resolution level of the
// previous stage and adds the next one, an up step keeps the highest.
std::vector<std::set<int>> walk_levels(const StageSequence& s) {
  std::vector<std::set<int>> out{{0}};
  for (std::size_t i = 0; i < s.transitions.size(); ++i) {
    const auto& prev = out.back();
    if (s.transitions[i] == Direction::Down) {
      const int hi = *prev.rbegin();
      out.push_back({hi, hi + 1});
    } else {
      const int lo = *prev.begin();
      out.push_back({lo - 1, lo});
    }
  }
  if (s.stage_count() > 1 && !s.terminal_two_branch) out.back() = {0};
  return out;
}

ErrorCode error_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return ErrorCode::EmptyInput;
}

const Node* find_node(const LayerGraph& g, const std::string& name) {
  for (const auto& n : g.nodes)
    if (n.name == name) return &n;
  return nullptr;
}

}  // namespace

TEST_CASE("stage levels of the small network") {
  const auto g = build_preset("uhrnet-w18-small");
  const std::vector<std::vector<int>> expected = {{0}, {0, 1}, {1, 2}, {2, 3}, {3, 4}, {2, 3}, {1, 2}, {0, 1}, {0}};
  REQUIRE(g.stages.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) CHECK(g.stages[i].levels == expected[i]);
}

TEST_CASE("stage levels agree with the walk oracle for every preset") {
  for (const auto& p : preset_registry()) {
    if (p.architecture != Architecture::UHRNet) continue;
    CAPTURE(p.name);
    const auto seq = parse_structure(p.structure);
    const auto oracle = walk_levels(seq);
    const auto got = stage_levels(seq);
    REQUIRE(got.size() == oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(std::set<int>(got[i].begin(), got[i].end()) == oracle[i]);
      if (i > 0) {
        std::vector<int> common;
        std::set_intersection(got[i - 1].begin(), got[i - 1].end(), got[i].begin(), got[i].end(),
                              std::back_inserter(common));
        CHECK(common.size() == 1);
      }
    }
  }
}

TEST_CASE("head channel arithmetic") {
  for (const auto& p : preset_registry()) {
    CAPTURE(p.name);
    const auto g = build_preset(p);
    const int c = g.base_width;
    int expected;
    if (p.architecture == Architecture::HRNetV2) {
      expected = c + 2 * c + 4 * c + 8 * c;
    } else {
      int max_level = 0;
      for (const auto& s : g.stages) max_level = std::max(max_level, *std::max_element(s.levels.begin(), s.levels.end()));
      // Five-level networks pool every stream by 2 before the concat.
      expected = 0;
      for (int l = 0; l <= max_level; ++l) expected += (c << l) / (max_level == 4 ? 2 : 1);
    }
    CHECK(g.head_channels == expected);
  }
  CHECK(build_preset("uhrnet-w18-small").head_channels == 279);
  CHECK(build_preset("uhrnet-w48").head_channels == 744);
  CHECK(build_preset("hrnetv2-w48").head_channels == 720);
}

TEST_CASE("full network module count") {
  const auto g = build_preset("uhrnet-w48");
  int modules = 0;
  for (const auto& s : g.stages)
    if (s.index >= 2 && s.index <= 8) modules += s.hr_modules;
  CHECK(modules == 13);
}

TEST_CASE("fusion junctions") {
  for (const auto& name : {"uhrnet-w18-small", "uhrnet-w48", "uhrnet-w18-small-vf", "uhrnet-w18-small-vg"}) {
    CAPTURE(name);
    const auto g = build_preset(name);
    REQUIRE(g.fusions.size() == 3);
    const int pairs[3][2] = {{6, 4}, {7, 3}, {8, 2}};
    for (int i = 0; i < 3; ++i) {
      const auto& f = g.fusions[static_cast<std::size_t>(i)];
      CHECK(f.kind == FusionKind::B);
      CHECK(f.stage == pairs[i][0]);
      CHECK(f.shortcut_stage == pairs[i][1]);
      CHECK(f.width == (g.base_width << f.level));
      CHECK(g.node(f.output_node).kind() == OpKind::ReLU);
    }
  }
  const auto vh = build_preset("uhrnet-w18-small-vh");
  REQUIRE(vh.fusions.size() == 3);
  for (const auto& f : vh.fusions) {
    CHECK(f.kind == FusionKind::A);
    const auto& sum = vh.node(vh.node(f.output_node).inputs[0]);
    CHECK(sum.kind() == OpKind::Add);
  }
}

TEST_CASE("stem") {
  const auto g = build_preset("uhrnet-w18-small");
  int convs = 0;
  for (const auto& n : g.nodes) {
    if (n.role != "stem" || n.kind() != OpKind::Conv2D) continue;
    ++convs;
    const auto& a = std::get<Conv2DAttrs>(n.attrs);
    CHECK(a.stride == 2);
    CHECK(a.kernel == 3);
    CHECK(a.out_ch == 64);
  }
  CHECK(convs == 2);
}

TEST_CASE("roles") {
  const auto g = build_preset("uhrnet-w18-small");
  std::set<std::string> groups;
  for (const auto& n : g.nodes) groups.insert(role_group(n.role));
  for (const char* r : {"stem", "stage1", "stage2", "stage3", "stage4", "stage5", "stage6", "stage7", "stage8", "stage9",
                        "transition", "fusion", "head"}) {
    CHECK(groups.count(r) == 1);
  }
}

TEST_CASE("shape inference") {
  const auto g = infer_shapes(build_preset("uhrnet-w18-small"), Shape4{1, 3, 256, 256});
  CHECK(g.output_shape() == Shape4{1, 279, 64, 64});
  CHECK(g.shaped());

  const auto big = infer_shapes(build_preset("uhrnet-w18-small"), kReferenceInput);
  const int c = 18;
  bool saw3 = false, saw4 = false;
  for (const auto& n : big.nodes) {
    if (n.role == "stage5.branch3") {
      CHECK(*n.out_shape == Shape4{1, 8 * c, 32, 64});
      saw3 = true;
    }
    if (n.role == "stage5.branch4") {
      CHECK(*n.out_shape == Shape4{1, 16 * c, 16, 32});
      saw4 = true;
    }
  }
  CHECK(saw3);
  CHECK(saw4);

  for (const auto& p : preset_registry()) {
    CAPTURE(p.name);
    const auto s = infer_shapes(build_preset(p), Shape4{2, 3, 128, 192});
    CHECK(s.output_shape() == Shape4{2, s.head_channels, 32, 48});
  }

  CHECK(error_of([] { infer_shapes(build_preset("uhrnet-w18-small"), Shape4{1, 3, 250, 250}); }) ==
        ErrorCode::IndivisibleInput);
  CHECK(error_of([] { infer_shapes(build_preset("uhrnet-w18-small"), Shape4{1, 4, 64, 64}); }) ==
        ErrorCode::ShapeMismatch);
  CHECK(error_of([] { build_preset("uhrnet-w18-small").output_shape(); }) == ErrorCode::ShapesMissing);
}

TEST_CASE("shape parsing") {
  CHECK(parse_shape("1x3x1024x2048") == kReferenceInput);
  CHECK(to_string(kReferenceInput) == "1x3x1024x2048");
  for (const char* bad : {"", "1x3x64", "1x3x64x64x1", "ax3x64x64", "1x3x-64x64", "1x3x64x"}) {
    CAPTURE(bad);
    CHECK(error_of([&] { parse_shape(bad); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("builder errors") {
  const auto seq = parse_structure("1v1v2v2v2^1^1^1^1");
  NetworkConfig odd;
  odd.base_width = 17;
  CHECK(error_of([&] { build_uhrnet(seq, odd); }) == ErrorCode::InvalidConfig);
  NetworkConfig narrow;
  narrow.max_width = 64;
  CHECK(error_of([&] { build_uhrnet(seq, narrow); }) == ErrorCode::WidthOverflow);
  CHECK(error_of([] { build_uhrnet(parse_structure("1v1v2"), NetworkConfig{}); }) == ErrorCode::InvalidSequence);
  CHECK(error_of([] { build_preset("uhrnet-w99"); }) == ErrorCode::UnknownPreset);
  CHECK(error_of([] { parse_hrnetv2_preset("hrnetv2-w32"); }) == ErrorCode::UnknownPreset);
}

TEST_CASE("graph is deterministic and names are unique") {
  const auto a = build_preset("uhrnet-w18-small");
  const auto b = build_preset("uhrnet-w18-small");
  CHECK(a == b);
  CHECK(a.nodes.size() == b.nodes.size());
  std::set<std::string> names;
  for (const auto& n : a.nodes) {
    CHECK(names.insert(n.name).second);
    for (int in : n.inputs) CHECK(in < n.id);
  }
  CHECK(a.output_id == static_cast<int>(a.nodes.size()) - 1);
}

TEST_CASE("export and import round-trip") {
  for (const auto& p : preset_registry()) {
    CAPTURE(p.name);
    const auto shaped = infer_shapes(build_preset(p), Shape4{1, 3, 128, 128});
    CHECK(import_graph(export_graph(shaped)) == shaped);
    const auto bare = build_preset(p);
    CHECK(import_graph(export_graph(bare, -1)) == bare);
  }
  const auto micro = build_micro();
  CHECK(import_graph(export_graph(micro)) == micro);
}

TEST_CASE("export document layout") {
  const auto g = infer_shapes(build_preset("uhrnet-w18-small"), Shape4{1, 3, 64, 64});
  const auto doc = export_graph(g);
  for (const char* key : {"\"format_version\"", "\"nodes\"", "\"output_id\"", "\"out_shape\"", "\"role\"", "\"attrs\"",
                          "\"fusions\"", "\"stages\""}) {
    CHECK(doc.find(key) != std::string::npos);
  }
}

TEST_CASE("import errors") {
  for (const char* bad : {"", "{", "[]", "{\"format_version\": 99}", "{\"format_version\": 1, \"nodes\": 3}"}) {
    CAPTURE(bad);
    CHECK(error_of([&] { import_graph(bad); }) == ErrorCode::FormatError);
  }
  auto text = export_graph(build_preset("uhrnet-w18-small-va"));
  const auto pos = text.find("\"Conv2D\"");
  text.replace(pos, 8, "\"Conv3D\"");
  CHECK(error_of([&] { import_graph(text); }) == ErrorCode::FormatError);
}

TEST_CASE("hrnetv2 baselines") {
  const auto g = build_preset("hrnetv2-w18-small-v2");
  CHECK(g.architecture == Architecture::HRNetV2);
  CHECK(g.fusions.empty());
  CHECK(find_node(g, "head.concat") != nullptr);
  const auto s = infer_shapes(g, Shape4{1, 3, 64, 64});
  CHECK(s.output_shape() == Shape4{1, 270, 16, 16});
}
