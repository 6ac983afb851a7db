#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "uhrnet/presets.hpp"
#include "uhrnet/runtime.hpp"

using namespace uhrnet;

namespace {

ErrorCode error_of(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error");
  return ErrorCode::EmptyInput;
}

// Small hand-wired graphs for checks where the full network is overkill.
struct MiniBuilder {
  LayerGraph g;
  int add(NodeAttrs attrs, std::vector<int> inputs, const std::string& name) {
    Node n;
    n.id = static_cast<int>(g.nodes.size());
    n.attrs = std::move(attrs);
    n.inputs = std::move(inputs);
    n.name = name;
    n.role = "stem";
    g.nodes.push_back(n);
    g.output_id = n.id;
    return n.id;
  }
};

LayerGraph one_by_one_conv() {
  MiniBuilder b;
  b.g.name = "one-conv";
  const int x = b.add(InputAttrs{2}, {}, "input");
  b.add(Conv2DAttrs{1, 1, 0, 2, 3, false}, {x}, "conv");
  b.g.head_channels = 3;
  return b.g;
}

// conv -> bn -> relu -> upsample -> pool, concatenated with a second path.
LayerGraph mixed_graph() {
  MiniBuilder b;
  b.g.name = "mixed";
  const int x = b.add(InputAttrs{3}, {}, "input");
  const int c1 = b.add(Conv2DAttrs{3, 2, 1, 3, 4, false}, {x}, "a.conv");
  const int n1 = b.add(BatchNormAttrs{4, 1e-5}, {c1}, "a.bn");
  const int r1 = b.add(ReluAttrs{}, {n1}, "a.relu");
  const int u1 = b.add(UpsampleAttrs{2, true}, {r1}, "a.up");
  const int p1 = b.add(ChannelPoolAttrs{2, PoolMode::Average}, {u1}, "a.pool");
  const int c2 = b.add(Conv2DAttrs{1, 1, 0, 3, 2, false}, {x}, "b.conv");
  const int s = b.add(AddAttrs{}, {p1, c2}, "sum");
  const int cat = b.add(ConcatAttrs{}, {s, c2}, "cat");
  b.add(Conv2DAttrs{3, 1, 1, 4, 2, false}, {cat}, "out.conv");
  b.g.head_channels = 2;
  return b.g;
}

std::vector<char> bytes_of(const WeightStore& w) { return serialize_weights(w); }

}  // namespace

TEST_CASE("init is seeded and deterministic") {
  const auto g = build_preset("uhrnet-w18-small");
  CHECK(bytes_of(init_weights(g, 5)) == bytes_of(init_weights(g, 5)));
  CHECK(bytes_of(init_weights(g, 1)) != bytes_of(init_weights(g, 2)));
  const auto w = init_weights(g, 0);
  for (const auto& n : g.nodes) {
    if (!n.has_params()) continue;
    CHECK(w.find(n.name) != nullptr);
  }
  CHECK(w.size() == static_cast<std::size_t>(std::count_if(g.nodes.begin(), g.nodes.end(),
                                                           [](const Node& n) { return n.has_params(); })));
}

TEST_CASE("init statistics") {
  const auto g = build_preset("uhrnet-w18-small");
  const auto w = init_weights(g, 3);
  const Tensor* t = w.find("stem.2.conv");
  REQUIRE(t != nullptr);
  REQUIRE(t->dims() == Dims{64, 64, 3, 3});
  double sum = 0, sq = 0;
  for (float v : t->data()) {
    sum += v;
    sq += double(v) * v;
  }
  const double n = double(t->size());
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  const double expected = std::sqrt(2.0 / (9 * 64));
  CHECK(std::abs(sd - expected) / expected < 0.10);
  CHECK(std::abs(mean) < 0.05 * expected);

  const Tensor* bn = w.find("stem.2.bn");
  REQUIRE(bn != nullptr);
  REQUIRE(bn->dims() == Dims{4, 64});
  for (int c = 0; c < 64; ++c) {
    CHECK(bn->data()[c] == 1.0f);
    CHECK(bn->data()[64 + c] == 0.0f);
    CHECK(bn->data()[128 + c] == 0.0f);
    CHECK(bn->data()[192 + c] == 1.0f);
  }
}

TEST_CASE("forward shapes and determinism") {
  const auto g = build_preset("uhrnet-w18-small");
  const auto w = init_weights(g, 42);
  const auto x = random_input(Shape4{1, 3, 256, 256}, 42);
  const auto y = forward(g, w, x);
  CHECK(y.dims() == Dims{1, 279, 64, 64});
  CHECK(y.all_finite());
  CHECK(forward(g, w, x) == y);

  const auto micro = build_micro();
  const auto ym = forward(micro, init_weights(micro, 0), random_input(kMicroInput, 0));
  CHECK(ym.dims() == Dims{1, 62, 16, 16});
}

TEST_CASE("every preset runs") {
  for (const auto& p : preset_registry()) {
    if (p.name == "uhrnet-w48" || p.name == "hrnetv2-w48") continue;
    CAPTURE(p.name);
    const auto g = build_preset(p);
    const auto y = forward(g, init_weights(g, 1), random_input(Shape4{1, 3, 64, 128}, 1));
    CHECK(y.dims() == Dims{1, g.head_channels, 16, 32});
    CHECK(y.all_finite());
  }
}

TEST_CASE("zero convolutions give zero output") {
  const auto g = build_preset("uhrnet-w18-small-va");
  auto w = init_weights(g, 9);
  for (const auto& n : g.nodes) {
    if (n.kind() != OpKind::Conv2D) continue;
    for (auto& v : w.find(n.name)->data()) v = 0.0f;
  }
  const auto y = forward(g, w, Tensor({1, 3, 64, 64}));
  for (float v : y.data()) CHECK(v == 0.0f);
}

TEST_CASE("float and double forward agree") {
  const auto g = build_micro();
  const auto w = init_weights(g, 4);
  const auto x = random_input(kMicroInput, 4);
  const auto y32 = forward(g, w, x);
  const auto y64 = forward(g, w, x.cast<double>());
  double scale = 0;
  for (double v : y64.data()) scale = std::max(scale, std::abs(v));
  CHECK(testing::max_abs_diff(y32.cast<double>(), y64) < 1e-4 * std::max(1.0, scale));
}

TEST_CASE("weight validation") {
  const auto g = build_micro();
  const auto full = init_weights(g, 0);
  WeightStore missing;
  for (const auto& e : full.entries())
    if (e.name != "stage3.m0.b1.blk0.1.conv") missing.set(e.name, e.tensor);
  CHECK(error_of([&] { validate_weights(g, missing); }) == ErrorCode::WeightMissing);
  CHECK(error_of([&] { forward(g, missing, random_input(kMicroInput, 0)); }) == ErrorCode::WeightMissing);

  auto wrong = full;
  wrong.set("stem.1.conv", Tensor({64, 3, 1, 1}));
  CHECK(error_of([&] { validate_weights(g, wrong); }) == ErrorCode::ShapeMismatch);
  CHECK(error_of([&] { forward(g, full, random_input(Shape4{1, 3, 60, 64}, 0)); }) == ErrorCode::IndivisibleInput);
}

TEST_CASE("weight file round-trip and corruption") {
  const auto g = build_micro();
  const auto w = init_weights(g, 11);
  const auto bytes = serialize_weights(w);
  REQUIRE(bytes.size() > 24);
  CHECK(std::string(bytes.data(), 4) == "HRWS");
  const auto back = deserialize_weights(bytes);
  CHECK(back == w);
  CHECK(serialize_weights(back) == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "uhrnet_test_runtime";
  std::filesystem::create_directories(dir);
  save_weights(w, dir / "w.hrws");
  CHECK(load_weights(dir / "w.hrws") == w);
  std::ifstream f(dir / "w.hrws", std::ios::binary);
  const std::vector<char> disk((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(disk == bytes);

  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    CAPTURE(cut);
    const std::vector<char> part(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    CHECK(error_of([&] { deserialize_weights(part); }) == ErrorCode::FormatError);
  }
  auto flipped = bytes;
  flipped[bytes.size() - 40] ^= 0x01;
  CHECK(error_of([&] { deserialize_weights(flipped); }) == ErrorCode::ChecksumMismatch);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(error_of([&] { deserialize_weights(magic); }) == ErrorCode::FormatError);
  CHECK(error_of([&] { load_weights(dir / "absent.hrws"); }) == ErrorCode::IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("single conv gradients follow the closed form") {
  const auto g = one_by_one_conv();
  const auto w = init_weights(g, 2);
  const auto x = random_input(Shape4{1, 2, 64, 64}, 2);
  GradCheckOptions opt;
  opt.samples = 1000;
  const auto r = gradcheck(g, w, x, opt);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-7);
  // loss = mean(y), so d loss / d w[o, c] = sum over pixels of x[c] / numel(y).
  const auto& wp = r.params[1];
  REQUIRE(wp.name == "conv.weight");
  CHECK(wp.checked == 6);
  const std::size_t c = wp.worst_index % 2;
  double s = 0;
  for (std::size_t i = 0; i < 64 * 64; ++i) s += double(x[c * 64 * 64 + i]);
  CHECK(wp.worst_analytic == doctest::Approx(s / (3.0 * 64 * 64)).epsilon(1e-12));
}

TEST_CASE("gradcheck on a mixed graph") {
  const auto g = mixed_graph();
  auto w = init_weights(g, 6);
  // Non-trivial BN statistics so every BN gradient is exercised.
  auto* bn = w.find("a.bn");
  for (int c = 0; c < 4; ++c) {
    bn->data()[c] = 0.5f + 0.25f * c;
    bn->data()[4 + c] = 0.1f * c;
    bn->data()[8 + c] = -0.05f * c;
    bn->data()[12 + c] = 0.8f + 0.1f * c;
  }
  const auto x = random_input(Shape4{1, 3, 64, 64}, 6);
  const auto r = gradcheck(g, w, x, {});
  CHECK(r.params.size() == 1 + 1 + 4 + 1 + 1);
  CHECK(r.coordinates > 0);
  MESSAGE("mixed graph: max " << r.max_rel_error << ", kinked " << r.kinked_coordinates << ", smooth "
                              << r.max_rel_error_smooth);
  CHECK(r.max_rel_error_smooth < 1e-5);

  GradCheckOptions adaptive;
  adaptive.adaptive_step = true;
  const auto ra = gradcheck(g, w, x, adaptive);
  CHECK(ra.adaptive_step);
  CHECK(ra.kinked_coordinates == 0);
  CHECK(ra.max_rel_error < 1e-5);

  GradCheckOptions zero;
  zero.tolerance = 0;
  CHECK_FALSE(gradcheck(g, w, x, zero).passed);

  const auto again = gradcheck(g, w, x, {});
  CHECK(again.max_rel_error == r.max_rel_error);
  CHECK(again.loss == r.loss);
  CHECK(report_json(r).find("\"kinked_coordinates\"") != std::string::npos);
  CHECK(render_text(r).find("a.bn.var") != std::string::npos);
}

TEST_CASE("gradcheck rejects non-finite gradients") {
  const auto g = mixed_graph();
  auto w = init_weights(g, 1);
  w.find("a.conv")->data()[0] = std::numeric_limits<float>::infinity();
  CHECK(error_of([&] { gradcheck(g, w, random_input(Shape4{1, 3, 64, 64}, 1), {}); }) ==
        ErrorCode::NonFiniteGradient);
}

TEST_CASE("random input is seeded") {
  CHECK(random_input(kMicroInput, 3) == random_input(kMicroInput, 3));
  CHECK_FALSE(random_input(kMicroInput, 3) == random_input(kMicroInput, 4));
}
