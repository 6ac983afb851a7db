// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failed criteria.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include "uhrnet/analysis.hpp"
#include "uhrnet/arch_dsl.hpp"
#include "uhrnet/ops.hpp"
#include "uhrnet/presets.hpp"
#include "uhrnet/runtime.hpp"

using namespace uhrnet;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failed = 0;

void report(bool ok, const char* name, const std::string& detail) {
  std::printf("%s  %-22s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failed;
}

void info(const std::string& detail) {
  std::printf("      %s\n", detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Published totals at 1x3x1024x2048: ablation table and large-model table.
const std::vector<std::pair<std::string, double>> kPublished = {
    {"hrnetv2-w18-small-v2", 71.6}, {"uhrnet-w18-small", 73.1},    {"uhrnet-w18-small-va", 58.6},
    {"uhrnet-w18-small-vb", 67.7},  {"uhrnet-w18-small-vc", 73.8}, {"uhrnet-w18-small-vd", 67.7},
    {"uhrnet-w18-small-ve", 72.2},  {"uhrnet-w18-small-vf", 73.1}, {"uhrnet-w18-small-vg", 73.1},
    {"uhrnet-w18-small-vh", 73.1},  {"hrnetv2-w48", 696.2},        {"uhrnet-w48", 698.6},
};

void gflops_reproduction(const CostConvention& conv) {
  bool ok = true;
  double worst = 0, worst_time = 0;
  std::string worst_name;
  for (const auto& [name, target] : kPublished) {
    const auto t0 = Clock::now();
    const double got = count_flops(infer_shapes(build_preset(name), kReferenceInput), conv).gflops();
    worst_time = std::max(worst_time, seconds_since(t0));
    const double dev = std::abs(got - target) / target;
    const double tol = name == "hrnetv2-w18-small-v2" ? 0.01 : 0.03;
    ok = ok && dev < tol;
    if (dev > worst) {
      worst = dev;
      worst_name = name;
    }
    info(fmt("%-22s %8.2f GFLOPs  published %6.1f  %+.2f%%", name.c_str(), got, target, 100 * (got - target) / target));
  }
  ok = ok && worst_time < 1.0;
  report(ok, "gflops-reproduction",
         fmt("%zu models, max deviation %.2f%% (%s), slowest %.3f s", kPublished.size(), 100 * worst,
             worst_name.c_str(), worst_time));
}

void structural_invariants() {
  bool ok = true;
  std::string problems;
  auto fail = [&](const std::string& what) {
    ok = false;
    if (problems.size() < 300) problems += " " + what + ";";
  };
  for (const auto& p : preset_registry()) {
    const auto g = infer_shapes(build_preset(p), Shape4{1, 3, 256, 512});
    const auto out = g.output_shape();
    if (!(out.h == 64 && out.w == 128)) fail(p.name + " output not input/4");
    const int c = g.base_width;
    if (p.architecture == Architecture::HRNetV2) {
      if (g.head_channels != 15 * c) fail(p.name + " head != 15C");
      continue;
    }
    int max_level = 0;
    for (std::size_t i = 0; i < g.stages.size(); ++i) {
      const auto& lv = g.stages[i].levels;
      max_level = std::max(max_level, lv.back());
      if (i == 0) continue;
      const auto& pv = g.stages[i - 1].levels;
      std::vector<int> common;
      std::set_intersection(pv.begin(), pv.end(), lv.begin(), lv.end(), std::back_inserter(common));
      if (common.size() != 1) fail(p.name + " stage " + std::to_string(i + 1) + " intersection");
    }
    // Four-stream variants have no 1/64 stream and keep an unpooled 15C head.
    const int expected_head = max_level == 4 ? 31 * c / 2 : 15 * c;
    if (g.head_channels != expected_head) fail(p.name + " head channels");
    if (g.stages.size() == 9) {
      std::set<std::pair<int, int>> wiring;
      for (const auto& f : g.fusions) {
        wiring.emplace(f.stage, f.shortcut_stage);
        if (f.kind != p.config.fusion) fail(p.name + " junction kind");
      }
      if (g.fusions.size() != 3 || wiring != std::set<std::pair<int, int>>{{6, 4}, {7, 3}, {8, 2}})
        fail(p.name + " junction wiring");
    }
  }
  report(ok, "structural-invariants",
         ok ? fmt("%zu presets: one shared level per stage step, junctions 8<-2, 7<-3, 6<-4 "
                  "(Fusion B, Fusion A for vh), "
                  "15.5C/15C heads, output at 1/4",
                  preset_registry().size())
            : problems);
}

void reallocation(const CostConvention& conv) {
  const auto u = count_flops(infer_shapes(build_preset("uhrnet-w18-small"), kReferenceInput), conv);
  const auto h = count_flops(infer_shapes(build_preset("hrnetv2-w18-small-v2"), kReferenceInput), conv);
  const double fu = u.flops_fraction_from_level(2), fh = h.flops_fraction_from_level(2);
  report(fu > fh, "cost-reallocation",
         fmt("share of FLOPs at 1/16 and below: U-HRNet-W18-small %.3f vs HRNetV2-W18-small-v2 %.3f", fu, fh));
}

void gradient_verification() {
  const auto g = build_micro();
  const std::uint64_t seed = 7;
  GradCheckOptions opt;
  opt.seed = seed;
  const auto r = gradcheck(g, init_weights(g, seed), random_input(kMicroInput, seed), opt);
  bool sampled = true;
  for (const auto& p : r.params) sampled = sampled && p.checked == std::min<std::size_t>(20, p.size);
  const bool ok = r.max_rel_error < 1e-5 && r.seconds < 60 && sampled && r.dtype == "f64";
  report(ok, "gradient-verification",
         fmt("micro C=4 1x3x64x64 f64 eps=%g: max rel error %.3e over %zu coordinates (%zu tensors), %.1f s", r.eps,
             r.max_rel_error, r.coordinates, r.params.size(), r.seconds));
  info(fmt("%zu coordinates have a ReLU kink inside the +/-eps stencil; max rel error over the other %zu is %.3e",
           r.kinked_coordinates, r.coordinates - r.kinked_coordinates, r.max_rel_error_smooth));
}

// Independent seven-loop cross-correlation in double.
template <typename T>
Tensor64 naive_conv(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad) {
  const auto N = x.n(), C = x.c(), H = x.h(), W = x.w(), O = w.dim(0), K = w.dim(2);
  const auto OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  Tensor64 out({N, O, OH, OW});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox) {
          double acc = 0;
          for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t ky = 0; ky < K; ++ky)
              for (std::int64_t kx = 0; kx < K; ++kx) {
                const auto iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < H && ix >= 0 && ix < W) acc += double(x.at(n, c, iy, ix)) * double(w.at(o, c, ky, kx));
              }
          out.at(n, o, oy, ox) = acc;
        }
  return out;
}

void conv_oracle() {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst32 = 0, worst64 = 0;
  for (int i = 0; i < 100; ++i) {
    const std::int64_t n = 1 + rng() % 2, c = 1 + rng() % 4, o = 1 + rng() % 4, h = 1 + rng() % 8, w = 1 + rng() % 8;
    const int k = rng() % 2 ? 3 : 1, stride = 1 + static_cast<int>(rng() % 2);
    Tensor64 x({n, c, h, w}), wt({o, c, k, k});
    for (auto& v : x.data()) v = u(rng);
    for (auto& v : wt.data()) v = u(rng);
    const auto ref = naive_conv(x, wt, stride, k / 2);
    const auto got = conv2d(x, wt, stride, k / 2);
    const auto xf = x.cast<float>(), wf = wt.cast<float>();
    const auto ref32 = naive_conv(xf, wf, stride, k / 2);
    const auto got32 = conv2d(xf, wf, stride, k / 2);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      worst64 = std::max(worst64, std::abs(got[j] - ref[j]));
      worst32 = std::max(worst32, std::abs(double(got32[j]) - ref32[j]));
    }
  }
  report(worst32 < 1e-6 && worst64 < 1e-6, "conv-oracle",
         fmt("100 random instances up to 2x4x8x8: max |diff| f32 %.2e, f64 %.2e", worst32, worst64));
}

int run(const std::string& cmd) {
  const int raw = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void determinism(const std::string& cli) {
  const fs::path dir = fs::temp_directory_path() / "uhrnet_acceptance";
  fs::create_directories(dir);
  const std::string d = dir.string();
  bool ok = run(cli + " sample --shape 1x3x256x256 --seed 3 --out " + d + "/x.hrtf") == 0;
  for (int i = 1; i <= 2 && ok; ++i) {
    const std::string n = std::to_string(i);
    ok = run(cli + " init --preset uhrnet-w18-small --seed 42 --out " + d + "/w" + n + ".hrws") == 0 &&
         run(cli + " forward --preset uhrnet-w18-small --weights " + d + "/w" + n + ".hrws --input-file " + d +
             "/x.hrtf --out-file " + d + "/y" + n + ".hrtf") == 0;
  }
  const auto y1 = slurp(dir / "y1.hrtf"), y2 = slurp(dir / "y2.hrtf");
  const bool same = ok && !y1.empty() && y1 == y2 && slurp(dir / "w1.hrws") == slurp(dir / "w2.hrws");
  report(same, "determinism",
         fmt("two init+forward runs (uhrnet-w18-small, seed 42, 1x3x256x256): %zu-byte outputs %s", y1.size(),
             same ? "identical" : "differ"));
  fs::remove_all(dir);
}

void parser() {
  const std::vector<std::string> rows = {"1v1v3v2=",          "1v1v3v5=",          "1v1v3v7=",
                                         "1v1v2v5^1=",        "1v1v2v5^1^1^1",     "1v1v4v1v1^1^1^1^1",
                                         "1v1v2v1v1^1^2^2^1", "1v1v2v2v2^1^1^1^1", "1v1v2v2v2^1^1^1^1"};
  int round_trips = 0;
  for (const auto& r : rows) {
    try {
      const auto s = parse_structure(r);
      round_trips += format_structure(s) == r && parse_structure(format_structure(s)) == s;
    } catch (const Error&) {
    }
  }
  std::mt19937_64 rng(99);
  const std::string alphabet = "0123456789v^=";
  int typed_errors = 0, parsed = 0, other = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    const std::size_t len = i % 2 ? rng() % 1025 : rng() % 14;
    for (std::size_t j = 0; j < len; ++j)
      s.push_back(i % 3 == 0 ? static_cast<char>(rng() & 0xff) : alphabet[rng() % alphabet.size()]);
    try {
      parse_structure(s);
      ++parsed;
    } catch (const Error&) {
      ++typed_errors;
    } catch (...) {
      ++other;
    }
  }
  report(round_trips == 9 && other == 0, "parser",
         fmt("%d/9 table encodings round-trip; fuzz 10000 strings: %d parsed, %d typed errors, %d other", round_trips,
             parsed, typed_errors, other));
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "uhrnet";
  const auto cal = calibrate_default();
  info("fitted cost convention: " + cal.convention.describe());
  gflops_reproduction(cal.convention);
  structural_invariants();
  reallocation(cal.convention);
  gradient_verification();
  conv_oracle();
  determinism(cli);
  parser();
  std::printf("%d of 7 criteria failed\n", g_failed);
  return g_failed;
}
