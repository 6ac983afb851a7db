#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "uhrnet/graph.hpp"
#include "uhrnet/tensor.hpp"

namespace uhrnet {

// One tensor per parameterized node, keyed by node name, in graph order.
// Conv2D: [outC, inC, k, k]. BatchNorm: [4, C] with rows gamma, beta,
// running mean, running variance.
class WeightStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  std::uint64_t seed = 0;
  std::string init_scheme = "he-fanout-normal/mt19937_64";

  void set(const std::string& name, Tensor tensor);
  const Tensor* find(const std::string& name) const;
  Tensor* find(const std::string& name);
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  // Value equality of seed and entries; the scheme tag is not persisted.
  friend bool operator==(const WeightStore& a, const WeightStore& b) {
    return a.seed == b.seed && a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Conv weights ~ N(0, 2 / (k*k*outC)) drawn in graph order from a 64-bit
// Mersenne twister seeded with `seed`; BN gamma=1, beta=0, mean=0, var=1.
WeightStore init_weights(const LayerGraph& graph, std::uint64_t seed);

// Standard normal tensor for smoke runs and gradient checks, drawn from a
// stream derived from `seed` that does not overlap the weight stream.
Tensor random_input(const Shape4& shape, std::uint64_t seed);

// Checks that every parameterized node has an entry of the right shape.
// Throws WeightMissing or ShapeMismatch with the node id.
void validate_weights(const LayerGraph& graph, const WeightStore& weights);

Tensor forward(const LayerGraph& graph, const WeightStore& weights, const Tensor& input);
Tensor64 forward(const LayerGraph& graph, const WeightStore& weights, const Tensor64& input);

inline constexpr std::uint32_t kWeightFileVersion = 1;

// "HRWS" | u32 version | u64 seed | u32 count | entries | u32 CRC32.
// Entry: u16 name_len | name | u8 dtype (0 = f32) | u8 rank | u64 dims | payload.
// The CRC covers every byte before it.
std::vector<char> serialize_weights(const WeightStore& store);
WeightStore deserialize_weights(std::span<const char> bytes);
void save_weights(const WeightStore& store, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

struct GradCheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-5;
  std::size_t samples = 20;  // per parameter tensor, capped at its size
  std::uint64_t seed = 0;    // coordinate sampling
  bool include_input = true;
  // Diagnostic only: when a stencil flips the sign of any ReLU input, retry
  // with the step divided by 10 down to min_step. Reports made this way do not
  // count as a check at the fixed eps.
  bool adaptive_step = false;
  double min_step = 1e-8;
};

struct ParamCheck {
  std::string name;
  std::size_t size = 0;
  std::size_t checked = 0;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  // Coordinates whose final stencil still crossed a ReLU kink.
  std::size_t kinked = 0;
  // Max error over the coordinates that crossed no kink.
  double max_rel_error_smooth = 0;
  double min_step_used = 0;
};

struct GradCheckReport {
  std::string graph_name;
  std::vector<ParamCheck> params;
  double eps = 0;
  double tolerance = 0;
  std::string dtype = "f64";
  double loss = 0;
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  std::size_t kinked_coordinates = 0;
  double max_rel_error_smooth = 0;
  bool adaptive_step = false;
  double seconds = 0;
  bool passed = false;
};

// Loss is the mean of the output. Analytic gradients come from a reverse sweep
// over a float64 tape; numeric ones from central differences, recomputing only
// the nodes downstream of the perturbed value. Relative error uses the
// denominator max(|a|, |n|, 1e-8).
GradCheckReport gradcheck(const LayerGraph& graph, const WeightStore& weights, const Tensor& input,
                          const GradCheckOptions& options = {});

std::string render_text(const GradCheckReport& report);
std::string report_json(const GradCheckReport& report, int indent = 2);

}  // namespace uhrnet
