#include "uhrnet/runtime.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>
#include <zlib.h>

#include "binary_io.hpp"
#include "uhrnet/tape.hpp"

namespace uhrnet {

void WeightStore::set(const std::string& name, Tensor tensor) {
  if (auto it = index_.find(name); it != index_.end()) {
    entries_[it->second].tensor = std::move(tensor);
    return;
  }
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, std::move(tensor)});
}

const Tensor* WeightStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

Tensor* WeightStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second].tensor;
}

namespace {

Dims expected_param_dims(const Node& n) {
  if (n.kind() == OpKind::Conv2D) {
    const auto& a = std::get<Conv2DAttrs>(n.attrs);
    return {a.out_ch, a.in_ch, a.kernel, a.kernel};
  }
  return {4, std::get<BatchNormAttrs>(n.attrs).channels};
}

// Box-Muller over 53-bit uniforms, so the stream is identical across standard
// libraries (std::normal_distribution is implementation-defined).
// Keeps synthetic inputs independent of the weight draws for the same seed.
constexpr std::uint64_t kInputStream = 0x9e3779b97f4a7c15ULL;

class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(kTwoPi * u2);
    return r * std::cos(kTwoPi * u2);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace

WeightStore init_weights(const LayerGraph& graph, std::uint64_t seed) {
  WeightStore store;
  store.seed = seed;
  NormalSource normal(seed);
  for (const auto& n : graph.nodes) {
    if (!n.has_params()) continue;
    if (n.kind() == OpKind::Conv2D) {
      const auto& a = std::get<Conv2DAttrs>(n.attrs);
      const double std_dev = std::sqrt(2.0 / (static_cast<double>(a.kernel) * a.kernel * a.out_ch));
      Tensor w(expected_param_dims(n));
      for (auto& v : w.data()) v = static_cast<float>(std_dev * normal.next());
      store.set(n.name, std::move(w));
    } else {
      const int c = std::get<BatchNormAttrs>(n.attrs).channels;
      Tensor bn(expected_param_dims(n));
      for (int i = 0; i < c; ++i) {
        bn[static_cast<std::size_t>(i)] = 1.0f;
        bn[static_cast<std::size_t>(3 * c + i)] = 1.0f;
      }
      store.set(n.name, std::move(bn));
    }
  }
  return store;
}

Tensor random_input(const Shape4& shape, std::uint64_t seed) {
  NormalSource normal(seed ^ kInputStream);
  Tensor x(shape.dims());
  for (auto& v : x.data()) v = static_cast<float>(normal.next());
  return x;
}

void validate_weights(const LayerGraph& graph, const WeightStore& weights) {
  for (const auto& n : graph.nodes) {
    if (!n.has_params()) continue;
    const Tensor* t = weights.find(n.name);
    const auto id = static_cast<std::size_t>(n.id);
    if (!t) throw Error(ErrorCode::WeightMissing, "no weights for node " + std::to_string(n.id) + " (" + n.name + ")", id);
    const Dims want = expected_param_dims(n);
    if (t->dims() != want) {
      throw Error(ErrorCode::ShapeMismatch,
                  "weights for " + n.name + " have shape " + dims_to_string(t->dims()) + ", expected " +
                      dims_to_string(want),
                  id);
    }
  }
}

namespace {

template <typename T>
struct NodeParams {
  BasicTensor<T> weight;
  BasicTensor<T> gamma, beta, mean, var;

  BasicTensor<T>& slot(int i) {
    switch (i) {
      case 1: return gamma;
      case 2: return beta;
      case 3: return mean;
      case 4: return var;
      default: return weight;
    }
  }
};

template <typename T>
std::vector<NodeParams<T>> gather_params(const LayerGraph& graph, const WeightStore& weights) {
  validate_weights(graph, weights);
  std::vector<NodeParams<T>> out(graph.nodes.size());
  for (const auto& n : graph.nodes) {
    if (!n.has_params()) continue;
    const Tensor& t = *weights.find(n.name);
    auto& p = out[static_cast<std::size_t>(n.id)];
    if (n.kind() == OpKind::Conv2D) {
      p.weight = t.cast<T>();
      continue;
    }
    const auto c = t.dim(1);
    const auto data = t.data();
    auto row = [&](std::int64_t r) {
      return BasicTensor<T>(Dims{c}, std::vector<T>(data.begin() + r * c, data.begin() + (r + 1) * c));
    };
    p.gamma = row(0);
    p.beta = row(1);
    p.mean = row(2);
    p.var = row(3);
  }
  return out;
}

template <typename T>
BasicTensor<T> eval_node(const Node& n, const std::vector<const BasicTensor<T>*>& in, const NodeParams<T>& p) {
  switch (n.kind()) {
    case OpKind::Conv2D: {
      const auto& a = std::get<Conv2DAttrs>(n.attrs);
      return conv2d(*in[0], p.weight, a.stride, a.pad);
    }
    case OpKind::BatchNorm:
      return batchnorm_infer(*in[0], p.gamma, p.beta, p.mean, p.var, std::get<BatchNormAttrs>(n.attrs).eps);
    case OpKind::ReLU: return relu(*in[0]);
    case OpKind::BilinearUpsample: {
      const auto& a = std::get<UpsampleAttrs>(n.attrs);
      return bilinear_upsample(*in[0], a.factor, a.align_corners);
    }
    case OpKind::ChannelPool: return channel_pool2(*in[0], std::get<ChannelPoolAttrs>(n.attrs).mode);
    case OpKind::Concat: return concat_channels<T>(std::span<const BasicTensor<T>* const>(in));
    case OpKind::Add: return add(*in[0], *in[1]);
    case OpKind::Input: break;
  }
  throw Error(ErrorCode::ShapeMismatch, "input node evaluated as an operation", static_cast<std::size_t>(n.id));
}

void check_fusion_widths(const LayerGraph& graph, int node_id, const Dims& out) {
  for (const auto& f : graph.fusions) {
    if (f.output_node == node_id && f.kind == FusionKind::B && out.at(1) != f.width) {
      throw Error(ErrorCode::ShapeMismatch,
                  "fusion at stage " + std::to_string(f.stage) + " produced " + std::to_string(out.at(1)) +
                      " channels, branch width is " + std::to_string(f.width),
                  static_cast<std::size_t>(node_id));
    }
  }
}

template <typename T>
BasicTensor<T> run_forward(const LayerGraph& graph, const WeightStore& weights, const BasicTensor<T>& input) {
  if (input.rank() != 4) throw Error(ErrorCode::ShapeMismatch, "input must be NCHW, got " + dims_to_string(input.dims()));
  const LayerGraph shaped = infer_shapes(graph, Shape4{input.n(), input.c(), input.h(), input.w()});
  const auto params = gather_params<T>(shaped, weights);

  const std::size_t count = shaped.nodes.size();
  std::vector<int> last_use(count, -1);
  for (const auto& n : shaped.nodes) {
    for (int in : n.inputs) last_use[static_cast<std::size_t>(in)] = n.id;
  }
  last_use[static_cast<std::size_t>(shaped.output_id)] = static_cast<int>(count);

  std::vector<BasicTensor<T>> acts(count);
  std::vector<const BasicTensor<T>*> ins;
  for (const auto& n : shaped.nodes) {
    const auto id = static_cast<std::size_t>(n.id);
    if (n.kind() == OpKind::Input) {
      acts[id] = input;
    } else {
      ins.clear();
      for (int in : n.inputs) ins.push_back(&acts[static_cast<std::size_t>(in)]);
      acts[id] = eval_node(n, ins, params[id]);
      for (int in : n.inputs) {
        if (last_use[static_cast<std::size_t>(in)] == n.id) acts[static_cast<std::size_t>(in)] = BasicTensor<T>();
      }
    }
    if (acts[id].dims() != n.out_shape->dims()) {
      throw Error(ErrorCode::ShapeMismatch, "node " + n.name + " produced " + dims_to_string(acts[id].dims()), id);
    }
    check_fusion_widths(shaped, n.id, acts[id].dims());
#ifndef NDEBUG
    if (!acts[id].all_finite()) {
      throw Error(ErrorCode::ShapeMismatch, "non-finite activation at node " + n.name, id);
    }
#endif
  }
  return std::move(acts[static_cast<std::size_t>(shaped.output_id)]);
}

}  // namespace

Tensor forward(const LayerGraph& graph, const WeightStore& weights, const Tensor& input) {
  return run_forward(graph, weights, input);
}

Tensor64 forward(const LayerGraph& graph, const WeightStore& weights, const Tensor64& input) {
  return run_forward(graph, weights, input);
}

namespace {

constexpr char kWeightMagic[4] = {'H', 'R', 'W', 'S'};

std::uint32_t crc32_of(const char* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(size));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<char> serialize_weights(const WeightStore& store) {
  detail::ByteWriter w;
  w.put_bytes(kWeightMagic, 4);
  w.put<std::uint32_t>(kWeightFileVersion);
  w.put<std::uint64_t>(store.seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.size()));
  for (const auto& e : store.entries()) {
    if (e.name.size() > 0xFFFF) throw Error(ErrorCode::FormatError, "entry name too long: " + e.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(0);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.tensor.rank()));
    for (auto d : e.tensor.dims()) w.put<std::uint64_t>(static_cast<std::uint64_t>(d));
    w.put_bytes(e.tensor.data().data(), e.tensor.size() * sizeof(float));
  }
  const auto& bytes = w.bytes();
  w.put<std::uint32_t>(crc32_of(bytes.data(), bytes.size()));
  return w.bytes();
}

WeightStore deserialize_weights(std::span<const char> bytes) {
  detail::ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kWeightMagic, 4) != 0) throw Error(ErrorCode::FormatError, "bad weight file magic", 0);
  const std::size_t version_at = r.offset();
  if (r.get<std::uint32_t>() != kWeightFileVersion) {
    throw Error(ErrorCode::FormatError, "unsupported weight file version", version_at);
  }
  WeightStore store;
  store.seed = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    std::string name(len, '\0');
    r.get_bytes(name.data(), len);
    const std::size_t dtype_at = r.offset();
    if (r.get<std::uint8_t>() != 0) throw Error(ErrorCode::FormatError, "unsupported dtype in entry " + name, dtype_at);
    const auto rank = r.get<std::uint8_t>();
    Dims dims;
    for (int k = 0; k < rank; ++k) {
      const std::size_t at = r.offset();
      const auto d = r.get<std::uint64_t>();
      if (d > (std::uint64_t{1} << 32)) throw Error(ErrorCode::FormatError, "implausible dimension", at);
      dims.push_back(static_cast<std::int64_t>(d));
    }
    const auto n = static_cast<std::size_t>(element_count(dims));
    if (n * sizeof(float) > r.remaining()) {
      throw Error(ErrorCode::FormatError, "entry " + name + " runs past the end of the file", r.offset());
    }
    std::vector<float> data(n);
    r.get_bytes(data.data(), n * sizeof(float));
    if (store.find(name)) throw Error(ErrorCode::FormatError, "duplicate entry " + name, r.offset());
    store.set(name, Tensor(std::move(dims), std::move(data)));
  }
  if (r.remaining() != sizeof(std::uint32_t)) {
    throw Error(ErrorCode::FormatError,
                "expected a 4-byte checksum after the entries, found " + std::to_string(r.remaining()) + " bytes",
                r.offset());
  }
  const std::size_t body = r.offset();
  const auto stored = r.get<std::uint32_t>();
  if (stored != crc32_of(bytes.data(), body)) {
    throw Error(ErrorCode::ChecksumMismatch, "weight file checksum mismatch", body);
  }
  return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_weights(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  const auto bytes = detail::read_all(in);
  return deserialize_weights(bytes);
}

namespace {

struct CheckedParam {
  std::string name;
  int node = -1;  // -1 for the network input
  int slot = 0;   // 0 conv weight, 1-4 BN gamma/beta/mean/var
  Tape<double>::Value value = 0;
};

double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

// Re-evaluates the graph with one perturbed tensor, touching only the nodes
// that depend on it, and returns sum(output) under the perturbation.
class Perturber {
 public:
  Perturber(const LayerGraph& g, std::vector<NodeParams<double>>& params, const Tape<double>& tape,
            const std::vector<Tape<double>::Value>& node_value)
      : g_(g), params_(params), tape_(tape), node_value_(node_value) {}

  // `crossings` receives the number of ReLU inputs whose sign differs from the
  // unperturbed pass.
  BasicTensor<double> output_with(int start_node, const BasicTensor<double>* new_input, std::size_t* crossings) {
    *crossings = 0;
    const std::size_t count = g_.nodes.size();
    std::vector<BasicTensor<double>> scratch(count);
    std::vector<char> dirty(count, 0);
    std::vector<const BasicTensor<double>*> ins;
    for (std::size_t id = static_cast<std::size_t>(start_node); id < count; ++id) {
      const Node& n = g_.nodes[id];
      bool touched = static_cast<int>(id) == start_node;
      for (int in : n.inputs) touched = touched || dirty[static_cast<std::size_t>(in)];
      if (!touched) continue;
      dirty[id] = 1;
      if (n.kind() == OpKind::Input) {
        scratch[id] = *new_input;
        continue;
      }
      ins.clear();
      for (int in : n.inputs) {
        const auto k = static_cast<std::size_t>(in);
        ins.push_back(dirty[k] ? &scratch[k] : &tape_.value(node_value_[k]));
      }
      if (n.kind() == OpKind::ReLU) {
        const auto& before = tape_.value(node_value_[static_cast<std::size_t>(n.inputs[0])]);
        const auto& after = *ins[0];
        for (std::size_t i = 0; i < after.size(); ++i) {
          *crossings += (before[i] > 0) != (after[i] > 0);
        }
      }
      scratch[id] = eval_node(n, ins, params_[id]);
    }
    const auto out = static_cast<std::size_t>(g_.output_id);
    return dirty[out] ? std::move(scratch[out]) : tape_.value(node_value_[out]);
  }

 private:
  const LayerGraph& g_;
  std::vector<NodeParams<double>>& params_;
  const Tape<double>& tape_;
  const std::vector<Tape<double>::Value>& node_value_;
};

}  // namespace

GradCheckReport gradcheck(const LayerGraph& graph, const WeightStore& weights, const Tensor& input_f32,
                          const GradCheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  if (input_f32.rank() != 4) throw Error(ErrorCode::ShapeMismatch, "input must be NCHW");
  const LayerGraph g = infer_shapes(graph, Shape4{input_f32.n(), input_f32.c(), input_f32.h(), input_f32.w()});
  auto params = gather_params<double>(g, weights);
  BasicTensor<double> input = input_f32.cast<double>();

  // Analytic pass.
  Tape<double> tape;
  std::vector<Tape<double>::Value> node_value(g.nodes.size());
  std::vector<CheckedParam> checked;
  static const char* kBnSlots[] = {"gamma", "beta", "mean", "var"};
  for (const auto& n : g.nodes) {
    const auto id = static_cast<std::size_t>(n.id);
    auto& p = params[id];
    switch (n.kind()) {
      case OpKind::Input:
        node_value[id] = tape.leaf(input);
        if (opt.include_input) checked.push_back({"input", n.id, 0, node_value[id]});
        break;
      case OpKind::Conv2D: {
        const auto& a = std::get<Conv2DAttrs>(n.attrs);
        const auto w = tape.leaf(p.weight);
        checked.push_back({n.name + ".weight", n.id, 0, w});
        node_value[id] = tape.conv2d(node_value[static_cast<std::size_t>(n.inputs[0])], w, a.stride, a.pad);
        break;
      }
      case OpKind::BatchNorm: {
        std::array<Tape<double>::Value, 4> v{};
        for (int s = 0; s < 4; ++s) {
          v[static_cast<std::size_t>(s)] = tape.leaf(p.slot(s + 1));
          checked.push_back({n.name + "." + kBnSlots[s], n.id, s + 1, v[static_cast<std::size_t>(s)]});
        }
        node_value[id] = tape.batchnorm(node_value[static_cast<std::size_t>(n.inputs[0])], v[0], v[1], v[2], v[3],
                                        std::get<BatchNormAttrs>(n.attrs).eps);
        break;
      }
      case OpKind::ReLU: node_value[id] = tape.relu(node_value[static_cast<std::size_t>(n.inputs[0])]); break;
      case OpKind::BilinearUpsample: {
        const auto& a = std::get<UpsampleAttrs>(n.attrs);
        node_value[id] = tape.upsample(node_value[static_cast<std::size_t>(n.inputs[0])], a.factor, a.align_corners);
        break;
      }
      case OpKind::ChannelPool:
        node_value[id] = tape.channel_pool(node_value[static_cast<std::size_t>(n.inputs[0])],
                                           std::get<ChannelPoolAttrs>(n.attrs).mode);
        break;
      case OpKind::Concat: {
        std::vector<Tape<double>::Value> xs;
        for (int in : n.inputs) xs.push_back(node_value[static_cast<std::size_t>(in)]);
        node_value[id] = tape.concat(xs);
        break;
      }
      case OpKind::Add:
        node_value[id] = tape.add(node_value[static_cast<std::size_t>(n.inputs[0])],
                                  node_value[static_cast<std::size_t>(n.inputs[1])]);
        break;
    }
  }
  const auto out_v = node_value[static_cast<std::size_t>(g.output_id)];
  const auto& out = tape.value(out_v);
  const double inv_count = 1.0 / static_cast<double>(out.size());
  double loss = 0;
  for (double v : out.data()) loss += v;
  loss *= inv_count;
  const auto grads = tape.backward(out_v, BasicTensor<double>(out.dims(), inv_count));

  GradCheckReport report;
  report.graph_name = g.name;
  report.eps = opt.eps;
  report.tolerance = opt.tolerance;
  report.loss = loss;
  report.adaptive_step = opt.adaptive_step;

  Perturber perturb(g, params, tape, node_value);
  std::mt19937_64 pick(opt.seed);
  for (const auto& cp : checked) {
    BasicTensor<double>& target = cp.node >= 0 && g.node(cp.node).kind() != OpKind::Input
                                      ? params[static_cast<std::size_t>(cp.node)].slot(cp.slot)
                                      : input;
    const auto& analytic = grads[cp.value];
    ParamCheck pc;
    pc.name = cp.name;
    pc.size = target.size();

    // Distinct coordinates by partial Fisher-Yates.
    std::vector<std::size_t> order(target.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t take = std::min(opt.samples, order.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(pick() % (order.size() - i));
      std::swap(order[i], order[j]);
    }
    for (std::size_t s = 0; s < take; ++s) {
      const std::size_t idx = order[s];
      const double a = analytic.empty() ? 0.0 : analytic[idx];
      const double saved = target[idx];
      double step = opt.eps;
      double numeric = 0;
      std::size_t crossings = 0;
      for (;;) {
        std::size_t cross_plus = 0, cross_minus = 0;
        target[idx] = saved + step;
        const auto plus = perturb.output_with(cp.node, &input, &cross_plus);
        target[idx] = saved - step;
        const auto minus = perturb.output_with(cp.node, &input, &cross_minus);
        target[idx] = saved;
        double diff = 0;
        for (std::size_t i = 0; i < plus.size(); ++i) diff += plus[i] - minus[i];
        numeric = diff * inv_count / (2.0 * step);
        crossings = cross_plus + cross_minus;
        if (!opt.adaptive_step || crossings == 0 || step / 10 < opt.min_step * (1 - 1e-9)) break;
        step /= 10;
      }
      if (!std::isfinite(a) || !std::isfinite(numeric)) {
        throw Error(ErrorCode::NonFiniteGradient, "non-finite gradient for " + cp.name + "[" + std::to_string(idx) + "]");
      }
      const double err = relative_error(a, numeric);
      if (pc.checked == 0 || err > pc.max_rel_error) {
        pc.max_rel_error = err;
        pc.worst_index = idx;
        pc.worst_analytic = a;
        pc.worst_numeric = numeric;
      }
      if (crossings > 0) {
        ++pc.kinked;
      } else {
        pc.max_rel_error_smooth = std::max(pc.max_rel_error_smooth, err);
      }
      pc.min_step_used = pc.checked == 0 ? step : std::min(pc.min_step_used, step);
      ++pc.checked;
    }
    report.coordinates += pc.checked;
    report.kinked_coordinates += pc.kinked;
    report.max_rel_error_smooth = std::max(report.max_rel_error_smooth, pc.max_rel_error_smooth);
    report.max_rel_error = std::max(report.max_rel_error, pc.max_rel_error);
    report.params.push_back(std::move(pc));
  }
  report.passed = !(report.max_rel_error > opt.tolerance);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string render_text(const GradCheckReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "gradcheck %s  dtype=%s eps=%g%s tol=%g loss=%.10g\n", r.graph_name.c_str(),
                r.dtype.c_str(), r.eps, r.adaptive_step ? " (adaptive, diagnostic)" : "", r.tolerance, r.loss);
  out += buf;
  for (const auto& p : r.params) {
    std::snprintf(buf, sizeof buf, "  %-52s %4zu/%-6zu max_rel=%.3e kinked=%zu%s\n", p.name.c_str(), p.checked,
                  p.size, p.max_rel_error, p.kinked, p.max_rel_error > r.tolerance ? "  FAIL" : "");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%zu coordinates crossed a ReLU kink; max relative error without them %.3e\n",
                r.kinked_coordinates, r.max_rel_error_smooth);
  out += buf;
  std::snprintf(buf, sizeof buf, "%zu tensors, %zu coordinates, max relative error %.3e, %.1f s: %s\n",
                r.params.size(), r.coordinates, r.max_rel_error, r.seconds, r.passed ? "PASS" : "FAIL");
  out += buf;
  return out;
}

std::string report_json(const GradCheckReport& r, int indent) {
  using nlohmann::json;
  json params = json::array();
  for (const auto& p : r.params) {
    params.push_back({{"name", p.name},
                      {"size", p.size},
                      {"checked", p.checked},
                      {"max_rel_error", p.max_rel_error},
                      {"worst_index", p.worst_index},
                      {"worst_analytic", p.worst_analytic},
                      {"worst_numeric", p.worst_numeric},
                      {"kinked", p.kinked},
                      {"max_rel_error_smooth", p.max_rel_error_smooth},
                      {"min_step_used", p.min_step_used}});
  }
  json doc = {{"model", r.graph_name},
              {"dtype", r.dtype},
              {"eps", r.eps},
              {"tolerance", r.tolerance},
              {"loss", r.loss},
              {"max_rel_error", r.max_rel_error},
              {"coordinates", r.coordinates},
              {"kinked_coordinates", r.kinked_coordinates},
              {"max_rel_error_smooth", r.max_rel_error_smooth},
              {"adaptive_step", r.adaptive_step},
              {"seconds", r.seconds},
              {"passed", r.passed},
              {"params", std::move(params)}};
  return doc.dump(indent);
}

}  // namespace uhrnet
