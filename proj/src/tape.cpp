#include "uhrnet/tape.hpp"

namespace uhrnet {

const char* to_string(TapeOp op) {
  switch (op) {
    case TapeOp::Leaf: return "Leaf";
    case TapeOp::Conv2D: return "Conv2D";
    case TapeOp::BatchNorm: return "BatchNorm";
    case TapeOp::ReLU: return "ReLU";
    case TapeOp::Upsample: return "Upsample";
    case TapeOp::ChannelPool: return "ChannelPool";
    case TapeOp::Concat: return "Concat";
    case TapeOp::Add: return "Add";
  }
  return "Unknown";
}

template <typename T>
typename Tape<T>::Value Tape<T>::push(Entry entry, BasicTensor<T> result) {
  for (Value in : entry.inputs) {
    if (in >= entries_.size()) {
      throw Error(ErrorCode::TapeMismatch, "tape input " + std::to_string(in) + " is not recorded");
    }
  }
  entries_.push_back(std::move(entry));
  values_.push_back(std::move(result));
  return entries_.size() - 1;
}

template <typename T>
typename Tape<T>::Value Tape<T>::leaf(BasicTensor<T> tensor) {
  return push(Entry{TapeOp::Leaf, {}}, std::move(tensor));
}

template <typename T>
typename Tape<T>::Value Tape<T>::conv2d(Value x, Value weight, int stride, int pad) {
  Entry e{TapeOp::Conv2D, {x, weight}};
  e.stride = stride;
  e.pad = pad;
  auto out = uhrnet::conv2d(value(x), value(weight), stride, pad);
  return push(std::move(e), std::move(out));
}

template <typename T>
typename Tape<T>::Value Tape<T>::batchnorm(Value x, Value gamma, Value beta, Value mean, Value var,
                                           double eps) {
  Entry e{TapeOp::BatchNorm, {x, gamma, beta, mean, var}};
  e.eps = eps;
  auto out = batchnorm_infer(value(x), value(gamma), value(beta), value(mean), value(var), eps);
  return push(std::move(e), std::move(out));
}

template <typename T>
typename Tape<T>::Value Tape<T>::relu(Value x) {
  auto out = uhrnet::relu(value(x));
  return push(Entry{TapeOp::ReLU, {x}}, std::move(out));
}

template <typename T>
typename Tape<T>::Value Tape<T>::upsample(Value x, int factor, bool align_corners) {
  Entry e{TapeOp::Upsample, {x}};
  e.factor = factor;
  e.align_corners = align_corners;
  auto out = bilinear_upsample(value(x), factor, align_corners);
  return push(std::move(e), std::move(out));
}

template <typename T>
typename Tape<T>::Value Tape<T>::channel_pool(Value x, PoolMode mode) {
  Entry e{TapeOp::ChannelPool, {x}};
  e.pool = mode;
  auto out = channel_pool2(value(x), mode);
  return push(std::move(e), std::move(out));
}

template <typename T>
typename Tape<T>::Value Tape<T>::concat(std::span<const Value> xs) {
  std::vector<const BasicTensor<T>*> parts;
  for (Value v : xs) parts.push_back(&value(v));
  auto out = concat_channels<T>(std::span<const BasicTensor<T>* const>(parts));
  return push(Entry{TapeOp::Concat, std::vector<Value>(xs.begin(), xs.end())}, std::move(out));
}

template <typename T>
typename Tape<T>::Value Tape<T>::add(Value x, Value y) {
  auto out = uhrnet::add(value(x), value(y));
  return push(Entry{TapeOp::Add, {x, y}}, std::move(out));
}

namespace {

template <typename T>
void accumulate(BasicTensor<T>& into, const BasicTensor<T>& g) {
  if (into.empty()) {
    into = g;
    return;
  }
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
}

}  // namespace

template <typename T>
std::vector<BasicTensor<T>> Tape<T>::backward(Value output, const BasicTensor<T>& out_grad,
                                              const std::function<void(Value)>& visit) const {
  if (output >= entries_.size()) {
    throw Error(ErrorCode::TapeMismatch, "output value is not recorded on this tape");
  }
  if (out_grad.dims() != values_[output].dims()) {
    throw Error(ErrorCode::TapeMismatch, "output gradient shape " + dims_to_string(out_grad.dims()) +
                                             " does not match value shape " +
                                             dims_to_string(values_[output].dims()));
  }
  std::vector<BasicTensor<T>> grads(entries_.size());
  grads[output] = out_grad;
  for (Value i = output + 1; i-- > 0;) {
    if (grads[i].empty()) continue;
    const Entry& e = entries_[i];
    if (visit) visit(i);
    const BasicTensor<T>& g = grads[i];
    switch (e.op) {
      case TapeOp::Leaf:
        break;
      case TapeOp::Conv2D: {
        auto r = conv2d_backward(value(e.inputs[0]), value(e.inputs[1]), e.stride, e.pad, g);
        accumulate(grads[e.inputs[0]], r.input);
        accumulate(grads[e.inputs[1]], r.weight);
        break;
      }
      case TapeOp::BatchNorm: {
        auto r = batchnorm_backward(value(e.inputs[0]), value(e.inputs[1]), value(e.inputs[2]),
                                    value(e.inputs[3]), value(e.inputs[4]), e.eps, g);
        accumulate(grads[e.inputs[0]], r.input);
        accumulate(grads[e.inputs[1]], r.gamma);
        accumulate(grads[e.inputs[2]], r.beta);
        accumulate(grads[e.inputs[3]], r.mean);
        accumulate(grads[e.inputs[4]], r.var);
        break;
      }
      case TapeOp::ReLU:
        accumulate(grads[e.inputs[0]], relu_backward(value(e.inputs[0]), g));
        break;
      case TapeOp::Upsample:
        accumulate(grads[e.inputs[0]],
                   bilinear_upsample_backward(value(e.inputs[0]), e.factor, e.align_corners, g));
        break;
      case TapeOp::ChannelPool:
        accumulate(grads[e.inputs[0]], channel_pool2_backward(value(e.inputs[0]), e.pool, g));
        break;
      case TapeOp::Concat: {
        std::vector<std::int64_t> channels;
        for (Value in : e.inputs) channels.push_back(values_[in].dims().at(1));
        auto parts = concat_channels_backward<T>(channels, g);
        for (std::size_t k = 0; k < parts.size(); ++k) accumulate(grads[e.inputs[k]], parts[k]);
        break;
      }
      case TapeOp::Add:
        accumulate(grads[e.inputs[0]], g);
        accumulate(grads[e.inputs[1]], g);
        break;
    }
  }
  return grads;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace uhrnet
