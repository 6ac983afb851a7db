#pragma once

#include <functional>
#include <span>
#include <vector>

#include "uhrnet/ops.hpp"

namespace uhrnet {

enum class TapeOp : std::uint8_t { Leaf, Conv2D, BatchNorm, ReLU, Upsample, ChannelPool, Concat, Add };

const char* to_string(TapeOp op);

// Records primitive applications in execution order and replays them in
// reverse to accumulate gradients. Confined to one thread.
template <typename T>
class Tape {
 public:
  using Value = std::size_t;

  Value leaf(BasicTensor<T> tensor);

  Value conv2d(Value x, Value weight, int stride, int pad);
  Value batchnorm(Value x, Value gamma, Value beta, Value mean, Value var, double eps);
  Value relu(Value x);
  Value upsample(Value x, int factor, bool align_corners);
  Value channel_pool(Value x, PoolMode mode);
  Value concat(std::span<const Value> xs);
  Value add(Value x, Value y);

  const BasicTensor<T>& value(Value v) const { return values_.at(v); }
  std::size_t size() const noexcept { return entries_.size(); }
  TapeOp op(Value v) const { return entries_.at(v).op; }

  // Reverse sweep seeded with out_grad at `output`. Returns one gradient per
  // recorded value (empty tensors for values that received no gradient).
  // `visit`, when set, sees every entry index in the order it is processed.
  std::vector<BasicTensor<T>> backward(Value output, const BasicTensor<T>& out_grad,
                                       const std::function<void(Value)>& visit = {}) const;

 private:
  struct Entry {
    TapeOp op;
    std::vector<Value> inputs;
    int stride = 1;
    int pad = 0;
    int factor = 1;
    bool align_corners = true;
    PoolMode pool = PoolMode::Average;
    double eps = 0.0;
  };

  Value push(Entry entry, BasicTensor<T> result);

  std::vector<Entry> entries_;
  std::vector<BasicTensor<T>> values_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace uhrnet
