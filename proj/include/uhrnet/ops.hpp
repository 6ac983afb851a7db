#pragma once

// Forward and backward kernels for every primitive the layer graphs use.
// All kernels are pure: they allocate and return new tensors.

#include <span>
#include <vector>

#include "uhrnet/tensor.hpp"

namespace uhrnet {

enum class PoolMode : std::uint8_t { Average, Max };

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BasicTensor<T> mean;
  BasicTensor<T> var;
};

template <typename T>
struct AddGrads {
  BasicTensor<T> lhs;
  BasicTensor<T> rhs;
};

// Cross-correlation (no kernel flip). weight is [outC, inC, kh, kw].
// Output height is (H + 2*pad - kh) / stride + 1, likewise for width.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride, int pad);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride,
                             int pad, const BasicTensor<T>& out_grad);

// Inference-mode batch normalization; all parameter tensors have length C.
template <typename T>
BasicTensor<T> batchnorm_infer(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                               const BasicTensor<T>& beta, const BasicTensor<T>& mean,
                               const BasicTensor<T>& var, double eps);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& beta, const BasicTensor<T>& mean,
                                     const BasicTensor<T>& var, double eps,
                                     const BasicTensor<T>& out_grad);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

// Derivative at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& out_grad);

// Bilinear resize by an integer factor. With align_corners the corner pixels of
// input and output coincide; a single-pixel axis upsamples to a constant.
template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, int factor, bool align_corners = true);

template <typename T>
BasicTensor<T> bilinear_upsample_backward(const BasicTensor<T>& x, int factor, bool align_corners,
                                          const BasicTensor<T>& out_grad);

// Non-overlapping pooling along the channel axis with kernel 2, stride 2.
template <typename T>
BasicTensor<T> channel_pool2(const BasicTensor<T>& x, PoolMode mode = PoolMode::Average);

template <typename T>
BasicTensor<T> channel_pool2_backward(const BasicTensor<T>& x, PoolMode mode,
                                      const BasicTensor<T>& out_grad);

template <typename T>
BasicTensor<T> channel_avg_pool2(const BasicTensor<T>& x) {
  return channel_pool2(x, PoolMode::Average);
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> xs);

template <typename T>
BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& xs) {
  std::vector<const BasicTensor<T>*> ptrs;
  for (const auto& x : xs) ptrs.push_back(&x);
  return concat_channels<T>(std::span<const BasicTensor<T>* const>(ptrs));
}

// Splits out_grad back into per-input slices with the given channel counts.
template <typename T>
std::vector<BasicTensor<T>> concat_channels_backward(std::span<const std::int64_t> channels,
                                                     const BasicTensor<T>& out_grad);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& x, const BasicTensor<T>& y);

}  // namespace uhrnet
