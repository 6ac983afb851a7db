#include "uhrnet/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace uhrnet {

std::string dims_to_string(const Dims& dims) {
  std::ostringstream out;
  for (std::size_t i = 0; i < dims.size(); ++i) out << (i ? "x" : "") << dims[i];
  return out.str();
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;

namespace {

[[noreturn]] void shape_error(const std::string& what) {
  throw Error(ErrorCode::ShapeMismatch, what);
}

template <typename T>
void require_rank4(const BasicTensor<T>& x, const char* op) {
  if (x.rank() != 4) {
    shape_error(std::string(op) + ": expected an NCHW tensor, got shape " + dims_to_string(x.dims()));
  }
}

template <typename T>
void require_same_dims(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.dims() != b.dims()) {
    shape_error(std::string(op) + ": shape " + dims_to_string(a.dims()) + " vs " +
                dims_to_string(b.dims()));
  }
}

struct ConvGeometry {
  std::int64_t n, c, h, w;      // input
  std::int64_t oc, kh, kw;      // weight
  std::int64_t oh, ow;          // output
  int stride, pad;
  std::int64_t k() const { return c * kh * kw; }
  std::int64_t p() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride, int pad) {
  require_rank4(x, "conv2d");
  if (weight.rank() != 4) shape_error("conv2d: weight must be [outC, inC, kh, kw]");
  if (stride < 1 || pad < 0) shape_error("conv2d: invalid stride or padding");
  ConvGeometry g{x.n(), x.c(), x.h(), x.w(), weight.dim(0), weight.dim(2), weight.dim(3), 0, 0,
                 stride, pad};
  if (weight.dim(1) != g.c) {
    shape_error("conv2d: input has " + std::to_string(g.c) + " channels, weight expects " +
                std::to_string(weight.dim(1)));
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  if (g.oh < 1 || g.ow < 1) shape_error("conv2d: kernel larger than padded input");
  return g;
}

// Unfolds one image into a [C*kh*kw, OH*OW] matrix, zero outside the input.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  for (std::int64_t ch = 0; ch < g.c; ++ch) {
    const T* plane = image + ch * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        T* row = col + ((ch * g.kh + i) * g.kw + j) * g.p();
        for (std::int64_t y = 0; y < g.oh; ++y) {
          const std::int64_t iy = y * g.stride + i - g.pad;
          T* dst = row + y * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T{});
            continue;
          }
          const T* src = plane + iy * g.w;
          for (std::int64_t x = 0; x < g.ow; ++x) {
            const std::int64_t ix = x * g.stride + j - g.pad;
            dst[x] = (ix >= 0 && ix < g.w) ? src[ix] : T{};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
  for (std::int64_t ch = 0; ch < g.c; ++ch) {
    T* plane = image + ch * g.h * g.w;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((ch * g.kh + i) * g.kw + j) * g.p();
        for (std::int64_t y = 0; y < g.oh; ++y) {
          const std::int64_t iy = y * g.stride + i - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = plane + iy * g.w;
          const T* src = row + y * g.ow;
          for (std::int64_t x = 0; x < g.ow; ++x) {
            const std::int64_t ix = x * g.stride + j - g.pad;
            if (ix >= 0 && ix < g.w) dst[ix] += src[x];
          }
        }
      }
    }
  }
}

// out[o, p] = sum_k w[o, k] * col[k, p], accumulated in increasing k for every
// output element. Four output rows share each pass over col.
// out[rows, p] = w[rows, k] * col[k, p], all row-major.
void gemm_rows(const float* w, const float* col, std::int64_t rows, std::int64_t k, std::int64_t p, float* out) {
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<blasint>(rows), static_cast<blasint>(p),
              static_cast<blasint>(k), 1.0f, w, static_cast<blasint>(k), col, static_cast<blasint>(p), 0.0f, out,
              static_cast<blasint>(p));
}

void gemm_rows(const double* w, const double* col, std::int64_t rows, std::int64_t k, std::int64_t p, double* out) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<blasint>(rows), static_cast<blasint>(p),
              static_cast<blasint>(k), 1.0, w, static_cast<blasint>(k), col, static_cast<blasint>(p), 0.0, out,
              static_cast<blasint>(p));
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride, int pad) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  BasicTensor<T> out(Dims{g.n, g.oc, g.oh, g.ow});
  std::vector<T> col;
  if (!g.pointwise()) col.resize(static_cast<std::size_t>(g.k() * g.p()));
  for (std::int64_t b = 0; b < g.n; ++b) {
    const T* image = x.data().data() + b * g.c * g.h * g.w;
    const T* cols = image;
    if (!g.pointwise()) {
      im2col(image, g, col.data());
      cols = col.data();
    }
    gemm_rows(weight.data().data(), cols, g.oc, g.k(), g.p(), out.data().data() + b * g.oc * g.p());
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, int stride,
                             int pad, const BasicTensor<T>& out_grad) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  if (out_grad.dims() != Dims{g.n, g.oc, g.oh, g.ow}) {
    shape_error("conv2d_backward: gradient shape " + dims_to_string(out_grad.dims()));
  }
  ConvGrads<T> grads{BasicTensor<T>(x.dims()), BasicTensor<T>(weight.dims())};
  const std::int64_t k = g.k();
  const std::int64_t p = g.p();
  std::vector<T> col(static_cast<std::size_t>(k * p));
  std::vector<T> dcol(static_cast<std::size_t>(k * p));
  T* dw = grads.weight.data().data();
  const T* w = weight.data().data();
  for (std::int64_t b = 0; b < g.n; ++b) {
    const T* image = x.data().data() + b * g.c * g.h * g.w;
    const T* go = out_grad.data().data() + b * g.oc * p;
    im2col(image, g, col.data());
    // dW[o, k] += sum_p go[o, p] * col[k, p]
    for (std::int64_t o = 0; o < g.oc; ++o) {
      const T* gr = go + o * p;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T* cr = col.data() + kk * p;
        T acc{};
        for (std::int64_t j = 0; j < p; ++j) acc += gr[j] * cr[j];
        dw[o * k + kk] += acc;
      }
    }
    // dcol[k, p] = sum_o w[o, k] * go[o, p]
    std::fill(dcol.begin(), dcol.end(), T{});
    for (std::int64_t o = 0; o < g.oc; ++o) {
      const T* gr = go + o * p;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T a = w[o * k + kk];
        T* dr = dcol.data() + kk * p;
        for (std::int64_t j = 0; j < p; ++j) dr[j] += a * gr[j];
      }
    }
    col2im_add(dcol.data(), g, grads.input.data().data() + b * g.c * g.h * g.w);
  }
  return grads;
}

namespace {

template <typename T>
void check_bn_params(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                     const BasicTensor<T>& mean, const BasicTensor<T>& var, double eps) {
  require_rank4(x, "batchnorm");
  const auto c = static_cast<std::size_t>(x.c());
  for (const auto* p : {&gamma, &beta, &mean, &var}) {
    if (p->size() != c) {
      shape_error("batchnorm: parameter length " + std::to_string(p->size()) + " for " +
                  std::to_string(c) + " channels");
    }
  }
  if (!(eps > 0.0)) shape_error("batchnorm: eps must be positive");
}

}  // namespace

template <typename T>
BasicTensor<T> batchnorm_infer(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                               const BasicTensor<T>& beta, const BasicTensor<T>& mean,
                               const BasicTensor<T>& var, double eps) {
  check_bn_params(x, gamma, beta, mean, var, eps);
  BasicTensor<T> out(x.dims());
  const std::int64_t plane = x.h() * x.w();
  for (std::int64_t b = 0; b < x.n(); ++b) {
    for (std::int64_t ch = 0; ch < x.c(); ++ch) {
      const auto ci = static_cast<std::size_t>(ch);
      const T scale = gamma[ci] / static_cast<T>(std::sqrt(static_cast<double>(var[ci]) + eps));
      const T shift = beta[ci] - scale * mean[ci];
      const std::size_t base = static_cast<std::size_t>((b * x.c() + ch) * plane);
      for (std::int64_t i = 0; i < plane; ++i) out[base + i] = scale * x[base + i] + shift;
    }
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& beta, const BasicTensor<T>& mean,
                                     const BasicTensor<T>& var, double eps,
                                     const BasicTensor<T>& out_grad) {
  check_bn_params(x, gamma, beta, mean, var, eps);
  require_same_dims(x, out_grad, "batchnorm_backward");
  BatchNormGrads<T> g{BasicTensor<T>(x.dims()), BasicTensor<T>(gamma.dims()),
                      BasicTensor<T>(beta.dims()), BasicTensor<T>(mean.dims()),
                      BasicTensor<T>(var.dims())};
  const std::int64_t plane = x.h() * x.w();
  for (std::int64_t ch = 0; ch < x.c(); ++ch) {
    const auto ci = static_cast<std::size_t>(ch);
    const double denom = static_cast<double>(var[ci]) + eps;
    const T inv_std = static_cast<T>(1.0 / std::sqrt(denom));
    T sum_g{}, sum_g_centered{};
    for (std::int64_t b = 0; b < x.n(); ++b) {
      const std::size_t base = static_cast<std::size_t>((b * x.c() + ch) * plane);
      for (std::int64_t i = 0; i < plane; ++i) {
        const T go = out_grad[base + i];
        g.input[base + i] = go * gamma[ci] * inv_std;
        sum_g += go;
        sum_g_centered += go * (x[base + i] - mean[ci]);
      }
    }
    g.gamma[ci] = sum_g_centered * inv_std;
    g.beta[ci] = sum_g;
    g.mean[ci] = -sum_g * gamma[ci] * inv_std;
    // d/dvar of (var + eps)^(-1/2) is -(1/2)(var + eps)^(-3/2)
    g.var[ci] = static_cast<T>(-0.5 * static_cast<double>(gamma[ci] * sum_g_centered) /
                               (denom * std::sqrt(denom)));
  }
  return g;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{} ? x[i] : T{};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& out_grad) {
  require_same_dims(x, out_grad, "relu_backward");
  BasicTensor<T> g(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{} ? out_grad[i] : T{};
  return g;
}

namespace {

template <typename T>
struct AxisSampling {
  std::vector<std::int64_t> lo, hi;
  std::vector<T> frac;
};

template <typename T>
AxisSampling<T> axis_sampling(std::int64_t in, std::int64_t out, bool align_corners) {
  AxisSampling<T> s;
  s.lo.resize(static_cast<std::size_t>(out));
  s.hi.resize(static_cast<std::size_t>(out));
  s.frac.resize(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    double src;
    if (align_corners) {
      src = (out > 1) ? static_cast<double>(o) * static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    } else {
      src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
      src = std::max(src, 0.0);
    }
    auto lo = static_cast<std::int64_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    const std::int64_t hi = std::min(lo + 1, in - 1);
    const auto oi = static_cast<std::size_t>(o);
    s.lo[oi] = lo;
    s.hi[oi] = hi;
    s.frac[oi] = static_cast<T>(src - static_cast<double>(lo));
  }
  return s;
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& x, int factor, bool align_corners) {
  require_rank4(x, "bilinear_upsample");
  if (factor < 1) shape_error("bilinear_upsample: factor must be >= 1");
  const std::int64_t oh = x.h() * factor;
  const std::int64_t ow = x.w() * factor;
  const auto ys = axis_sampling<T>(x.h(), oh, align_corners);
  const auto xs = axis_sampling<T>(x.w(), ow, align_corners);
  BasicTensor<T> out(Dims{x.n(), x.c(), oh, ow});
  for (std::int64_t b = 0; b < x.n(); ++b) {
    for (std::int64_t ch = 0; ch < x.c(); ++ch) {
      for (std::int64_t y = 0; y < oh; ++y) {
        const auto yi = static_cast<std::size_t>(y);
        const T fy = ys.frac[yi];
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          const auto xi = static_cast<std::size_t>(xo);
          const T fx = xs.frac[xi];
          const T top = (T{1} - fx) * x.at(b, ch, ys.lo[yi], xs.lo[xi]) + fx * x.at(b, ch, ys.lo[yi], xs.hi[xi]);
          const T bot = (T{1} - fx) * x.at(b, ch, ys.hi[yi], xs.lo[xi]) + fx * x.at(b, ch, ys.hi[yi], xs.hi[xi]);
          out.at(b, ch, y, xo) = (T{1} - fy) * top + fy * bot;
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> bilinear_upsample_backward(const BasicTensor<T>& x, int factor, bool align_corners,
                                          const BasicTensor<T>& out_grad) {
  require_rank4(x, "bilinear_upsample_backward");
  const std::int64_t oh = x.h() * factor;
  const std::int64_t ow = x.w() * factor;
  if (out_grad.dims() != Dims{x.n(), x.c(), oh, ow}) {
    shape_error("bilinear_upsample_backward: gradient shape " + dims_to_string(out_grad.dims()));
  }
  const auto ys = axis_sampling<T>(x.h(), oh, align_corners);
  const auto xs = axis_sampling<T>(x.w(), ow, align_corners);
  BasicTensor<T> g(x.dims());
  for (std::int64_t b = 0; b < x.n(); ++b) {
    for (std::int64_t ch = 0; ch < x.c(); ++ch) {
      for (std::int64_t y = 0; y < oh; ++y) {
        const auto yi = static_cast<std::size_t>(y);
        const T fy = ys.frac[yi];
        for (std::int64_t xo = 0; xo < ow; ++xo) {
          const auto xi = static_cast<std::size_t>(xo);
          const T fx = xs.frac[xi];
          const T go = out_grad.at(b, ch, y, xo);
          g.at(b, ch, ys.lo[yi], xs.lo[xi]) += (T{1} - fy) * (T{1} - fx) * go;
          g.at(b, ch, ys.lo[yi], xs.hi[xi]) += (T{1} - fy) * fx * go;
          g.at(b, ch, ys.hi[yi], xs.lo[xi]) += fy * (T{1} - fx) * go;
          g.at(b, ch, ys.hi[yi], xs.hi[xi]) += fy * fx * go;
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> channel_pool2(const BasicTensor<T>& x, PoolMode mode) {
  require_rank4(x, "channel_pool2");
  if (x.c() % 2 != 0) {
    throw Error(ErrorCode::OddChannelCount,
                "channel_pool2: channel count " + std::to_string(x.c()) + " is odd");
  }
  const std::int64_t oc = x.c() / 2;
  const std::int64_t plane = x.h() * x.w();
  BasicTensor<T> out(Dims{x.n(), oc, x.h(), x.w()});
  for (std::int64_t b = 0; b < x.n(); ++b) {
    for (std::int64_t ch = 0; ch < oc; ++ch) {
      const T* a = x.data().data() + (b * x.c() + 2 * ch) * plane;
      const T* c = a + plane;
      T* dst = out.data().data() + (b * oc + ch) * plane;
      if (mode == PoolMode::Average) {
        for (std::int64_t i = 0; i < plane; ++i) dst[i] = (a[i] + c[i]) / T{2};
      } else {
        for (std::int64_t i = 0; i < plane; ++i) dst[i] = std::max(a[i], c[i]);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> channel_pool2_backward(const BasicTensor<T>& x, PoolMode mode,
                                      const BasicTensor<T>& out_grad) {
  require_rank4(x, "channel_pool2_backward");
  const std::int64_t oc = x.c() / 2;
  if (x.c() % 2 != 0 || out_grad.dims() != Dims{x.n(), oc, x.h(), x.w()}) {
    shape_error("channel_pool2_backward: gradient shape " + dims_to_string(out_grad.dims()));
  }
  const std::int64_t plane = x.h() * x.w();
  BasicTensor<T> g(x.dims());
  for (std::int64_t b = 0; b < x.n(); ++b) {
    for (std::int64_t ch = 0; ch < oc; ++ch) {
      const std::int64_t first = (b * x.c() + 2 * ch) * plane;
      const T* go = out_grad.data().data() + (b * oc + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const auto a = static_cast<std::size_t>(first + i);
        const auto c = static_cast<std::size_t>(first + plane + i);
        if (mode == PoolMode::Average) {
          g[a] = go[i] / T{2};
          g[c] = go[i] / T{2};
        } else if (x[a] >= x[c]) {
          g[a] = go[i];
        } else {
          g[c] = go[i];
        }
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> xs) {
  if (xs.empty()) shape_error("concat_channels: no inputs");
  const BasicTensor<T>& first = *xs.front();
  require_rank4(first, "concat_channels");
  std::int64_t channels = 0;
  for (const auto* x : xs) {
    require_rank4(*x, "concat_channels");
    if (x->n() != first.n() || x->h() != first.h() || x->w() != first.w()) {
      shape_error("concat_channels: shape " + dims_to_string(x->dims()) + " vs " +
                  dims_to_string(first.dims()));
    }
    channels += x->c();
  }
  const std::int64_t plane = first.h() * first.w();
  BasicTensor<T> out(Dims{first.n(), channels, first.h(), first.w()});
  for (std::int64_t b = 0; b < first.n(); ++b) {
    T* dst = out.data().data() + b * channels * plane;
    for (const auto* x : xs) {
      const std::int64_t len = x->c() * plane;
      const T* src = x->data().data() + b * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> concat_channels_backward(std::span<const std::int64_t> channels,
                                                     const BasicTensor<T>& out_grad) {
  require_rank4(out_grad, "concat_channels_backward");
  std::int64_t total = 0;
  for (auto c : channels) total += c;
  if (total != out_grad.c()) shape_error("concat_channels_backward: channel split does not match");
  const std::int64_t plane = out_grad.h() * out_grad.w();
  std::vector<BasicTensor<T>> parts;
  for (auto c : channels) parts.emplace_back(Dims{out_grad.n(), c, out_grad.h(), out_grad.w()});
  for (std::int64_t b = 0; b < out_grad.n(); ++b) {
    const T* src = out_grad.data().data() + b * total * plane;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const std::int64_t len = channels[i] * plane;
      std::copy(src, src + len, parts[i].data().data() + b * len);
      src += len;
    }
  }
  return parts;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& x, const BasicTensor<T>& y) {
  require_same_dims(x, y, "add");
  BasicTensor<T> out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return out;
}

#define UHRNET_INSTANTIATE_OPS(T)                                                                  \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, int, int);          \
  template ConvGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, int, int,     \
                                        const BasicTensor<T>&);                                    \
  template BasicTensor<T> batchnorm_infer(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                          const BasicTensor<T>&, const BasicTensor<T>&,            \
                                          const BasicTensor<T>&, double);                          \
  template BatchNormGrads<T> batchnorm_backward(                                                   \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,  \
      const BasicTensor<T>&, double, const BasicTensor<T>&);                                       \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                             \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> bilinear_upsample(const BasicTensor<T>&, int, bool);                     \
  template BasicTensor<T> bilinear_upsample_backward(const BasicTensor<T>&, int, bool,             \
                                                     const BasicTensor<T>&);                       \
  template BasicTensor<T> channel_pool2(const BasicTensor<T>&, PoolMode);                          \
  template BasicTensor<T> channel_pool2_backward(const BasicTensor<T>&, PoolMode,                  \
                                                 const BasicTensor<T>&);                           \
  template BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const>);                 \
  template std::vector<BasicTensor<T>> concat_channels_backward(std::span<const std::int64_t>,     \
                                                                const BasicTensor<T>&);            \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);

UHRNET_INSTANTIATE_OPS(float)
UHRNET_INSTANTIATE_OPS(double)

#undef UHRNET_INSTANTIATE_OPS

}  // namespace uhrnet
