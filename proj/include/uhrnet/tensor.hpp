#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uhrnet/error.hpp"

namespace uhrnet {

using Dims = std::vector<std::int64_t>;

inline std::int64_t element_count(const Dims& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::int64_t{1}, std::multiplies<>());
}

std::string dims_to_string(const Dims& dims);

// Dense row-major array with an optional gradient buffer of the same shape.
// NCHW when rank 4.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Dims dims, T fill = T{})
      : dims_(std::move(dims)), data_(static_cast<std::size_t>(element_count(dims_)), fill) {}
  BasicTensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != element_count(dims_)) {
      throw Error(ErrorCode::ShapeMismatch,
                  "data length " + std::to_string(data_.size()) + " does not match shape " +
                      dims_to_string(dims_));
    }
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::int64_t dim(std::size_t i) const { return dims_.at(i); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NCHW accessors; only meaningful for rank-4 tensors.
  std::int64_t n() const { return dims_.at(0); }
  std::int64_t c() const { return dims_.at(1); }
  std::int64_t h() const { return dims_.at(2); }
  std::int64_t w() const { return dims_.at(3); }
  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return data_[static_cast<std::size_t>(((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x)];
  }
  const T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return data_[static_cast<std::size_t>(((n * dims_[1] + c) * dims_[2] + y) * dims_[3] + x)];
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  std::span<T> grad() { ensure_grad(); return *grad_; }
  std::span<const T> grad() const { return grad_ ? std::span<const T>(*grad_) : std::span<const T>(); }
  void ensure_grad() {
    if (!grad_) grad_.emplace(data_.size(), T{});
  }
  void clear_grad() { grad_.reset(); }

  template <typename U>
  BasicTensor<U> cast() const {
    return BasicTensor<U>(dims_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const;

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_;
  std::vector<T> data_;
  std::optional<std::vector<T>> grad_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace uhrnet
