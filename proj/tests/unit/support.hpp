#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "uhrnet/tensor.hpp"

namespace testing {

template <typename T>
uhrnet::BasicTensor<T> uniform(const uhrnet::Dims& dims, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  uhrnet::BasicTensor<T> t(dims);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double max_abs_diff(const uhrnet::BasicTensor<T>& a, const uhrnet::BasicTensor<T>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double rel_err(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

}  // namespace testing
