#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace swirl {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(x))) with max subtraction; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> x) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - m);
  return m + std::log(acc);
}

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

/// In-place softmax of logits / temperature.
inline void softmax_inplace(std::span<double> x, double temperature = 1.0) {
  double m = kNegInf;
  for (double v : x) m = std::max(m, v);
  double acc = 0.0;
  for (double& v : x) {
    v = std::exp((v - m) / temperature);
    acc += v;
  }
  for (double& v : x) v /= acc;
}

}  // namespace swirl
