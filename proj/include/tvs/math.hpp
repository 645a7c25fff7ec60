#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace tvs {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_i exp(args[i])) with max-subtraction; -inf for an all -inf input.
inline double logsumexp(std::span<const double> args) {
  double m = kNegInf;
  for (double a : args) m = std::max(m, a);
  if (m == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double a : args) sum += std::exp(a - m);
  return m + std::log(sum);
}

inline double logsumexp(const std::vector<double>& args) {
  return logsumexp(std::span<const double>(args));
}

// Streaming logsumexp: feed terms one at a time, read off the total at the end.
class OnlineLogSumExp {
 public:
  void add(double a) {
    if (a == kNegInf) return;
    if (a <= max_) {
      sum_ += std::exp(a - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - a) + 1.0;
      max_ = a;
    }
  }
  double value() const { return max_ == kNegInf ? kNegInf : max_ + std::log(sum_); }

 private:
  double max_ = kNegInf;
  double sum_ = 0.0;
};

inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double clamp01(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

// Pairwise (cascade) summation: deterministic tree, error O(log n) ulps.
inline double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
  return pairwise_sum(std::span<const double>(xs));
}

// Kahan compensated accumulator for long in-order reductions.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - c_;
    const double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

}  // namespace tvs
