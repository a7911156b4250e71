#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace crfgen {

// Dense row-major array of doubles. Rank 0 is a scalar (one element).
struct Array {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(count(shape), fill) {}
  Array(std::vector<std::size_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != count(shape))
      throw std::invalid_argument("array: shape/data size mismatch");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static Array scalar(double v) { return Array({}, {v}); }
  static Array vec(std::vector<double> d) {
    std::size_t n = d.size();
    return Array({n}, std::move(d));
  }
  static Array zeros_like(const Array& a) { return Array(a.shape); }

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return shape.empty(); }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at2(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at2(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  double value() const {
    if (data.size() != 1) throw std::logic_error("array: value() on non-scalar");
    return data[0];
  }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(),
                       [](double x) { return std::isfinite(x); });
  }
};

inline bool shape_eq(const Array& a, const Array& b) { return a.shape == b.shape; }

inline std::string shape_str(const Array& a) {
  std::string s = "[";
  for (std::size_t i = 0; i < a.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(a.shape[i]);
  }
  return s + "]";
}

// log sum exp of a non-empty vector, shifted by the max so that entries up to
// about 1e6 in magnitude never overflow.
inline double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("empty reduction");
  double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;  // all -inf, or a stray inf/nan propagates
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

inline double logsumexp(const std::vector<double>& v) {
  return logsumexp(std::span<const double>(v));
}

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace crfgen
