// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "gaussworld/core/common.hpp"
#include "gaussworld/core/rng.hpp"

namespace gw {

using Shape = std::vector<i64>;

inline i64 shape_numel(const Shape& s) {
  i64 n = 1;
  for (i64 d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

/// Dense row-major tensor. Always contiguous; ops produce fresh storage.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    GW_REQUIRE(static_cast<i64>(data_.size()) == shape_numel(shape_),
               "tensor data size mismatches shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  static Tensor randn(Shape s, Rng& rng, T stddev = T(1)) {
    Tensor t(std::move(s));
    for (auto& v : t.data_) v = static_cast<T>(rng.normal()) * stddev;
    return t;
  }
  static Tensor uniform(Shape s, Rng& rng, T lo, T hi) {
    Tensor t(std::move(s));
    for (auto& v : t.data_) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  const Shape& shape() const { return shape_; }
  i64 dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  i64 numel() const { return static_cast<i64>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](i64 i) { return data_[i]; }
  const T& operator[](i64 i) const { return data_[i]; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  Tensor reshaped(Shape s) const {
    GW_REQUIRE(shape_numel(s) == numel(),
               "reshape " + shape_str(shape_) + " -> " + shape_str(s));
    Tensor out = *this;
    out.shape_ = std::move(s);
    return out;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (i64 i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  Shape strides() const {
    Shape st(shape_.size());
    i64 acc = 1;
    for (i64 i = static_cast<i64>(shape_.size()) - 1; i >= 0; --i) {
      st[i] = acc;
      acc *= shape_[i];
    }
    return st;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  GW_REQUIRE(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  double m = 0;
  for (i64 i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

}  // namespace gw
