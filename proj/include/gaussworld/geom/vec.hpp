// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

#include "gaussworld/core/common.hpp"

namespace gw {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  Vec3 cwise(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const { return *this / norm(); }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

struct Mat3 {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }

  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
};

/// Unit quaternion (w, x, y, z).
struct Quat {
  double w = 1, x = 0, y = 0, z = 0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }
  Quat normalized() const {
    const double n = norm();
    return {w / n, x / n, y / n, z / n};
  }
  Quat conj() const { return {w, -x, -y, -z}; }

  Quat operator*(const Quat& o) const {
    return {w * o.w - x * o.x - y * o.y - z * o.z,
            w * o.x + x * o.w + y * o.z - z * o.y,
            w * o.y - x * o.z + y * o.w + z * o.x,
            w * o.z + x * o.y - y * o.x + z * o.w};
  }

  static Quat from_axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 a = axis.normalized();
    const double h = 0.5 * angle_rad;
    const double s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
  }

  Mat3 to_matrix() const {
    Mat3 r;
    r(0, 0) = 1 - 2 * (y * y + z * z);
    r(0, 1) = 2 * (x * y - w * z);
    r(0, 2) = 2 * (x * z + w * y);
    r(1, 0) = 2 * (x * y + w * z);
    r(1, 1) = 1 - 2 * (x * x + z * z);
    r(1, 2) = 2 * (y * z - w * x);
    r(2, 0) = 2 * (x * z - w * y);
    r(2, 1) = 2 * (y * z + w * x);
    r(2, 2) = 1 - 2 * (x * x + y * y);
    return r;
  }

  static Quat from_matrix(const Mat3& m) {
    Quat q;
    const double tr = m(0, 0) + m(1, 1) + m(2, 2);
    if (tr > 0) {
      double s = std::sqrt(tr + 1.0) * 2;
      q.w = 0.25 * s;
      q.x = (m(2, 1) - m(1, 2)) / s;
      q.y = (m(0, 2) - m(2, 0)) / s;
      q.z = (m(1, 0) - m(0, 1)) / s;
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
      double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2;
      q.w = (m(2, 1) - m(1, 2)) / s;
      q.x = 0.25 * s;
      q.y = (m(0, 1) + m(1, 0)) / s;
      q.z = (m(0, 2) + m(2, 0)) / s;
    } else if (m(1, 1) > m(2, 2)) {
      double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2;
      q.w = (m(0, 2) - m(2, 0)) / s;
      q.x = (m(0, 1) + m(1, 0)) / s;
      q.y = 0.25 * s;
      q.z = (m(1, 2) + m(2, 1)) / s;
    } else {
      double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2;
      q.w = (m(1, 0) - m(0, 1)) / s;
      q.x = (m(0, 2) + m(2, 0)) / s;
      q.y = (m(1, 2) + m(2, 1)) / s;
      q.z = 0.25 * s;
    }
    return q.normalized();
  }
};

}  // namespace gw
