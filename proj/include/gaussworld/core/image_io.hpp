// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <fstream>
#include <vector>

#include "gaussworld/core/tensor.hpp"

namespace gw {

/// Writes an [H,W,3] image with values in [0,1] as binary PPM (8-bit).
template <class T>
void write_ppm(const std::string& path, const Tensor<T>& img) {
  GW_REQUIRE(img.ndim() == 3 && img.dim(2) == 3, "write_ppm wants [H,W,3]");
  const i64 h = img.dim(0), w = img.dim(1);
  std::ofstream os(path, std::ios::binary);
  GW_REQUIRE(os.good(), "cannot open for writing: " + path);
  os << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(w * 3);
  for (i64 y = 0; y < h; ++y) {
    for (i64 x = 0; x < w * 3; ++x) {
      const double v = std::clamp(double(img[y * w * 3 + x]), 0.0, 1.0);
      row[x] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    os.write(reinterpret_cast<const char*>(row.data()), w * 3);
  }
}

/// Writes a depth map as 16-bit binary PGM. Values are quantized as
/// round(d / scale) and clamped to [0, 65535]; non-finite depth maps to
/// 65535. The scale is recorded in a PGM comment for readers.
template <class T>
void write_pgm16(const std::string& path, const Tensor<T>& depth,
                 double scale) {
  GW_REQUIRE(depth.ndim() == 2, "write_pgm16 wants [H,W]");
  const i64 h = depth.dim(0), w = depth.dim(1);
  std::ofstream os(path, std::ios::binary);
  GW_REQUIRE(os.good(), "cannot open for writing: " + path);
  os << "P5\n# depth_scale_meters_per_unit " << scale << "\n"
     << w << " " << h << "\n65535\n";
  std::vector<unsigned char> row(w * 2);
  for (i64 y = 0; y < h; ++y) {
    for (i64 x = 0; x < w; ++x) {
      const double d = double(depth[y * w + x]);
      long q = std::isfinite(d) ? std::lround(d / scale) : 65535;
      q = std::clamp(q, 0l, 65535l);
      row[x * 2] = static_cast<unsigned char>((q >> 8) & 0xff);  // big-endian
      row[x * 2 + 1] = static_cast<unsigned char>(q & 0xff);
    }
    os.write(reinterpret_cast<const char*>(row.data()), w * 2);
  }
}

}  // namespace gw
