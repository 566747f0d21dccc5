// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>
#include <span>
#include <vector>

#include "gaussworld/core/tensor.hpp"

namespace gw::harness {

constexpr double kPsnrCap = 99.0;  // finite cap for identical images

/// PSNR in dB for images in [0,1]: 10*log10(1/MSE).
template <class T>
double metric_psnr(std::span<const T> x, std::span<const T> xhat) {
  GW_REQUIRE(x.size() == xhat.size() && !x.empty(), "psnr size mismatch");
  double mse = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = double(x[i]) - double(xhat[i]);
    mse += d * d;
  }
  mse /= double(x.size());
  if (mse <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

/// Depth RMSE in meters over masked pixels.
template <class T>
double metric_drmse(std::span<const T> d, std::span<const T> dhat,
                    std::span<const T> mask) {
  GW_REQUIRE(d.size() == dhat.size() && d.size() == mask.size(),
             "drmse size mismatch");
  double acc = 0, n = 0;
  for (size_t i = 0; i < d.size(); ++i)
    if (mask[i] > T(0)) {
      const double e = double(d[i]) - double(dhat[i]);
      acc += e * e;
      n += 1;
    }
  GW_REQUIRE(n > 0, "drmse: empty mask");
  return std::sqrt(acc / n);
}

/// Mean absolute relative depth error |d - dhat| / d.
template <class T>
double metric_absrel(std::span<const T> d, std::span<const T> dhat,
                     std::span<const T> mask) {
  GW_REQUIRE(d.size() == dhat.size() && d.size() == mask.size(),
             "absrel size mismatch");
  double acc = 0, n = 0;
  for (size_t i = 0; i < d.size(); ++i)
    if (mask[i] > T(0)) {
      acc += std::abs(double(d[i]) - double(dhat[i])) / double(d[i]);
      n += 1;
    }
  GW_REQUIRE(n > 0, "absrel: empty mask");
  return acc / n;
}

/// Fraction of masked pixels with max(d/dhat, dhat/d) < 1.25.
template <class T>
double metric_delta1(std::span<const T> d, std::span<const T> dhat,
                     std::span<const T> mask) {
  GW_REQUIRE(d.size() == dhat.size() && d.size() == mask.size(),
             "delta1 size mismatch");
  double hit = 0, n = 0;
  for (size_t i = 0; i < d.size(); ++i)
    if (mask[i] > T(0)) {
      const double r = std::max(double(d[i]) / double(dhat[i]),
                                double(dhat[i]) / double(d[i]));
      hit += (r < 1.25) ? 1 : 0;
      n += 1;
    }
  GW_REQUIRE(n > 0, "delta1: empty mask");
  return hit / n;
}

/// Per-metric scalars with per-clip breakdown and reproducibility metadata.
struct MetricsReport {
  std::map<std::string, double> scalars;
  std::map<std::string, std::map<std::string, double>> per_clip;
  std::string checkpoint_id;
  std::string split;
  u64 seed = 0;

  void add(const std::string& metric, const std::string& clip, double value) {
    per_clip[metric][clip] = value;
  }

  void finalize() {
    for (auto& [metric, clips] : per_clip) {
      double acc = 0;
      for (auto& [id, v] : clips) acc += v;
      scalars[metric] = clips.empty() ? 0.0 : acc / double(clips.size());
    }
    for (auto& [metric, v] : scalars)
      GW_REQUIRE(std::isfinite(v), "metric " + metric + " not finite");
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "# metrics report\n";
    os << "checkpoint " << checkpoint_id << "\nsplit " << split << "\nseed "
       << seed << "\n";
    for (const auto& [metric, v] : scalars) os << metric << " " << v << "\n";
    for (const auto& [metric, clips] : per_clip)
      for (const auto& [id, v] : clips)
        os << "clip." << metric << "." << id << " " << v << "\n";
    return os.str();
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    GW_REQUIRE(os.good(), "cannot write report " + path);
    os << to_text();
  }
};

}  // namespace gw::harness
