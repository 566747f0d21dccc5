// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "gaussworld/core/rng.hpp"

namespace gw::vae {

struct ContextSelection {
  std::vector<i64> context;  // 4 indices
  std::vector<i64> targets;  // 3 indices, may coincide with context
};

/// Context frames are the 1st, 7th, 13th and 19th of a 19-frame clip
/// (evenly spaced for other lengths). Targets are 3 distinct timesteps
/// drawn uniformly from the whole clip.
inline ContextSelection select_context(i64 clip_len, Rng& rng) {
  GW_REQUIRE(clip_len >= 4, "select_context needs at least 4 frames");
  ContextSelection sel;
  if (clip_len == 19) {
    sel.context = {0, 6, 12, 18};
  } else {
    for (i64 i = 0; i < 4; ++i)
      sel.context.push_back(
          i64(std::llround(double(i) * double(clip_len - 1) / 3.0)));
  }
  // 3 distinct draws via partial Fisher-Yates over [0, clip_len).
  std::vector<i64> pool(clip_len);
  for (i64 i = 0; i < clip_len; ++i) pool[i] = i;
  for (i64 i = 0; i < 3; ++i) {
    const i64 j = i + rng.below(clip_len - i);
    std::swap(pool[i], pool[j]);
    sel.targets.push_back(pool[i]);
  }
  return sel;
}

}  // namespace gw::vae
