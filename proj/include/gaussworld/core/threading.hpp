// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <omp.h>

extern "C" void openblas_set_num_threads(int);

namespace gw {

// All parallel loops in the library use a fixed thread count and static
// partitions, so two runs of the same binary with the same seed produce
// identical bits. GEMM always runs OpenBLAS sequentially; parallelism is
// applied above it by splitting output rows.
//
// GW_STRICT=1 pins everything to one thread (the documented deterministic
// strict mode). GW_THREADS=n overrides the default thread count.
inline int thread_count() {
  static int n = [] {
    if (const char* s = std::getenv("GW_STRICT"); s && s[0] == '1') return 1;
    if (const char* s = std::getenv("GW_THREADS"); s && *s) {
      int v = std::atoi(s);
      if (v >= 1) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp<unsigned>(hc, 1u, 16u));
  }();
  return n;
}

inline void init_threading() {
  static bool done = [] {
    openblas_set_num_threads(1);
    omp_set_num_threads(thread_count());
    omp_set_dynamic(0);
    return true;
  }();
  (void)done;
}

inline bool strict_mode() {
  const char* s = std::getenv("GW_STRICT");
  return s && s[0] == '1';
}

}  // namespace gw
