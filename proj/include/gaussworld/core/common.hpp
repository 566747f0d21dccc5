// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace gw {

using i64 = std::int64_t;
using i32 = std::int32_t;
using u64 = std::uint64_t;
using u32 = std::uint32_t;

/// Error type thrown across the library for contract violations and I/O
/// failures. Messages are meant to be actionable (they name the offending
/// clip, pixel, or key where the contract says so).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

#define GW_REQUIRE(cond, msg)            \
  do {                                   \
    if (!(cond)) ::gw::fail(msg);        \
  } while (0)

}  // namespace gw
