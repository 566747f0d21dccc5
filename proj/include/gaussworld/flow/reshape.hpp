// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gaussworld/core/autodiff.hpp"

namespace gw::flow {

using gw::ad::Var;

// The three attention layouts over a [T,V,C,h,w] grid. The first output
// dimension is the independent batch, the second is the attention
// sequence, the third the channel. All round-trips are bit-exact.

/// [T,V,C,h,w] -> [T*V, h*w, C]; element (t,v,c,y,x) lands at sequence
/// index t*V+v, token index y*w+x.
template <class T>
Var<T> reshape_spatial(const Var<T>& z) {
  const Shape& s = z->value.shape();
  GW_REQUIRE(s.size() == 5, "reshape_spatial wants [T,V,C,h,w]");
  auto p = ad::permute(z, {0, 1, 3, 4, 2});  // [T,V,h,w,C]
  return ad::reshape(p, {s[0] * s[1], s[3] * s[4], s[2]});
}

template <class T>
Var<T> unreshape_spatial(const Var<T>& tokens, const Shape& grid_shape) {
  const Shape& s = grid_shape;
  auto p = ad::reshape(tokens, {s[0], s[1], s[3], s[4], s[2]});
  return ad::permute(p, {0, 1, 4, 2, 3});
}

/// [T,V,C,h,w] -> [V*h*w, T, C] (attention along time).
template <class T>
Var<T> reshape_temporal(const Var<T>& z) {
  const Shape& s = z->value.shape();
  GW_REQUIRE(s.size() == 5, "reshape_temporal wants [T,V,C,h,w]");
  auto p = ad::permute(z, {1, 3, 4, 0, 2});  // [V,h,w,T,C]
  return ad::reshape(p, {s[1] * s[3] * s[4], s[0], s[2]});
}

template <class T>
Var<T> unreshape_temporal(const Var<T>& tokens, const Shape& grid_shape) {
  const Shape& s = grid_shape;
  auto p = ad::reshape(tokens, {s[1], s[3], s[4], s[0], s[2]});
  return ad::permute(p, {3, 0, 4, 1, 2});
}

/// [T,V,C,h,w] -> [T*h*w, V, C] (attention across views).
template <class T>
Var<T> reshape_crossview(const Var<T>& z) {
  const Shape& s = z->value.shape();
  GW_REQUIRE(s.size() == 5, "reshape_crossview wants [T,V,C,h,w]");
  auto p = ad::permute(z, {0, 3, 4, 1, 2});  // [T,h,w,V,C]
  return ad::reshape(p, {s[0] * s[3] * s[4], s[1], s[2]});
}

template <class T>
Var<T> unreshape_crossview(const Var<T>& tokens, const Shape& grid_shape) {
  const Shape& s = grid_shape;
  auto p = ad::reshape(tokens, {s[0], s[3], s[4], s[1], s[2]});
  return ad::permute(p, {0, 3, 4, 1, 2});
}

}  // namespace gw::flow
