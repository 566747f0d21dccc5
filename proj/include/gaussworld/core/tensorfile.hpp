// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gaussworld/core/tensor.hpp"

namespace gw {

// Flat binary tensor container: a small text header (magic, dtype, shape)
// followed by raw little-endian data. Inspectable with `head`, loads
// bit-exactly.

namespace detail {
template <class T>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
  return "f32";
}
template <>
inline const char* dtype_name<double>() {
  return "f64";
}
}  // namespace detail

template <class T>
void write_tensor_file(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  GW_REQUIRE(os.good(), "cannot open for writing: " + path);
  os << "gwtensor 1\n";
  os << "dtype " << detail::dtype_name<T>() << "\n";
  os << "shape";
  for (i64 d : t.shape()) os << " " << d;
  os << "\ndata\n";
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(T)));
  GW_REQUIRE(os.good(), "short write: " + path);
}

template <class T>
Tensor<T> read_tensor_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  GW_REQUIRE(is.good(), "cannot open tensor file: " + path);
  std::string line;
  std::getline(is, line);
  GW_REQUIRE(line == "gwtensor 1", "bad tensor file magic in " + path);
  std::getline(is, line);
  GW_REQUIRE(line == std::string("dtype ") + detail::dtype_name<T>(),
             "dtype mismatch in " + path + " (" + line + ")");
  std::getline(is, line);
  GW_REQUIRE(line.rfind("shape", 0) == 0, "missing shape in " + path);
  Shape shape;
  {
    std::istringstream ss(line.substr(5));
    i64 d;
    while (ss >> d) shape.push_back(d);
  }
  std::getline(is, line);
  GW_REQUIRE(line == "data", "missing data marker in " + path);
  Tensor<T> t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(T)));
  GW_REQUIRE(is.gcount() ==
                 static_cast<std::streamsize>(t.numel() * sizeof(T)),
             "truncated tensor file: " + path);
  return t;
}

}  // namespace gw
