// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <fstream>
#include <map>

#include "gaussworld/core/nn.hpp"
#include "gaussworld/core/optim.hpp"

namespace gw::harness {

/// Checkpoint container: training step, verbatim config echo, and named
/// f32 tensors (parameters, optimizer moments, derived statistics).
/// save -> load -> save is byte-identical.
struct Checkpoint {
  i64 step = 0;
  std::string config_echo;
  std::map<std::string, Tensor<float>> tensors;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  GW_REQUIRE(os.good(), "cannot write checkpoint " + path);
  os << "GWCKPT 1\n";
  os << "step " << ckpt.step << "\n";
  os << "config_bytes " << ckpt.config_echo.size() << "\n";
  os.write(ckpt.config_echo.data(),
           static_cast<std::streamsize>(ckpt.config_echo.size()));
  os << "\ntensors " << ckpt.tensors.size() << "\n";
  for (const auto& [name, t] : ckpt.tensors) {
    os << name << " f32";
    os << " " << t.ndim();
    for (i64 d : t.shape()) os << " " << d;
    os << "\n";
  }
  os << "data\n";
  for (const auto& [name, t] : ckpt.tensors)
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(float)));
  GW_REQUIRE(os.good(), "short checkpoint write: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  GW_REQUIRE(is.good(), "cannot read checkpoint " + path);
  Checkpoint ckpt;
  std::string word;
  int version;
  is >> word >> version;
  GW_REQUIRE(word == "GWCKPT" && version == 1, "bad checkpoint magic: " + path);
  is >> word >> ckpt.step;
  GW_REQUIRE(word == "step", "checkpoint parse error (step)");
  size_t nbytes;
  is >> word >> nbytes;
  GW_REQUIRE(word == "config_bytes", "checkpoint parse error (config)");
  is.get();  // newline
  ckpt.config_echo.resize(nbytes);
  is.read(ckpt.config_echo.data(), static_cast<std::streamsize>(nbytes));
  size_t count;
  is >> word >> count;
  GW_REQUIRE(word == "tensors", "checkpoint parse error (tensors)");
  std::vector<std::pair<std::string, Shape>> entries;
  for (size_t i = 0; i < count; ++i) {
    std::string name, dtype;
    size_t nd;
    is >> name >> dtype >> nd;
    GW_REQUIRE(dtype == "f32", "unsupported checkpoint dtype " + dtype);
    Shape s(nd);
    for (auto& d : s) is >> d;
    entries.push_back({name, std::move(s)});
  }
  is >> word;
  GW_REQUIRE(word == "data", "checkpoint parse error (data)");
  is.get();
  for (auto& [name, shape] : entries) {
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    GW_REQUIRE(is.good(), "truncated checkpoint: " + path);
    ckpt.tensors.emplace(name, std::move(t));
  }
  return ckpt;
}

/// Packs parameters + AdamW moments into a checkpoint.
inline Checkpoint pack_state(i64 step, const std::string& config_echo,
                             const nn::ParamStore<float>& params,
                             nn::AdamW<float>* opt,
                             const std::map<std::string, Tensor<float>>& extra = {}) {
  Checkpoint ckpt;
  ckpt.step = step;
  ckpt.config_echo = config_echo;
  for (const auto& [name, p] : params.params())
    ckpt.tensors.emplace("param." + name, p->value);
  if (opt) {
    for (const auto& [name, m] : opt->moments1())
      ckpt.tensors.emplace("adam.m." + name, m);
    for (const auto& [name, v] : opt->moments2())
      ckpt.tensors.emplace("adam.v." + name, v);
    Tensor<float> t(Shape{1}, static_cast<float>(opt->steps_taken()));
    ckpt.tensors.emplace("adam.steps", std::move(t));
  }
  for (const auto& [name, t] : extra) ckpt.tensors.emplace("meta." + name, t);
  return ckpt;
}

/// Restores parameters (and optionally optimizer moments) in place.
inline void unpack_state(const Checkpoint& ckpt, nn::ParamStore<float>& params,
                         nn::AdamW<float>* opt = nullptr) {
  for (auto& [name, p] : params.params()) {
    auto it = ckpt.tensors.find("param." + name);
    GW_REQUIRE(it != ckpt.tensors.end(), "checkpoint missing parameter " + name);
    GW_REQUIRE(it->second.shape() == p->value.shape(),
               "checkpoint shape mismatch for " + name);
    p->value = it->second;
  }
  if (opt) {
    for (auto& [name, p] : params.params()) {
      auto im = ckpt.tensors.find("adam.m." + name);
      auto iv = ckpt.tensors.find("adam.v." + name);
      if (im != ckpt.tensors.end()) opt->moments1()[name] = im->second;
      if (iv != ckpt.tensors.end()) opt->moments2()[name] = iv->second;
    }
    auto is = ckpt.tensors.find("adam.steps");
    if (is != ckpt.tensors.end())
      opt->set_steps_taken(static_cast<i64>(is->second[0]));
  }
}

}  // namespace gw::harness
