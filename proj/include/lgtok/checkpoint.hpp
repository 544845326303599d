#pragma once

// Checkpoint container:
//
//   "LGTOK1\n"
//   <single-line UTF-8 JSON manifest>"\n\n"
//   <concatenated little-endian float32 arrays>
//
// The manifest object carries {"tensors": [{"name", "shape", "offset"}...],
// "meta": {...}} where offsets are in bytes from the start of the payload.
// Loading verifies the header, each tensor's extent and the total length.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "lgtok/autograd.hpp"
#include "lgtok/tensor.hpp"

namespace lgtok::nn {

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor>> tensors;

  void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  // Adds every parameter value of the store under prefix + name.
  void add_params(const ParamStore& store, const std::string& prefix = "");
  // Overwrites the values of every parameter in the store from prefix +
  // name; missing or mis-shaped tensors raise Error{kFormat}.
  void load_params(ParamStore& store, const std::string& prefix = "") const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// FNV-1a 64 of the compact JSON dump; keys are ordered so equal objects hash equal.
std::uint64_t json_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

}  // namespace lgtok::nn
