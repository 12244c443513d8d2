// Copyright 2026 The flsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FLSIM_CONTAINER_HPP_
#define FLSIM_CONTAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flsim/tensor.hpp"

namespace flsim {

// Self-describing binary container: a JSON metadata block plus named
// shape-tagged float64 tensors. Checkpoints, segment files, and the
// augmentation pool all use this format. Round-trips are bit-exact because
// float payloads are stored as raw IEEE-754 bit patterns (little-endian).
//
// Layout:
//   "FLSC" | u32 version | u64 meta_len | meta (UTF-8 JSON)
//   | u64 n_entries | { u64 name_len | name | u64 ndim | u64 dims[] | f64 data[] }*
struct Container {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor* find(const std::string& name) const;
  const Tensor& require(const std::string& name) const;
};

class ContainerError : public Error {
 public:
  using Error::Error;
};

std::vector<std::uint8_t> serialize_container(const Container& c);
Container parse_container(const std::vector<std::uint8_t>& bytes);

void write_container(const Container& c, const std::string& path);
Container read_container(const std::string& path);

// FNV-1a/64 of the serialized bytes, as a fixed-width hex string. Used as the
// payload digest in event logs and for pool-identity checks.
std::string container_digest(const Container& c);
std::string bytes_digest(const std::vector<std::uint8_t>& bytes);

}  // namespace flsim

#endif  // FLSIM_CONTAINER_HPP_
