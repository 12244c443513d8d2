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

#include "flsim/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace flsim {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> s)
    : shape(std::move(s)), data(shape_product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (shape_product(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_string(shape));
  }
}

Tensor Tensor::zeros_like(const Tensor& other) { return Tensor(other.shape); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape.size()) {
    throw ShapeError("dimension index " + std::to_string(i) +
                     " out of range for shape " + shape_string(shape));
  }
  return shape[i];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void require_shape(const Tensor& t, const std::vector<std::size_t>& expected,
                   const std::string& what) {
  if (t.shape == expected) return;
  for (std::size_t i = 0; i < std::max(t.rank(), expected.size()); ++i) {
    const bool have = i < t.rank();
    const bool want = i < expected.size();
    if (!have || !want || t.shape[i] != expected[i]) {
      throw ShapeError(what + ": dimension " + std::to_string(i) +
                       " mismatch, got " + shape_string(t.shape) +
                       " expected " + shape_string(expected));
    }
  }
  throw ShapeError(what + ": shape mismatch, got " + shape_string(t.shape) +
                   " expected " + shape_string(expected));
}

void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) {
    throw Error(what + ": tensor contains non-finite values");
  }
}

}  // namespace flsim
