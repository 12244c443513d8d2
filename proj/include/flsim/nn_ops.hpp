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

#ifndef FLSIM_NN_OPS_HPP_
#define FLSIM_NN_OPS_HPP_

#include <cstdint>
#include <utility>

#include "flsim/tensor.hpp"

namespace flsim {

// 1D convolution (cross-correlation) with "same" zero padding.
//   input   [C_in, L]
//   kernels [C_out, C_in, K], K odd
//   bias    [C_out]
// output[c, i] = bias[c] + sum_{j,k} kernels[c, j, k] * padded_input[j, i + k]
Tensor conv1d_forward(const Tensor& input, const Tensor& kernels,
                      const Tensor& bias);

struct Conv1dGrads {
  Tensor input;
  Tensor kernels;
  Tensor bias;
};

// Exact analytic gradients of conv1d_forward.
Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& grad_out);

// Global average pooling: [C, L] -> [C], per-channel mean over length.
Tensor gap(const Tensor& input);
Tensor gap_backward(const Tensor& input, const Tensor& grad_out);

// Affine map W.x + b: input [N], weights [M, N], bias [M] -> [M].
Tensor dense_forward(const Tensor& input, const Tensor& weights,
                     const Tensor& bias);

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_out);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

struct SoftmaxXentResult {
  double loss;
  Tensor grad_logits;
};

// loss = -log softmax(logits)[label]; grad = softmax(logits) - one_hot(label).
// Computed with max-subtraction so extreme logits cannot overflow.
SoftmaxXentResult softmax_cross_entropy(const Tensor& logits,
                                        std::size_t label);

struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;

  static AdamState init(const Tensor& params) {
    return AdamState{Tensor::zeros_like(params), Tensor::zeros_like(params), 0};
  }
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update. Pure: returns the new parameters and state.
std::pair<Tensor, AdamState> adam_step(const Tensor& params,
                                       const Tensor& grads,
                                       const AdamState& state,
                                       const AdamConfig& cfg);

}  // namespace flsim

#endif  // FLSIM_NN_OPS_HPP_
