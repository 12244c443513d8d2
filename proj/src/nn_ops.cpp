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

#include "flsim/nn_ops.hpp"

#include <algorithm>
#include <cmath>

namespace flsim {

namespace {

void check_conv_shapes(const Tensor& input, const Tensor& kernels,
                       const Tensor* bias) {
  if (input.rank() != 2) {
    throw ShapeError("conv1d: input must be rank 2 [C_in, L], got " +
                     shape_string(input.shape));
  }
  if (kernels.rank() != 3) {
    throw ShapeError("conv1d: kernels must be rank 3 [C_out, C_in, K], got " +
                     shape_string(kernels.shape));
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw ShapeError("conv1d: dimension 1 of kernels (" +
                     std::to_string(kernels.dim(1)) +
                     ") must equal input channels (" +
                     std::to_string(input.dim(0)) + ")");
  }
  if (kernels.dim(2) % 2 == 0) {
    throw ShapeError("conv1d: kernel width must be odd, got " +
                     std::to_string(kernels.dim(2)));
  }
  if (bias != nullptr && bias->shape != std::vector<std::size_t>{kernels.dim(0)}) {
    throw ShapeError("conv1d: dimension 0 of bias must equal C_out (" +
                     std::to_string(kernels.dim(0)) + "), got " +
                     shape_string(bias->shape));
  }
}

}  // namespace

Tensor conv1d_forward(const Tensor& input, const Tensor& kernels,
                      const Tensor& bias) {
  check_conv_shapes(input, kernels, &bias);
  const std::size_t c_in = input.dim(0);
  const std::size_t len = input.dim(1);
  const std::size_t c_out = kernels.dim(0);
  const std::size_t k = kernels.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);

  Tensor out({c_out, len});
  for (std::size_t c = 0; c < c_out; ++c) {
    double* out_row = &out.data[c * len];
    std::fill(out_row, out_row + len, bias.at(c));
    for (std::size_t j = 0; j < c_in; ++j) {
      const double* in_row = &input.data[j * len];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double w = kernels.at(c, j, kk);
        if (w == 0.0) continue;
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - pad;
        const std::size_t lo =
            static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
        const std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(len),
            static_cast<std::ptrdiff_t>(len) - shift));
        for (std::size_t i = lo; i < hi; ++i) {
          out_row[i] += w * in_row[i + shift];
        }
      }
    }
  }
  return out;
}

Conv1dGrads conv1d_backward(const Tensor& input, const Tensor& kernels,
                            const Tensor& grad_out) {
  check_conv_shapes(input, kernels, nullptr);
  require_shape(grad_out, {kernels.dim(0), input.dim(1)}, "conv1d grad_out");
  const std::size_t c_in = input.dim(0);
  const std::size_t len = input.dim(1);
  const std::size_t c_out = kernels.dim(0);
  const std::size_t k = kernels.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);

  Conv1dGrads g{Tensor::zeros_like(input), Tensor::zeros_like(kernels),
                Tensor({c_out})};

  for (std::size_t c = 0; c < c_out; ++c) {
    const double* go_row = &grad_out.data[c * len];
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += go_row[i];
    g.bias.at(c) = acc;

    for (std::size_t j = 0; j < c_in; ++j) {
      const double* in_row = &input.data[j * len];
      double* gi_row = &g.input.data[j * len];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - pad;
        const std::size_t lo =
            static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -shift));
        const std::size_t hi = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
            static_cast<std::ptrdiff_t>(len),
            static_cast<std::ptrdiff_t>(len) - shift));
        double wg = 0.0;
        const double w = kernels.at(c, j, kk);
        for (std::size_t i = lo; i < hi; ++i) {
          wg += go_row[i] * in_row[i + shift];
          gi_row[i + shift] += w * go_row[i];
        }
        g.kernels.at(c, j, kk) += wg;
      }
    }
  }
  return g;
}

Tensor gap(const Tensor& input) {
  if (input.rank() != 2) {
    throw ShapeError("gap: input must be rank 2 [C, L], got " +
                     shape_string(input.shape));
  }
  const std::size_t c = input.dim(0);
  const std::size_t len = input.dim(1);
  if (len == 0) throw Error("gap: length dimension must be >= 1");
  Tensor out({c});
  for (std::size_t i = 0; i < c; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < len; ++j) acc += input.at(i, j);
    out.at(i) = acc / static_cast<double>(len);
  }
  return out;
}

Tensor gap_backward(const Tensor& input, const Tensor& grad_out) {
  require_shape(grad_out, {input.dim(0)}, "gap grad_out");
  const std::size_t c = input.dim(0);
  const std::size_t len = input.dim(1);
  Tensor g({c, len});
  for (std::size_t i = 0; i < c; ++i) {
    const double v = grad_out.at(i) / static_cast<double>(len);
    for (std::size_t j = 0; j < len; ++j) g.at(i, j) = v;
  }
  return g;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights,
                     const Tensor& bias) {
  if (weights.rank() != 2) {
    throw ShapeError("dense: weights must be rank 2 [M, N], got " +
                     shape_string(weights.shape));
  }
  require_shape(input, {weights.dim(1)}, "dense input");
  require_shape(bias, {weights.dim(0)}, "dense bias");
  const std::size_t m = weights.dim(0);
  const std::size_t n = weights.dim(1);
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = bias.at(i);
    const double* w_row = &weights.data[i * n];
    for (std::size_t j = 0; j < n; ++j) acc += w_row[j] * input.at(j);
    out.at(i) = acc;
  }
  return out;
}

DenseGrads dense_backward(const Tensor& input, const Tensor& weights,
                          const Tensor& grad_out) {
  require_shape(input, {weights.dim(1)}, "dense input");
  require_shape(grad_out, {weights.dim(0)}, "dense grad_out");
  const std::size_t m = weights.dim(0);
  const std::size_t n = weights.dim(1);
  DenseGrads g{Tensor({n}), Tensor({m, n}), grad_out};
  for (std::size_t i = 0; i < m; ++i) {
    const double go = grad_out.at(i);
    const double* w_row = &weights.data[i * n];
    double* gw_row = &g.weights.data[i * n];
    for (std::size_t j = 0; j < n; ++j) {
      gw_row[j] = go * input.at(j);
      g.input.at(j) += go * w_row[j];
    }
  }
  return g;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (!input.same_shape(grad_out)) {
    throw ShapeError("relu: grad_out shape " + shape_string(grad_out.shape) +
                     " must equal input shape " + shape_string(input.shape));
  }
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (input.data[i] <= 0.0) g.data[i] = 0.0;
  }
  return g;
}

SoftmaxXentResult softmax_cross_entropy(const Tensor& logits,
                                        std::size_t label) {
  if (logits.rank() != 1) {
    throw ShapeError("softmax_cross_entropy: logits must be rank 1, got " +
                     shape_string(logits.shape));
  }
  const std::size_t k = logits.dim(0);
  if (label >= k) {
    throw Error("softmax_cross_entropy: label " + std::to_string(label) +
                " out of range for " + std::to_string(k) + " classes");
  }
  const double max_logit =
      *std::max_element(logits.data.begin(), logits.data.end());
  double sum = 0.0;
  Tensor probs({k});
  for (std::size_t i = 0; i < k; ++i) {
    probs.at(i) = std::exp(logits.at(i) - max_logit);
    sum += probs.at(i);
  }
  for (std::size_t i = 0; i < k; ++i) probs.at(i) /= sum;

  const double loss = -(logits.at(label) - max_logit - std::log(sum));
  Tensor grad = probs;
  grad.at(label) -= 1.0;
  return SoftmaxXentResult{loss, std::move(grad)};
}

std::pair<Tensor, AdamState> adam_step(const Tensor& params,
                                       const Tensor& grads,
                                       const AdamState& state,
                                       const AdamConfig& cfg) {
  if (!params.same_shape(grads)) {
    throw ShapeError("adam_step: grads shape " + shape_string(grads.shape) +
                     " must equal params shape " + shape_string(params.shape));
  }
  if (!params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw ShapeError("adam_step: state shapes must equal params shape " +
                     shape_string(params.shape));
  }
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 ||
      cfg.beta2 >= 1.0) {
    throw Error("adam_step: beta1 and beta2 must lie in [0, 1)");
  }

  AdamState next{state.m, state.v, state.step + 1};
  Tensor out = params;
  const double t = static_cast<double>(next.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads.data[i];
    next.m.data[i] = cfg.beta1 * next.m.data[i] + (1.0 - cfg.beta1) * g;
    next.v.data[i] = cfg.beta2 * next.v.data[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = next.m.data[i] / bc1;
    const double v_hat = next.v.data[i] / bc2;
    out.data[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  return {std::move(out), std::move(next)};
}

}  // namespace flsim
