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

#include "flsim/aggregators.hpp"

#include <cmath>

namespace flsim {

AggregatorKind aggregator_from_name(const std::string& name) {
  if (name == "fedavg") return AggregatorKind::kFedAvg;
  if (name == "fedadagrad") return AggregatorKind::kFedAdagrad;
  if (name == "fedadam") return AggregatorKind::kFedAdam;
  if (name == "fedyogi") return AggregatorKind::kFedYogi;
  throw Error("unknown aggregator '" + name +
              "' (expected fedavg, fedadagrad, fedadam, or fedyogi)");
}

std::string aggregator_name(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::kFedAvg:
      return "fedavg";
    case AggregatorKind::kFedAdagrad:
      return "fedadagrad";
    case AggregatorKind::kFedAdam:
      return "fedadam";
    case AggregatorKind::kFedYogi:
      return "fedyogi";
  }
  return "unknown";
}

AggregatorState AggregatorState::init(AggregatorKind kind,
                                      const ModelParams& model,
                                      double server_lr, double beta1,
                                      double beta2, double tau) {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw Error("aggregator: beta1 and beta2 must lie in [0, 1)");
  }
  if (tau <= 0.0) throw Error("aggregator: tau must be > 0");
  AggregatorState s;
  s.kind = kind;
  s.server_lr = server_lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.tau = tau;
  if (kind != AggregatorKind::kFedAvg) {
    for (const auto& [name, tensor] : model.tensors) {
      s.m.emplace_back(name, Tensor::zeros_like(tensor));
      s.v.emplace_back(name, Tensor::zeros_like(tensor));
    }
  }
  return s;
}

std::vector<std::pair<std::string, Tensor>> mean_delta(
    const std::vector<GradientUpdate>& updates) {
  if (updates.empty()) throw Error("mean_delta: updates must be non-empty");
  const auto& first = updates[0].deltas;
  std::vector<std::pair<std::string, Tensor>> mean;
  mean.reserve(first.size());
  for (const auto& [name, tensor] : first) {
    mean.emplace_back(name, Tensor::zeros_like(tensor));
  }
  for (const GradientUpdate& u : updates) {
    if (u.deltas.size() != mean.size()) {
      throw ShapeError("mean_delta: update from '" + u.client_id +
                       "' has a different tensor count");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
      if (!u.deltas[i].second.same_shape(mean[i].second)) {
        throw ShapeError("mean_delta: shape mismatch for '" +
                         u.deltas[i].first + "' from '" + u.client_id + "'");
      }
      for (std::size_t j = 0; j < mean[i].second.size(); ++j) {
        mean[i].second.data[j] += u.deltas[i].second.data[j];
      }
    }
  }
  const double inv_k = 1.0 / static_cast<double>(updates.size());
  for (auto& [name, t] : mean) {
    for (double& v : t.data) v *= inv_k;
  }
  return mean;
}

ModelParams fed_avg(const ModelParams& global,
                    const std::vector<GradientUpdate>& updates, double gamma) {
  const auto mean = mean_delta(updates);
  ModelParams next = global;
  apply_delta(next, mean, gamma);
  for (const auto& [name, t] : next.tensors) {
    require_finite(t, "fed_avg output '" + name + "'");
  }
  return next;
}

AdaptiveResult fed_adaptive(const AggregatorState& state,
                            const ModelParams& global,
                            const std::vector<GradientUpdate>& updates) {
  if (state.kind == AggregatorKind::kFedAvg) {
    throw Error("fed_adaptive: state holds a FedAvg aggregator");
  }
  const auto delta = mean_delta(updates);

  AdaptiveResult result{global, state};
  AggregatorState& s = result.state;
  if (s.m.size() != delta.size()) {
    throw ShapeError("fed_adaptive: state tensor count does not match update");
  }

  for (std::size_t i = 0; i < delta.size(); ++i) {
    const Tensor& d = delta[i].second;
    Tensor& m = s.m[i].second;
    Tensor& v = s.v[i].second;
    Tensor& p = result.model.tensors[i].second;
    for (std::size_t j = 0; j < d.size(); ++j) {
      const double dj = d.data[j];
      const double d2 = dj * dj;
      m.data[j] = s.beta1 * m.data[j] + (1.0 - s.beta1) * dj;
      switch (s.kind) {
        case AggregatorKind::kFedAdagrad:
          v.data[j] += d2;
          break;
        case AggregatorKind::kFedAdam:
          v.data[j] = s.beta2 * v.data[j] + (1.0 - s.beta2) * d2;
          break;
        case AggregatorKind::kFedYogi: {
          const double sign = v.data[j] > d2 ? 1.0 : (v.data[j] < d2 ? -1.0 : 0.0);
          v.data[j] -= (1.0 - s.beta2) * d2 * sign;
          break;
        }
        case AggregatorKind::kFedAvg:
          break;
      }
      p.data[j] += s.server_lr * m.data[j] / (std::sqrt(v.data[j]) + s.tau);
    }
  }
  for (const auto& [name, t] : result.model.tensors) {
    require_finite(t, "fed_adaptive output '" + name + "'");
  }
  return result;
}

}  // namespace flsim
