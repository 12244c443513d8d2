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

#ifndef FLSIM_AGGREGATORS_HPP_
#define FLSIM_AGGREGATORS_HPP_

#include <string>
#include <vector>

#include "flsim/model.hpp"

namespace flsim {

enum class AggregatorKind { kFedAvg, kFedAdagrad, kFedAdam, kFedYogi };

AggregatorKind aggregator_from_name(const std::string& name);
std::string aggregator_name(AggregatorKind kind);

// Server-side optimizer state. For FedAvg only server_lr (the gamma step
// size) matters; the adaptive kinds carry first/second moment tensors shaped
// like the model.
struct AggregatorState {
  AggregatorKind kind = AggregatorKind::kFedAvg;
  double server_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 0.1;
  std::vector<std::pair<std::string, Tensor>> m;
  std::vector<std::pair<std::string, Tensor>> v;

  static AggregatorState init(AggregatorKind kind, const ModelParams& model,
                              double server_lr = 1.0, double beta1 = 0.9,
                              double beta2 = 0.99, double tau = 0.1);
};

// Unweighted federated averaging: theta' = theta + gamma * mean(deltas).
ModelParams fed_avg(const ModelParams& global,
                    const std::vector<GradientUpdate>& updates, double gamma);

// Adaptive rules over the mean delta D:
//   m <- beta1*m + (1-beta1)*D
//   Adagrad: v <- v + D^2
//   Adam:    v <- beta2*v + (1-beta2)*D^2
//   Yogi:    v <- v - (1-beta2)*D^2*sign(v - D^2)
//   theta' = theta + server_lr * m / (sqrt(v) + tau)
struct AdaptiveResult {
  ModelParams model;
  AggregatorState state;
};

AdaptiveResult fed_adaptive(const AggregatorState& state,
                            const ModelParams& global,
                            const std::vector<GradientUpdate>& updates);

// Elementwise mean of the updates' deltas (shared by every aggregator and by
// the user-level DP path).
std::vector<std::pair<std::string, Tensor>> mean_delta(
    const std::vector<GradientUpdate>& updates);

}  // namespace flsim

#endif  // FLSIM_AGGREGATORS_HPP_
