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

#ifndef FLSIM_EXPERIMENTS_HPP_
#define FLSIM_EXPERIMENTS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "flsim/config.hpp"
#include "flsim/protocol.hpp"

namespace flsim {

struct DropoutRow {
  double p_drop = 0.0;
  double final_accuracy = 0.0;
  double final_loss = 0.0;
  int rounds_accepted = 0;
  int rounds_aborted = 0;
};

// Runs the same seed-controlled experiment once per dropout probability.
// Dropout means an accepted client fails to upload its trained update.
std::vector<DropoutRow> experiment_dropout(const ExperimentConfig& base,
                                           const std::vector<double>& p_drops,
                                           std::vector<SimulationResult>* results = nullptr);

struct ScalingRow {
  int clients = 0;
  double mean_agg_ms = 0.0;
};

// Measures wall-clock federated-averaging time over k synthetic updates of
// the given model's parameter size.
std::vector<ScalingRow> experiment_scaling(const std::vector<int>& client_counts,
                                           int channels = 64, int num_classes = 5,
                                           int repetitions = 5,
                                           std::uint64_t seed = 1);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

// Least-squares fit of y against x (used on the scaling table).
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

std::string dropout_table_csv(const std::vector<DropoutRow>& rows);
std::string scaling_table_csv(const std::vector<ScalingRow>& rows);

}  // namespace flsim

#endif  // FLSIM_EXPERIMENTS_HPP_
