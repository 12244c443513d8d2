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

#include "flsim/experiments.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "flsim/rng.hpp"

namespace flsim {

std::vector<DropoutRow> experiment_dropout(const ExperimentConfig& base,
                                           const std::vector<double>& p_drops,
                                           std::vector<SimulationResult>* results) {
  std::vector<DropoutRow> table;
  for (double p : p_drops) {
    ExperimentConfig cfg = base;
    cfg.faults.p_drop = p;
    SimulationResult result = run_simulation(cfg);

    DropoutRow row;
    row.p_drop = p;
    if (!result.metrics.rounds.empty()) {
      row.final_accuracy = result.metrics.rounds.back().accuracy;
      row.final_loss = result.metrics.rounds.back().loss;
    }
    for (const RoundRecord& r : result.metrics.rounds) {
      if (r.outcome == "accepted") {
        ++row.rounds_accepted;
      } else {
        ++row.rounds_aborted;
      }
    }
    table.push_back(row);
    if (results != nullptr) results->push_back(std::move(result));
  }
  return table;
}

std::vector<ScalingRow> experiment_scaling(const std::vector<int>& client_counts,
                                           int channels, int num_classes,
                                           int repetitions, std::uint64_t seed) {
  const ModelParams model = build_model(channels, num_classes, false, seed);
  Rng rng(seed);

  std::vector<ScalingRow> table;
  for (int k : client_counts) {
    if (k < 1) throw Error("experiment_scaling: client counts must be >= 1");
    std::vector<GradientUpdate> updates;
    updates.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
      GradientUpdate u = zero_update_like(model);
      u.client_id = "client_" + std::to_string(i);
      for (auto& [name, t] : u.deltas) {
        for (double& v : t.data) v = rng.uniform(-0.01, 0.01);
      }
      updates.push_back(std::move(u));
    }

    double total_ms = 0.0;
    for (int rep = 0; rep < repetitions; ++rep) {
      const auto start = std::chrono::steady_clock::now();
      const ModelParams next = fed_avg(model, updates, 1.0);
      const auto end = std::chrono::steady_clock::now();
      // Touch the result so the aggregation cannot be optimized away.
      if (next.tensors[0].second.data[0] > 1e18) {
        throw Error("experiment_scaling: unexpected aggregate value");
      }
      total_ms += std::chrono::duration<double, std::milli>(end - start).count();
    }
    table.push_back({k, total_ms / repetitions});
  }
  return table;
}

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error("linear_fit: need at least two matching points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  LinearFit fit;
  const double denom = n * sxx - sx * sx;
  if (denom == 0.0) throw Error("linear_fit: degenerate x values");
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;

  const double mean_y = sy / n;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double pred = fit.slope * x[i] + fit.intercept;
    ss_res += (y[i] - pred) * (y[i] - pred);
    ss_tot += (y[i] - mean_y) * (y[i] - mean_y);
  }
  fit.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
  return fit;
}

std::string dropout_table_csv(const std::vector<DropoutRow>& rows) {
  std::ostringstream os;
  os << "p_drop,final_accuracy,final_loss,rounds_accepted,rounds_aborted\n";
  for (const DropoutRow& r : rows) {
    os << r.p_drop << ',' << r.final_accuracy << ',' << r.final_loss << ','
       << r.rounds_accepted << ',' << r.rounds_aborted << "\n";
  }
  return os.str();
}

std::string scaling_table_csv(const std::vector<ScalingRow>& rows) {
  std::ostringstream os;
  os << "clients,mean_agg_ms\n";
  for (const ScalingRow& r : rows) {
    os << r.clients << ',' << r.mean_agg_ms << "\n";
  }
  return os.str();
}

}  // namespace flsim
