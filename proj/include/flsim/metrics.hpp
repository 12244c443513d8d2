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

#ifndef FLSIM_METRICS_HPP_
#define FLSIM_METRICS_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace flsim {

// One per-round record of the metrics CSV:
//   round,accuracy,loss,n_accepted,n_uploaded,n_dropped,n_carried,agg_ms,outcome
struct RoundRecord {
  std::int64_t round = 0;
  double accuracy = 0.0;
  double loss = 0.0;
  int n_accepted = 0;
  int n_uploaded = 0;
  int n_dropped = 0;
  int n_carried = 0;
  // Real milliseconds only in wall-clock mode; 0 in virtual-time runs so that
  // equal seeds give byte-identical files.
  double agg_ms = 0.0;
  std::string outcome = "pending";
};

struct MetricsLog {
  std::vector<RoundRecord> rounds;

  void write_csv(const std::string& path) const;
  std::string to_csv() const;
  static MetricsLog read_csv(const std::string& path);
};

}  // namespace flsim

#endif  // FLSIM_METRICS_HPP_
