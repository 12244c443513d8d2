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

#include "flsim/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flsim/tensor.hpp"

namespace flsim {

namespace {
constexpr char kHeader[] =
    "round,accuracy,loss,n_accepted,n_uploaded,n_dropped,n_carried,agg_ms,outcome";

// %.17g keeps doubles exact across a write/read round trip.
std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << kHeader << "\n";
  for (const RoundRecord& r : rounds) {
    os << r.round << ',' << fmt_double(r.accuracy) << ',' << fmt_double(r.loss)
       << ',' << r.n_accepted << ',' << r.n_uploaded << ',' << r.n_dropped
       << ',' << r.n_carried << ',' << fmt_double(r.agg_ms) << ',' << r.outcome
       << "\n";
  }
  return os.str();
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("cannot open metrics file '" + path + "' for writing");
  f << to_csv();
}

MetricsLog MetricsLog::read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open metrics file '" + path + "' for reading");
  MetricsLog log;
  std::string line;
  if (!std::getline(f, line)) throw Error("metrics file '" + path + "' is empty");
  if (line != kHeader) {
    throw Error("metrics file '" + path + "' has an unexpected header");
  }
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    RoundRecord r;
    char outcome[32] = {0};
    const int n = std::sscanf(
        line.c_str(), "%" SCNd64 ",%lf,%lf,%d,%d,%d,%d,%lf,%31s", &r.round,
        &r.accuracy, &r.loss, &r.n_accepted, &r.n_uploaded, &r.n_dropped,
        &r.n_carried, &r.agg_ms, outcome);
    if (n != 9) {
      throw Error("bad metrics line " + std::to_string(lineno) + " in '" +
                  path + "'");
    }
    r.outcome = outcome;
    log.rounds.push_back(r);
  }
  return log;
}

}  // namespace flsim
