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

#ifndef FLSIM_TESTS_TEST_SUPPORT_HPP_
#define FLSIM_TESTS_TEST_SUPPORT_HPP_

#include <cmath>
#include <cstdlib>
#include <string>
#include <vector>

namespace flsim::test {

inline double max_abs_diff(const std::vector<double>& a,
                           const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Relative error with an absolute floor so exact zeros compare cleanly.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Unique-ish temp path for tests that write files.
inline std::string temp_path(const std::string& name) {
  const char* dir = std::getenv("TMPDIR");
  std::string base = dir != nullptr ? dir : "/tmp";
  return base + "/flsim_test_" + name;
}

}  // namespace flsim::test

#endif  // FLSIM_TESTS_TEST_SUPPORT_HPP_
