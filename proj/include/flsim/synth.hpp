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

#ifndef FLSIM_SYNTH_HPP_
#define FLSIM_SYNTH_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "flsim/pipeline.hpp"
#include "flsim/rng.hpp"

namespace flsim {

// Synthetic non-IID generator. Each client's class proportions are drawn
// from Dirichlet(alpha); each class emits windows from its own signal family
// (distinct dominant frequency, per-axis amplitude signature, waveform) plus
// noise, already normalized to [-1, 1]. Besides the client shards it produces
// a disjoint "volunteer" shard that seeds the augmentation pool and a global
// held-out test set.
struct SynthConfig {
  int n_clients = 64;
  int classes = 5;
  std::array<int, 2> per_client_count = {80, 200};
  double dirichlet_alpha = 0.5;
  // When > 0, only the top-k Dirichlet proportions are kept (renormalized),
  // which guarantees every client is missing classes.
  int classes_per_client = 0;
  std::map<int, double> rate_mix = {{20, 1.0}};
  int volunteer_per_class = 700;
  int test_per_class = 100;
  double noise_std = 0.08;
  std::uint64_t seed = 1;
};

struct SynthDataset {
  std::vector<std::vector<DataSegment>> clients;
  std::vector<std::vector<DataSegment>> volunteer_by_class;
  std::vector<DataSegment> test;
};

SynthDataset synth_generate(const SynthConfig& cfg);

// Dirichlet(alpha, k) draw; exposed for the distribution tests.
std::vector<double> dirichlet(double alpha, int k, Rng& rng);

// One synthetic segment of the given class (exposed for tests).
DataSegment synth_segment(int label, int classes, int rate_hz, double noise_std,
                          Rng& rng);

}  // namespace flsim

#endif  // FLSIM_SYNTH_HPP_
