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

#ifndef FLSIM_AUGMENTATION_HPP_
#define FLSIM_AUGMENTATION_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "flsim/model.hpp"
#include "flsim/pipeline.hpp"

namespace flsim {

// Class-balanced shared dataset built once on the server and delivered to
// every client at initialization. Immutable after construction; every client
// sees the identical pool (one-time full delivery keeps the server from
// learning which classes a client is missing).
struct AugmentPool {
  std::vector<std::vector<DataSegment>> by_class;
  int per_class_size = 640;

  int num_classes() const { return static_cast<int>(by_class.size()); }
  std::size_t total_size() const;
};

// Uniform per-class sampling from the volunteer source shard, deterministic
// in the seed. Throws if any class has fewer than per_class source segments,
// naming the class.
AugmentPool init_pool(const std::vector<std::vector<DataSegment>>& source_by_class,
                      int per_class, std::uint64_t seed);

void save_pool(const AugmentPool& pool, const std::string& path);
AugmentPool load_pool(const std::string& path);
std::string pool_digest(const AugmentPool& pool);

// Sampling modes: augment every class each round (default), or only the
// classes missing from the local shard.
enum class AugmentMode { kAllClasses, kMissingOnly };

// Per round and per class: up to uniform(local_range) local segments (all of
// them if fewer exist, without replacement) plus uniform(aug_range) pool
// segments, shuffled together. Deterministic in the seed. A client with no
// local data still trains on pool samples alone.
std::vector<SampleRef> sample_training_set(
    const std::vector<DataSegment>& local, const AugmentPool& pool,
    std::array<int, 2> local_range, std::array<int, 2> aug_range,
    std::uint64_t seed, AugmentMode mode = AugmentMode::kAllClasses);

// Algorithm step used by the client when augmentation is on: local_train on
// the augmented sample of this round.
GradientUpdate augmented_gradients(const ModelParams& global,
                                   const std::vector<DataSegment>& local,
                                   const AugmentPool& pool,
                                   std::array<int, 2> local_range,
                                   std::array<int, 2> aug_range,
                                   const TrainConfig& cfg,
                                   std::uint64_t sample_seed,
                                   AugmentMode mode = AugmentMode::kAllClasses);

}  // namespace flsim

#endif  // FLSIM_AUGMENTATION_HPP_
