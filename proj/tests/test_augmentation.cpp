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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <map>

#include "flsim/augmentation.hpp"
#include "flsim/synth.hpp"
#include "test_support.hpp"

using namespace flsim;

namespace {

std::vector<std::vector<DataSegment>> volunteer_shard(int per_class,
                                                      int classes = 5,
                                                      std::uint64_t seed = 3) {
  std::vector<std::vector<DataSegment>> out(static_cast<std::size_t>(classes));
  Rng rng(seed);
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      out[static_cast<std::size_t>(c)].push_back(
          synth_segment(c, classes, 20, 0.05, rng));
    }
  }
  return out;
}

std::vector<DataSegment> single_class_local(int n, int label) {
  Rng rng(11);
  std::vector<DataSegment> out;
  for (int i = 0; i < n; ++i) out.push_back(synth_segment(label, 5, 20, 0.05, rng));
  return out;
}

}  // namespace

TEST_CASE("init_pool draws the requested count per class") {
  const auto source = volunteer_shard(700);
  const AugmentPool pool = init_pool(source, 640, 1);
  CHECK(pool.total_size() == 3200);
  for (const auto& c : pool.by_class) CHECK(c.size() == 640);

  const AugmentPool tiny = init_pool(source, 1, 1);
  CHECK(tiny.total_size() == 5);
}

TEST_CASE("init_pool is deterministic and immutable delivery hashes agree") {
  const auto source = volunteer_shard(50);
  const AugmentPool a = init_pool(source, 30, 9);
  const AugmentPool b = init_pool(source, 30, 9);
  CHECK(pool_digest(a) == pool_digest(b));
  const AugmentPool c = init_pool(source, 30, 10);
  CHECK(pool_digest(a) != pool_digest(c));
}

TEST_CASE("init_pool names the class that lacks source segments") {
  auto source = volunteer_shard(20);
  source[3].resize(4);
  CHECK_THROWS_WITH_AS(init_pool(source, 10, 1), doctest::Contains("class 3"),
                       Error);
}

TEST_CASE("pool round-trips through its container file") {
  const AugmentPool pool = init_pool(volunteer_shard(20), 10, 2);
  const std::string path = test::temp_path("pool.flsc");
  save_pool(pool, path);
  const AugmentPool loaded = load_pool(path);
  CHECK(pool_digest(loaded) == pool_digest(pool));
  CHECK(loaded.per_class_size == pool.per_class_size);
  std::remove(path.c_str());
}

TEST_CASE("a single-class client samples local plus every pool class") {
  const AugmentPool pool = init_pool(volunteer_shard(700), 640, 1);
  const auto local = single_class_local(200, 0);

  const auto sample = sample_training_set(local, pool, {50, 100}, {15, 30}, 77);

  std::map<int, int> counts;
  for (const SampleRef& s : sample) counts[s.label]++;
  // Class 0: 50-100 local draws plus 15-30 pool draws.
  CHECK(counts[0] >= 65);
  CHECK(counts[0] <= 130);
  for (int c = 1; c < 5; ++c) {
    CHECK(counts[c] >= 15);
    CHECK(counts[c] <= 30);
  }
}

TEST_CASE("aug_range [0,0] reduces to local-only sampling") {
  const AugmentPool pool = init_pool(volunteer_shard(50), 30, 1);
  const auto local = single_class_local(80, 2);
  const auto sample = sample_training_set(local, pool, {50, 100}, {0, 0}, 5);
  for (const SampleRef& s : sample) CHECK(s.label == 2);
  CHECK(sample.size() >= 50);
  CHECK(sample.size() <= 80);
}

TEST_CASE("a client with no local data trains on pool samples alone") {
  const AugmentPool pool = init_pool(volunteer_shard(50), 40, 1);
  const auto sample = sample_training_set({}, pool, {50, 100}, {15, 30}, 6);
  std::map<int, int> counts;
  for (const SampleRef& s : sample) counts[s.label]++;
  for (int c = 0; c < 5; ++c) {
    CHECK(counts[c] >= 15);
    CHECK(counts[c] <= 30);
  }
}

TEST_CASE("sampling mutates neither the pool nor the local shard") {
  const auto source = volunteer_shard(50);
  const AugmentPool pool = init_pool(source, 30, 1);
  const auto local = single_class_local(40, 1);
  const std::string pool_before = pool_digest(pool);
  const auto local_before = local;

  (void)sample_training_set(local, pool, {10, 20}, {5, 10}, 3);

  CHECK(pool_digest(pool) == pool_before);
  REQUIRE(local.size() == local_before.size());
  for (std::size_t i = 0; i < local.size(); ++i) {
    CHECK(local[i].values.data == local_before[i].values.data);
  }
}

TEST_CASE("sampling is deterministic in the seed") {
  const AugmentPool pool = init_pool(volunteer_shard(50), 30, 1);
  const auto local = single_class_local(60, 3);
  const auto a = sample_training_set(local, pool, {10, 20}, {5, 10}, 42);
  const auto b = sample_training_set(local, pool, {10, 20}, {5, 10}, 42);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].values == b[i].values);
    CHECK(a[i].label == b[i].label);
  }
}

TEST_CASE("missing-only mode augments only absent classes") {
  const AugmentPool pool = init_pool(volunteer_shard(50), 30, 1);
  const auto local = single_class_local(60, 0);
  const auto sample = sample_training_set(local, pool, {10, 20}, {5, 10}, 8,
                                          AugmentMode::kMissingOnly);
  std::map<int, int> counts;
  for (const SampleRef& s : sample) counts[s.label]++;
  CHECK(counts[0] >= 10);   // local only, no pool draws for the held class
  CHECK(counts[0] <= 20);
  for (int c = 1; c < 5; ++c) {
    CHECK(counts[c] >= 5);
    CHECK(counts[c] <= 10);
  }
}

TEST_CASE("augmented_gradients equals local_train on the same sampled set") {
  const AugmentPool pool = init_pool(volunteer_shard(60), 40, 1);
  const auto local = single_class_local(50, 1);
  const ModelParams model = build_model(4, 5, false, 12);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.dropout_rate = 0.0;
  cfg.seed = 21;

  const GradientUpdate via_op =
      augmented_gradients(model, local, pool, {10, 20}, {5, 10}, cfg, 9);
  const auto sample = sample_training_set(local, pool, {10, 20}, {5, 10}, 9);
  const GradientUpdate direct = local_train(model, sample, cfg);

  REQUIRE(via_op.deltas.size() == direct.deltas.size());
  for (std::size_t i = 0; i < via_op.deltas.size(); ++i) {
    CHECK(via_op.deltas[i].second.data == direct.deltas[i].second.data);
  }
}

TEST_CASE("augmented_gradients with zero epochs returns a zero update") {
  const AugmentPool pool = init_pool(volunteer_shard(50), 30, 1);
  const ModelParams model = build_model(4, 5, false, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  const GradientUpdate u =
      augmented_gradients(model, {}, pool, {10, 20}, {5, 10}, cfg, 1);
  CHECK(update_l2_norm(u) == 0.0);
}
