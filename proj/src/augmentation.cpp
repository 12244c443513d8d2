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

#include "flsim/augmentation.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "flsim/container.hpp"
#include "flsim/rng.hpp"

namespace flsim {

std::size_t AugmentPool::total_size() const {
  std::size_t n = 0;
  for (const auto& c : by_class) n += c.size();
  return n;
}

AugmentPool init_pool(const std::vector<std::vector<DataSegment>>& source_by_class,
                      int per_class, std::uint64_t seed) {
  if (per_class <= 0) throw Error("init_pool: per_class must be positive");
  AugmentPool pool;
  pool.per_class_size = per_class;
  pool.by_class.resize(source_by_class.size());
  Rng rng(seed);
  for (std::size_t c = 0; c < source_by_class.size(); ++c) {
    const auto& source = source_by_class[c];
    if (source.size() < static_cast<std::size_t>(per_class)) {
      throw Error("init_pool: class " + std::to_string(c) + " has only " +
                  std::to_string(source.size()) + " source segments, need " +
                  std::to_string(per_class));
    }
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    auto& dst = pool.by_class[c];
    dst.reserve(static_cast<std::size_t>(per_class));
    for (int i = 0; i < per_class; ++i) {
      dst.push_back(source[order[static_cast<std::size_t>(i)]]);
    }
  }
  return pool;
}

void save_pool(const AugmentPool& pool, const std::string& path) {
  std::vector<DataSegment> flattened;
  flattened.reserve(pool.total_size());
  for (const auto& c : pool.by_class) {
    for (const DataSegment& s : c) flattened.push_back(s);
  }
  const std::size_t n = flattened.size();
  Container c;
  c.meta = {{"kind", "augment_pool"},
            {"per_class", pool.per_class_size},
            {"classes", pool.num_classes()},
            {"count", n}};
  Tensor values({n, 3, static_cast<std::size_t>(kSegmentWindow)});
  Tensor labels({n}), rates({n});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(flattened[i].values.data.begin(), flattened[i].values.data.end(),
              values.data.begin() + static_cast<std::ptrdiff_t>(i * 3 * kSegmentWindow));
    labels.at(i) = flattened[i].label;
    rates.at(i) = flattened[i].source_rate_hz;
  }
  c.entries.emplace_back("values", std::move(values));
  c.entries.emplace_back("labels", std::move(labels));
  c.entries.emplace_back("rates", std::move(rates));
  write_container(c, path);
}

AugmentPool load_pool(const std::string& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "augment_pool") {
    throw ContainerError("'" + path + "' is not an augmentation pool");
  }
  AugmentPool pool;
  pool.per_class_size = c.meta.at("per_class").get<int>();
  pool.by_class.resize(c.meta.at("classes").get<std::size_t>());
  const Tensor& values = c.require("values");
  const Tensor& labels = c.require("labels");
  const Tensor& rates = c.require("rates");
  for (std::size_t i = 0; i < values.dim(0); ++i) {
    DataSegment seg;
    seg.values = Tensor({3, static_cast<std::size_t>(kSegmentWindow)});
    std::copy(values.data.begin() + static_cast<std::ptrdiff_t>(i * 3 * kSegmentWindow),
              values.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * 3 * kSegmentWindow),
              seg.values.data.begin());
    seg.label = static_cast<int>(labels.at(i));
    seg.source_rate_hz = static_cast<int>(rates.at(i));
    const auto cls = static_cast<std::size_t>(seg.label);
    if (cls >= pool.by_class.size()) {
      throw ContainerError("pool entry with out-of-range class");
    }
    pool.by_class[cls].push_back(std::move(seg));
  }
  return pool;
}

std::string pool_digest(const AugmentPool& pool) {
  // Digest of the canonical serialized form; identical pools hash equal.
  std::vector<std::uint8_t> bytes;
  for (const auto& c : pool.by_class) {
    for (const DataSegment& s : c) {
      for (double v : s.values.data) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i)
          bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
      }
      bytes.push_back(static_cast<std::uint8_t>(s.label));
    }
  }
  return bytes_digest(bytes);
}

std::vector<SampleRef> sample_training_set(
    const std::vector<DataSegment>& local, const AugmentPool& pool,
    std::array<int, 2> local_range, std::array<int, 2> aug_range,
    std::uint64_t seed, AugmentMode mode) {
  if (local_range[0] < 0 || local_range[1] < local_range[0]) {
    throw Error("sample_training_set: invalid local_range");
  }
  if (aug_range[0] < 0 || aug_range[1] < aug_range[0]) {
    throw Error("sample_training_set: invalid aug_range");
  }
  const int classes = pool.num_classes();
  Rng rng(seed);

  std::vector<std::vector<std::size_t>> local_by_class(
      static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < local.size(); ++i) {
    const int label = local[i].label;
    if (label >= 0 && label < classes) {
      local_by_class[static_cast<std::size_t>(label)].push_back(i);
    }
  }

  std::vector<SampleRef> out;
  for (int c = 0; c < classes; ++c) {
    auto& indices = local_by_class[static_cast<std::size_t>(c)];
    const int want_local =
        static_cast<int>(rng.uniform_int(local_range[0], local_range[1]));
    const int take_local =
        std::min<int>(want_local, static_cast<int>(indices.size()));
    rng.shuffle(indices);
    for (int i = 0; i < take_local; ++i) {
      out.push_back({&local[indices[static_cast<std::size_t>(i)]].values, c});
    }

    const bool augment_this_class =
        mode == AugmentMode::kAllClasses || indices.empty();
    if (!augment_this_class) continue;
    const int want_aug =
        static_cast<int>(rng.uniform_int(aug_range[0], aug_range[1]));
    if (want_aug == 0) continue;
    const auto& pool_class = pool.by_class[static_cast<std::size_t>(c)];
    if (pool_class.empty()) {
      throw Error("sample_training_set: pool has no segments for class " +
                  std::to_string(c));
    }
    std::vector<std::size_t> pool_order(pool_class.size());
    std::iota(pool_order.begin(), pool_order.end(), 0);
    rng.shuffle(pool_order);
    const int take_aug =
        std::min<int>(want_aug, static_cast<int>(pool_class.size()));
    for (int i = 0; i < take_aug; ++i) {
      out.push_back({&pool_class[pool_order[static_cast<std::size_t>(i)]].values, c});
    }
  }
  rng.shuffle(out);
  return out;
}

GradientUpdate augmented_gradients(const ModelParams& global,
                                   const std::vector<DataSegment>& local,
                                   const AugmentPool& pool,
                                   std::array<int, 2> local_range,
                                   std::array<int, 2> aug_range,
                                   const TrainConfig& cfg,
                                   std::uint64_t sample_seed, AugmentMode mode) {
  const std::vector<SampleRef> training_set = sample_training_set(
      local, pool, local_range, aug_range, sample_seed, mode);
  if (training_set.empty() && cfg.epochs > 0) {
    throw Error("augmented_gradients: sampled training set is empty");
  }
  return local_train(global, training_set, cfg);
}

}  // namespace flsim
