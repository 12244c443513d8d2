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

#ifndef FLSIM_CONFIG_HPP_
#define FLSIM_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "flsim/aggregators.hpp"
#include "flsim/augmentation.hpp"
#include "flsim/model.hpp"
#include "flsim/privacy.hpp"
#include "flsim/synth.hpp"

namespace flsim {

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Round/policy knobs of the asynchronous protocol.
struct ProtocolConfig {
  std::int64_t deadline_ms = 360000;  // 6 simulated minutes per round
  int max_rounds = 100;
  std::optional<double> target_accuracy;

  // RTCp: which device flags a client needs before self-selecting.
  bool rtc_requires_charging = true;
  bool rtc_requires_connected = true;
  // A/DFTp: optional allowlist and per-round acceptance cap.
  std::optional<std::set<std::string>> adft_allowlist;
  std::optional<int> adft_max_accepted;
  // STTp: minimum time that must remain before the deadline.
  std::int64_t sttp_min_remaining_ms = 1000;
  // SFAp: minimum updates needed to aggregate.
  int sfap_min_updates = 1;

  // Simulated costs.
  std::int64_t client_training_ms = 60000;
  std::int64_t rtcm_jitter_ms = 30000;
  std::int64_t msg_latency_ms = 100;
};

struct AggregatorConfig {
  AggregatorKind kind = AggregatorKind::kFedAvg;
  double server_lr = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double tau = 0.1;
};

struct AugmentationConfig {
  bool enabled = true;
  int per_class = 640;
  std::array<int, 2> local_range = {50, 100};
  std::array<int, 2> aug_range = {15, 30};
  AugmentMode mode = AugmentMode::kAllClasses;
};

struct FaultConfig {
  double p_drop = 0.0;
  std::array<std::int64_t, 2> upload_delay_ms = {0, 0};
  double p_deny_registration = 0.0;
};

struct ModelConfig {
  int channels = 8;
  int num_classes = 5;
  bool bn_enabled = false;
  int kernel1 = 9;
  int kernel2 = 5;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;

  enum class Source { kSynthetic, kFiles };
  Source source = Source::kSynthetic;
  SynthConfig synth;
  std::string files_dir;

  ModelConfig model;
  TrainConfig train;
  ProtocolConfig protocol;
  AggregatorConfig aggregator;
  AugmentationConfig augmentation;
  PrivacySpec privacy;
  FaultConfig faults;

  // Opt-in: measure real aggregation time into the agg_ms column. Off by
  // default so equal seeds give byte-identical metrics files.
  bool wall_clock_agg_timing = false;
  // Opt-in: train accepted clients on worker threads. Must not change any
  // output for a fixed seed.
  bool parallel_clients = false;

  void validate() const;
};

// Strict parse: unknown keys anywhere are an error naming the key.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

}  // namespace flsim

#endif  // FLSIM_CONFIG_HPP_
