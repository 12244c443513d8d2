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

#ifndef FLSIM_PROTOCOL_HPP_
#define FLSIM_PROTOCOL_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "flsim/aggregators.hpp"
#include "flsim/augmentation.hpp"
#include "flsim/config.hpp"
#include "flsim/event_log.hpp"
#include "flsim/metrics.hpp"
#include "flsim/model.hpp"
#include "flsim/privacy.hpp"

namespace flsim {

// ---------------------------------------------------------------------------
// Simulated infrastructure
// ---------------------------------------------------------------------------

// Discrete-event virtual clock. Events at equal instants run in scheduling
// order, so a fixed seed replays the identical interleaving.
class SimClock {
 public:
  using Callback = std::function<void()>;

  std::int64_t now() const { return now_; }
  void schedule_at(std::int64_t t, Callback cb);
  void schedule_in(std::int64_t dt, Callback cb) { schedule_at(now_ + dt, std::move(cb)); }
  bool run_one();
  void run_all();

 private:
  struct Item {
    std::int64_t t;
    std::uint64_t seq;
    Callback cb;
    bool operator>(const Item& other) const {
      return t != other.t ? t > other.t : seq > other.seq;
    }
  };

  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue_;
  std::int64_t now_ = 0;
  std::uint64_t next_seq_ = 0;
};

// In-process stand-in for the cloud blob storage: a key -> bytes map.
class BlobStore {
 public:
  void put(const std::string& key, std::vector<std::uint8_t> bytes);
  const std::vector<std::uint8_t>& get(const std::string& key) const;
  bool exists(const std::string& key) const;

 private:
  std::map<std::string, std::vector<std::uint8_t>> blobs_;
};

// In-process stand-in for the cloud notification service. Delivery is
// at-most-once, after the configured latency.
class PubSub {
 public:
  using Handler = std::function<void(const nlohmann::json&)>;

  PubSub(SimClock& clock, std::int64_t latency_ms)
      : clock_(clock), latency_ms_(latency_ms) {}

  void subscribe(const std::string& topic, Handler handler);
  void publish(const std::string& topic, nlohmann::json payload);

 private:
  SimClock& clock_;
  std::int64_t latency_ms_;
  std::map<std::string, std::vector<Handler>> subscribers_;
};

// ---------------------------------------------------------------------------
// Round state and protocol decisions
// ---------------------------------------------------------------------------

enum class Phase { kOpen, kAggregating, kClosed };
enum class Outcome { kPending, kAccepted, kAborted };

std::string phase_name(Phase phase);
std::string outcome_name(Outcome outcome);

// Server-side record of one training round.
struct RoundState {
  std::int64_t round_index = 0;
  std::int64_t deadline = 0;
  Phase phase = Phase::kOpen;
  std::set<std::string> accepted_clients;
  std::vector<GradientUpdate> uploaded;
  std::vector<GradientUpdate> carried_over;
  Outcome outcome = Outcome::kPending;
};

// Client-side view: identity, scripted device flags, and what the client has
// done so far. A client trains at most once per round.
struct ClientState {
  std::string client_id;
  bool charging = true;
  bool connected = true;
  std::int64_t last_round_trained = -1;
  std::int64_t last_round_rtcm = -1;
  std::int64_t rejected_uploads = 0;
};

// RTCp: the client self-selects only when the required device flags hold.
bool evaluate_rtc_policy(const ClientState& client, const ProtocolConfig& policy);

// STTp: enough time must remain before the deadline to finish training.
bool evaluate_stt_policy(std::int64_t now, std::int64_t deadline,
                         std::int64_t training_ms, const ProtocolConfig& policy);

struct RtcmDecision {
  bool accept = false;
  std::string reason;  // set when denied
};

// A/DFTp plus phase check. Denial is a normal response, never an error.
// Clients with a pending carried-over update are denied so that no client can
// contribute twice to one aggregation.
RtcmDecision server_handle_rtcm(const RoundState& round,
                                const ProtocolConfig& policy,
                                const std::string& client_id);

struct UploadDecision {
  bool accepted = false;
  std::string reason;  // "late", "duplicate", "not_accepted", "closed"
};

// Exactly-once per client per round, only while the round is open and the
// deadline has not passed.
UploadDecision server_accept_upload(const RoundState& round,
                                    const GradientUpdate& update,
                                    std::int64_t now);

struct AggregationResult {
  Outcome outcome = Outcome::kAborted;
  std::optional<ModelParams> model;
  AggregatorState aggregator_state;
  // (client_id, upload round) of every update that entered the aggregation.
  std::vector<std::pair<std::string, std::int64_t>> inputs;
  std::string abort_reason;
};

// SFAp and the aggregation step at the deadline: pools uploaded and
// carried-over updates, aggregates if enough are present, and asks
// is_acceptable before committing.
AggregationResult aggregate_round(
    const RoundState& round, const ProtocolConfig& policy,
    const AggregatorState& aggregator, const ModelParams& global,
    const PrivacySpec& privacy, Rng& noise_rng,
    const std::function<bool(const ModelParams&)>& is_acceptable);

// GradientUpdate <-> container bytes (the wire format of uploads).
std::vector<std::uint8_t> serialize_update(const GradientUpdate& update);
GradientUpdate parse_update(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_model(const ModelParams& params);
ModelParams parse_model(const std::vector<std::uint8_t>& bytes);

// ---------------------------------------------------------------------------
// Whole-experiment driver
// ---------------------------------------------------------------------------

struct SimulationResult {
  MetricsLog metrics;
  EventLog events;
  ModelParams final_model;
  EvalMetrics final_eval;
};

// Runs the full asynchronous protocol over the configured dataset to
// completion. Deterministic in (config, seed).
SimulationResult run_simulation(const ExperimentConfig& cfg);

}  // namespace flsim

#endif  // FLSIM_PROTOCOL_HPP_
