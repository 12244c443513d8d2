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

#include "flsim/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <future>
#include <semaphore>
#include <set>
#include <thread>

#include "flsim/container.hpp"
#include "flsim/synth.hpp"

namespace flsim {

// ---------------------------------------------------------------------------
// SimClock / BlobStore / PubSub
// ---------------------------------------------------------------------------

void SimClock::schedule_at(std::int64_t t, Callback cb) {
  if (t < now_) {
    throw Error("SimClock: cannot schedule into the past (t=" +
                std::to_string(t) + ", now=" + std::to_string(now_) + ")");
  }
  queue_.push(Item{t, next_seq_++, std::move(cb)});
}

bool SimClock::run_one() {
  if (queue_.empty()) return false;
  Item item = queue_.top();
  queue_.pop();
  now_ = item.t;
  item.cb();
  return true;
}

void SimClock::run_all() {
  while (run_one()) {
  }
}

void BlobStore::put(const std::string& key, std::vector<std::uint8_t> bytes) {
  blobs_[key] = std::move(bytes);
}

const std::vector<std::uint8_t>& BlobStore::get(const std::string& key) const {
  const auto it = blobs_.find(key);
  if (it == blobs_.end()) throw Error("blob store has no key '" + key + "'");
  return it->second;
}

bool BlobStore::exists(const std::string& key) const {
  return blobs_.count(key) > 0;
}

void PubSub::subscribe(const std::string& topic, Handler handler) {
  subscribers_[topic].push_back(std::move(handler));
}

void PubSub::publish(const std::string& topic, nlohmann::json payload) {
  const auto it = subscribers_.find(topic);
  if (it == subscribers_.end()) return;
  for (const Handler& handler : it->second) {
    clock_.schedule_in(latency_ms_,
                       [handler, payload]() { handler(payload); });
  }
}

// ---------------------------------------------------------------------------
// Protocol decisions
// ---------------------------------------------------------------------------

std::string phase_name(Phase phase) {
  switch (phase) {
    case Phase::kOpen:
      return "open";
    case Phase::kAggregating:
      return "aggregating";
    case Phase::kClosed:
      return "closed";
  }
  return "unknown";
}

std::string outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::kPending:
      return "pending";
    case Outcome::kAccepted:
      return "accepted";
    case Outcome::kAborted:
      return "aborted";
  }
  return "unknown";
}

bool evaluate_rtc_policy(const ClientState& client, const ProtocolConfig& policy) {
  if (policy.rtc_requires_charging && !client.charging) return false;
  if (policy.rtc_requires_connected && !client.connected) return false;
  return true;
}

bool evaluate_stt_policy(std::int64_t now, std::int64_t deadline,
                         std::int64_t training_ms, const ProtocolConfig& policy) {
  const std::int64_t remaining = deadline - now;
  return remaining >= training_ms + policy.sttp_min_remaining_ms;
}

RtcmDecision server_handle_rtcm(const RoundState& round,
                                const ProtocolConfig& policy,
                                const std::string& client_id) {
  if (round.phase != Phase::kOpen) {
    return {false, "aggregating"};
  }
  if (policy.adft_allowlist && !policy.adft_allowlist->count(client_id)) {
    return {false, "not_allowlisted"};
  }
  if (round.accepted_clients.count(client_id)) {
    return {true, ""};  // idempotent re-acceptance
  }
  // A client with a pending carried-over update sits out: accepting it again
  // could place it twice in one aggregation.
  for (const GradientUpdate& u : round.carried_over) {
    if (u.client_id == client_id) return {false, "carried_update_pending"};
  }
  if (policy.adft_max_accepted &&
      static_cast<int>(round.accepted_clients.size()) >=
          *policy.adft_max_accepted) {
    return {false, "round_full"};
  }
  return {true, ""};
}

UploadDecision server_accept_upload(const RoundState& round,
                                    const GradientUpdate& update,
                                    std::int64_t now) {
  if (update.round != static_cast<std::uint64_t>(round.round_index) ||
      round.phase != Phase::kOpen || now > round.deadline) {
    return {false, "late"};
  }
  if (!round.accepted_clients.count(update.client_id)) {
    return {false, "not_accepted"};
  }
  for (const GradientUpdate& u : round.uploaded) {
    if (u.client_id == update.client_id) return {false, "duplicate"};
  }
  return {true, ""};
}

AggregationResult aggregate_round(
    const RoundState& round, const ProtocolConfig& policy,
    const AggregatorState& aggregator, const ModelParams& global,
    const PrivacySpec& privacy, Rng& noise_rng,
    const std::function<bool(const ModelParams&)>& is_acceptable) {
  AggregationResult result;
  result.aggregator_state = aggregator;

  std::vector<GradientUpdate> pool = round.carried_over;
  pool.insert(pool.end(), round.uploaded.begin(), round.uploaded.end());

  if (static_cast<int>(pool.size()) < policy.sfap_min_updates) {
    result.outcome = Outcome::kAborted;
    result.abort_reason = "insufficient_updates";
    return result;
  }

  ModelParams next = global;
  if (privacy.mode == PrivacyMode::kUserDP) {
    next = user_dp_aggregate(pool, global, aggregator.server_lr, privacy,
                             noise_rng);
  } else if (aggregator.kind == AggregatorKind::kFedAvg) {
    next = fed_avg(global, pool, aggregator.server_lr);
  } else {
    AdaptiveResult adaptive = fed_adaptive(aggregator, global, pool);
    next = std::move(adaptive.model);
    result.aggregator_state = std::move(adaptive.state);
  }

  if (is_acceptable && !is_acceptable(next)) {
    result.outcome = Outcome::kAborted;
    result.abort_reason = "model_rejected";
    result.aggregator_state = aggregator;  // discard adaptive state advance
    return result;
  }

  result.outcome = Outcome::kAccepted;
  result.model = std::move(next);
  for (const GradientUpdate& u : pool) {
    result.inputs.emplace_back(u.client_id,
                               static_cast<std::int64_t>(u.round));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Wire formats
// ---------------------------------------------------------------------------

std::vector<std::uint8_t> serialize_update(const GradientUpdate& update) {
  Container c;
  c.meta = {{"kind", "update"},
            {"client_id", update.client_id},
            {"round", update.round},
            {"sample_count", update.sample_count}};
  c.entries = update.deltas;
  return serialize_container(c);
}

GradientUpdate parse_update(const std::vector<std::uint8_t>& bytes) {
  const Container c = parse_container(bytes);
  if (c.meta.value("kind", "") != "update") {
    throw ContainerError("blob is not a gradient update");
  }
  GradientUpdate u;
  u.client_id = c.meta.at("client_id").get<std::string>();
  u.round = c.meta.at("round").get<std::uint64_t>();
  u.sample_count = c.meta.at("sample_count").get<std::size_t>();
  u.deltas = c.entries;
  return u;
}

std::vector<std::uint8_t> serialize_model(const ModelParams& params) {
  Container c;
  c.meta = {{"kind", "model"},
            {"channels", params.channels},
            {"num_classes", params.num_classes},
            {"bn_enabled", params.bn_enabled},
            {"kernel1", params.kernel1},
            {"kernel2", params.kernel2}};
  c.entries = params.tensors;
  return serialize_container(c);
}

ModelParams parse_model(const std::vector<std::uint8_t>& bytes) {
  const Container c = parse_container(bytes);
  if (c.meta.value("kind", "") != "model") {
    throw ContainerError("blob is not a model");
  }
  ModelParams p;
  p.channels = c.meta.at("channels").get<int>();
  p.num_classes = c.meta.at("num_classes").get<int>();
  p.bn_enabled = c.meta.at("bn_enabled").get<bool>();
  p.kernel1 = c.meta.value("kernel1", 9);
  p.kernel2 = c.meta.value("kernel2", 5);
  p.tensors = c.entries;
  return p;
}

// ---------------------------------------------------------------------------
// Simulation driver
// ---------------------------------------------------------------------------

namespace {

struct ClientRuntime {
  ClientState state;
  std::vector<DataSegment> data;
  std::size_t index = 0;
  std::future<GradientUpdate> pending_job;
};

std::vector<SampleRef> make_refs(const std::vector<DataSegment>& segments) {
  std::vector<SampleRef> refs;
  refs.reserve(segments.size());
  for (const DataSegment& s : segments) refs.push_back({&s.values, s.label});
  return refs;
}

class Simulation {
 public:
  explicit Simulation(const ExperimentConfig& cfg)
      : cfg_(cfg), pubsub_(clock_, cfg.protocol.msg_latency_ms) {}

  SimulationResult run();

 private:
  void load_dataset();
  void setup_clients();
  void open_round(std::int64_t round, std::vector<GradientUpdate> carried);
  void on_round_open_notification(std::size_t client_index, std::int64_t round,
                                  std::int64_t deadline);
  void on_rtcm(std::size_t client_index, std::int64_t round);
  void on_aft(std::size_t client_index, std::int64_t round, std::int64_t deadline);
  void on_training_complete(std::size_t client_index, std::int64_t round);
  void on_upload(std::size_t client_index, GradientUpdate update);
  void on_deadline();
  GradientUpdate train_client(std::size_t client_index, std::int64_t round,
                              std::vector<std::uint8_t> model_bytes) const;
  EvalMetrics eval_global();

  ExperimentConfig cfg_;
  SimClock clock_;
  BlobStore blobs_;
  PubSub pubsub_;
  EventLog log_;
  MetricsLog metrics_;

  std::vector<ClientRuntime> clients_;
  std::vector<DataSegment> test_data_;
  std::vector<SampleRef> test_refs_;
  std::shared_ptr<const AugmentPool> pool_;

  std::shared_ptr<const ModelParams> global_;
  AggregatorState agg_state_;
  RoundState round_;
  Rng noise_rng_{0};
  int dropped_this_round_ = 0;
  std::optional<EvalMetrics> last_eval_;
  bool stopped_ = false;
};

void Simulation::load_dataset() {
  if (cfg_.source == ExperimentConfig::Source::kSynthetic) {
    SynthConfig synth = cfg_.synth;
    synth.seed = Rng::derive(cfg_.seed, 10);
    SynthDataset ds = synth_generate(synth);
    clients_.resize(ds.clients.size());
    for (std::size_t i = 0; i < ds.clients.size(); ++i) {
      clients_[i].data = std::move(ds.clients[i]);
    }
    test_data_ = std::move(ds.test);
    if (cfg_.augmentation.enabled) {
      pool_ = std::make_shared<AugmentPool>(
          init_pool(ds.volunteer_by_class, cfg_.augmentation.per_class,
                    Rng::derive(cfg_.seed, 11)));
    }
    return;
  }

  namespace fs = std::filesystem;
  const fs::path dir(cfg_.files_dir);
  if (!fs::is_directory(dir)) {
    throw ConfigError("dataset.files.dir '" + cfg_.files_dir +
                      "' is not a directory");
  }
  for (std::size_t i = 0;; ++i) {
    const fs::path p = dir / ("client_" + std::to_string(i) + ".flsc");
    if (!fs::exists(p)) break;
    ClientRuntime c;
    c.data = read_segments(p.string());
    clients_.push_back(std::move(c));
  }
  if (clients_.empty()) {
    throw ConfigError("no client_<i>.flsc files found in '" + cfg_.files_dir + "'");
  }
  test_data_ = read_segments((dir / "test.flsc").string());
  if (cfg_.augmentation.enabled) {
    const fs::path volunteer = dir / "volunteer.flsc";
    if (!fs::exists(volunteer)) {
      throw ConfigError("augmentation is enabled but '" + volunteer.string() +
                        "' does not exist");
    }
    std::vector<std::vector<DataSegment>> by_class(
        static_cast<std::size_t>(cfg_.model.num_classes));
    for (DataSegment& s : read_segments(volunteer.string())) {
      if (s.label < 0 || s.label >= cfg_.model.num_classes) {
        throw ConfigError("volunteer segment with out-of-range class");
      }
      by_class[static_cast<std::size_t>(s.label)].push_back(std::move(s));
    }
    pool_ = std::make_shared<AugmentPool>(init_pool(
        by_class, cfg_.augmentation.per_class, Rng::derive(cfg_.seed, 11)));
  }
}

void Simulation::setup_clients() {
  for (std::size_t i = 0; i < clients_.size(); ++i) {
    clients_[i].index = i;
    clients_[i].state.client_id = "client_" + std::to_string(i);
    pubsub_.subscribe("round_open", [this, i](const nlohmann::json& payload) {
      on_round_open_notification(i, payload.at("round").get<std::int64_t>(),
                                 payload.at("deadline").get<std::int64_t>());
    });
  }
  if (pool_ != nullptr) {
    const std::string digest = pool_digest(*pool_);
    for (const ClientRuntime& c : clients_) {
      log_.record(clock_.now(), "server", "pool_delivered",
                  {{"client", c.state.client_id}, {"digest", digest}});
    }
  }
}

void Simulation::open_round(std::int64_t round,
                            std::vector<GradientUpdate> carried) {
  round_ = RoundState{};
  round_.round_index = round;
  round_.deadline = clock_.now() + cfg_.protocol.deadline_ms;
  round_.phase = Phase::kOpen;
  round_.carried_over = std::move(carried);
  dropped_this_round_ = 0;

  // After an abort the previous model carries forward under this round's key
  // so the AFT download locator always resolves.
  const std::string key = "model/" + std::to_string(round);
  if (!blobs_.exists(key)) blobs_.put(key, serialize_model(*global_));

  log_.record(clock_.now(), "server", "round_open",
              {{"round", round}, {"deadline", round_.deadline}});
  pubsub_.publish("round_open",
                  {{"round", round}, {"deadline", round_.deadline}});
  clock_.schedule_at(round_.deadline, [this]() { on_deadline(); });
}

void Simulation::on_round_open_notification(std::size_t client_index,
                                            std::int64_t round,
                                            std::int64_t deadline) {
  (void)deadline;
  ClientRuntime& client = clients_[client_index];
  if (stopped_ || round != round_.round_index) return;
  if (!evaluate_rtc_policy(client.state, cfg_.protocol)) return;
  if (client.state.last_round_rtcm >= round) return;
  client.state.last_round_rtcm = round;

  Rng rng(Rng::derive(cfg_.seed, 20, static_cast<std::uint64_t>(round),
                      client_index));
  const std::int64_t jitter =
      cfg_.protocol.rtcm_jitter_ms > 0
          ? rng.uniform_int(0, cfg_.protocol.rtcm_jitter_ms)
          : 0;
  clock_.schedule_in(jitter + cfg_.protocol.msg_latency_ms,
                     [this, client_index, round]() {
                       log_.record(clock_.now(),
                                   clients_[client_index].state.client_id,
                                   "rtcm", {{"round", round}});
                       on_rtcm(client_index, round);
                     });
}

void Simulation::on_rtcm(std::size_t client_index, std::int64_t round) {
  ClientRuntime& client = clients_[client_index];

  RtcmDecision decision;
  Rng rng(Rng::derive(cfg_.seed, 21, static_cast<std::uint64_t>(round),
                      client_index));
  if (round != round_.round_index) {
    decision = {false, "stale_round"};
  } else if (round_.phase != Phase::kOpen) {
    decision = {false, "aggregating"};
  } else if (cfg_.faults.p_deny_registration > 0.0 &&
             rng.bernoulli(cfg_.faults.p_deny_registration)) {
    decision = {false, "injected_denial"};
  } else {
    decision = server_handle_rtcm(round_, cfg_.protocol, client.state.client_id);
  }

  if (decision.accept) {
    round_.accepted_clients.insert(client.state.client_id);
  }
  nlohmann::json payload = {{"client", client.state.client_id},
                            {"round", round},
                            {"response", decision.accept ? "AFT" : "DFT"},
                            {"phase", phase_name(round_.phase)}};
  if (!decision.accept) payload["reason"] = decision.reason;
  log_.record(clock_.now(), "server", "rtcm_response", payload);

  if (decision.accept) {
    const std::int64_t deadline = round_.deadline;
    clock_.schedule_in(cfg_.protocol.msg_latency_ms,
                       [this, client_index, round, deadline]() {
                         on_aft(client_index, round, deadline);
                       });
  }
}

void Simulation::on_aft(std::size_t client_index, std::int64_t round,
                        std::int64_t deadline) {
  ClientRuntime& client = clients_[client_index];
  if (client.state.last_round_trained >= round) return;

  if (!evaluate_stt_policy(clock_.now(), deadline,
                           cfg_.protocol.client_training_ms, cfg_.protocol)) {
    log_.record(clock_.now(), client.state.client_id, "stt_declined",
                {{"round", round}});
    return;
  }
  client.state.last_round_trained = round;

  // Snapshot the published model bytes now; the job may run while the store
  // advances to the next round.
  std::vector<std::uint8_t> model_bytes =
      blobs_.get("model/" + std::to_string(round));

  if (cfg_.parallel_clients) {
    static std::counting_semaphore<256> slots(
        std::max(2u, std::thread::hardware_concurrency()));
    client.pending_job =
        std::async(std::launch::async,
                   [this, client_index, round,
                    bytes = std::move(model_bytes)]() mutable {
                     slots.acquire();
                     GradientUpdate u =
                         train_client(client_index, round, std::move(bytes));
                     slots.release();
                     return u;
                   });
  } else {
    // Reference mode trains lazily on this thread at the completion event.
    client.pending_job = std::async(
        std::launch::deferred,
        [this, client_index, round, bytes = std::move(model_bytes)]() mutable {
          return train_client(client_index, round, std::move(bytes));
        });
  }

  clock_.schedule_in(cfg_.protocol.client_training_ms,
                     [this, client_index, round]() {
                       on_training_complete(client_index, round);
                     });
}

void Simulation::on_training_complete(std::size_t client_index,
                                      std::int64_t round) {
  ClientRuntime& client = clients_[client_index];
  GradientUpdate update = client.pending_job.get();

  Rng rng(Rng::derive(cfg_.seed, 22, static_cast<std::uint64_t>(round),
                      client_index));
  if (cfg_.faults.p_drop > 0.0 && rng.bernoulli(cfg_.faults.p_drop)) {
    ++dropped_this_round_;
    log_.record(clock_.now(), client.state.client_id, "client_dropout",
                {{"round", round}});
    return;
  }

  std::int64_t delay = 0;
  if (cfg_.faults.upload_delay_ms[1] > 0) {
    delay = rng.uniform_int(cfg_.faults.upload_delay_ms[0],
                            cfg_.faults.upload_delay_ms[1]);
  }
  clock_.schedule_in(delay + cfg_.protocol.msg_latency_ms,
                     [this, client_index, u = std::move(update)]() mutable {
                       on_upload(client_index, std::move(u));
                     });
}

void Simulation::on_upload(std::size_t client_index, GradientUpdate update) {
  ClientRuntime& client = clients_[client_index];
  // The wire round-trip keeps the server honest about the upload format.
  const std::vector<std::uint8_t> bytes = serialize_update(update);
  log_.record(clock_.now(), client.state.client_id, "upload",
              {{"round", update.round}, {"digest", bytes_digest(bytes)}});

  GradientUpdate parsed = parse_update(bytes);
  const UploadDecision decision =
      server_accept_upload(round_, parsed, clock_.now());
  nlohmann::json payload = {{"client", client.state.client_id},
                            {"round", parsed.round},
                            {"accepted", decision.accepted}};
  if (!decision.accepted) {
    payload["reason"] = decision.reason;
    ++client.state.rejected_uploads;
  }
  log_.record(clock_.now(), "server", "upload_result", payload);
  if (decision.accepted) {
    blobs_.put("upload/" + std::to_string(parsed.round) + "/" +
                   client.state.client_id,
               bytes);
    round_.uploaded.push_back(std::move(parsed));
  }
}

GradientUpdate Simulation::train_client(std::size_t client_index,
                                        std::int64_t round,
                                        std::vector<std::uint8_t> model_bytes) const {
  const ClientRuntime& client = clients_[client_index];
  const ModelParams global = parse_model(model_bytes);

  TrainConfig train = cfg_.train;
  train.seed = Rng::derive(cfg_.seed, 30, static_cast<std::uint64_t>(round),
                           client_index);
  const std::uint64_t sample_seed = Rng::derive(
      cfg_.seed, 31, static_cast<std::uint64_t>(round), client_index);

  std::vector<SampleRef> refs;
  if (pool_ != nullptr) {
    refs = sample_training_set(client.data, *pool_, cfg_.augmentation.local_range,
                               cfg_.augmentation.aug_range, sample_seed,
                               cfg_.augmentation.mode);
  } else {
    // Stock mode: the same local sampling rule with no pool draws.
    AugmentPool empty;
    empty.by_class.resize(static_cast<std::size_t>(cfg_.model.num_classes));
    empty.per_class_size = 0;
    refs = sample_training_set(client.data, empty, cfg_.augmentation.local_range,
                               {0, 0}, sample_seed, AugmentMode::kAllClasses);
  }

  // Sample-level LDP: perturb the sampled local segments (pool segments are
  // already public) before the gradients are derived.
  std::vector<DataSegment> perturbed;
  if (cfg_.privacy.mode == PrivacyMode::kSampleLDP) {
    Rng ldp_rng(Rng::derive(cfg_.seed, 32, static_cast<std::uint64_t>(round),
                            client_index));
    std::set<const Tensor*> pool_tensors;
    if (pool_ != nullptr) {
      for (const auto& cls : pool_->by_class) {
        for (const DataSegment& seg : cls) pool_tensors.insert(&seg.values);
      }
    }
    perturbed.reserve(refs.size());
    for (SampleRef& ref : refs) {
      if (pool_tensors.count(ref.values)) continue;
      DataSegment original;
      original.values = *ref.values;
      original.label = ref.label;
      perturbed.push_back(perturb_segment(original, cfg_.privacy,
                                          cfg_.model.num_classes, ldp_rng));
      ref.values = &perturbed.back().values;
      ref.label = perturbed.back().label;
    }
  }

  GradientUpdate update;
  if (refs.empty()) {
    update = zero_update_like(global);
  } else {
    update = local_train(global, refs, train);
  }
  update.client_id = client.state.client_id;
  update.round = static_cast<std::uint64_t>(round);
  update.sample_count = std::max<std::size_t>(1, refs.size());
  return update;
}

EvalMetrics Simulation::eval_global() { return evaluate(*global_, test_refs_); }

void Simulation::on_deadline() {
  round_.phase = Phase::kAggregating;
  log_.record(clock_.now(), "server", "deadline",
              {{"round", round_.round_index},
               {"n_uploaded", round_.uploaded.size()},
               {"n_carried", round_.carried_over.size()}});

  std::optional<EvalMetrics> accepted_eval;
  auto is_acceptable = [this, &accepted_eval](const ModelParams& candidate) {
    const EvalMetrics m = evaluate(candidate, test_refs_);
    if (!std::isfinite(m.loss)) return false;
    accepted_eval = m;
    return true;
  };

  const auto wall_start = std::chrono::steady_clock::now();
  AggregationResult result =
      aggregate_round(round_, cfg_.protocol, agg_state_, *global_, cfg_.privacy,
                      noise_rng_, is_acceptable);
  const auto wall_end = std::chrono::steady_clock::now();

  std::vector<GradientUpdate> carried_next;
  if (result.outcome == Outcome::kAccepted) {
    global_ = std::make_shared<const ModelParams>(std::move(*result.model));
    agg_state_ = std::move(result.aggregator_state);
    auto bytes = serialize_model(*global_);
    const std::string digest = bytes_digest(bytes);
    blobs_.put("model/" + std::to_string(round_.round_index + 1),
               std::move(bytes));
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& [client, upload_round] : result.inputs) {
      inputs.push_back({{"client", client}, {"round", upload_round}});
    }
    log_.record(clock_.now(), "server", "aggregate",
                {{"round", round_.round_index},
                 {"inputs", inputs},
                 {"digest", digest}});
  } else {
    carried_next = round_.carried_over;
    carried_next.insert(carried_next.end(), round_.uploaded.begin(),
                        round_.uploaded.end());
  }
  round_.outcome = result.outcome;

  nlohmann::json outcome_payload = {{"round", round_.round_index},
                                    {"outcome", outcome_name(result.outcome)},
                                    {"carried_to_next", carried_next.size()}};
  if (!result.abort_reason.empty()) {
    outcome_payload["reason"] = result.abort_reason;
  }
  log_.record(clock_.now(), "server", "round_outcome", outcome_payload);

  EvalMetrics eval;
  if (accepted_eval && result.outcome == Outcome::kAccepted) {
    eval = *accepted_eval;
  } else if (last_eval_) {
    eval = *last_eval_;  // model unchanged on abort
  } else {
    eval = eval_global();
  }
  last_eval_ = eval;

  RoundRecord record;
  record.round = round_.round_index;
  record.accuracy = eval.accuracy;
  record.loss = eval.loss;
  record.n_accepted = static_cast<int>(round_.accepted_clients.size());
  record.n_uploaded = static_cast<int>(round_.uploaded.size());
  record.n_dropped = dropped_this_round_;
  record.n_carried = static_cast<int>(round_.carried_over.size());
  record.agg_ms =
      cfg_.wall_clock_agg_timing
          ? std::chrono::duration<double, std::milli>(wall_end - wall_start)
                .count()
          : 0.0;
  record.outcome = outcome_name(result.outcome);
  metrics_.rounds.push_back(record);

  // Start New Round policy.
  if (cfg_.protocol.target_accuracy &&
      eval.accuracy >= *cfg_.protocol.target_accuracy) {
    log_.record(clock_.now(), "server", "stop",
                {{"reason", "target_accuracy"},
                 {"rounds", round_.round_index + 1}});
    round_.phase = Phase::kClosed;
    stopped_ = true;
    return;
  }
  if (round_.round_index + 1 >= cfg_.protocol.max_rounds) {
    log_.record(clock_.now(), "server", "stop",
                {{"reason", "max_rounds"}, {"rounds", round_.round_index + 1}});
    round_.phase = Phase::kClosed;
    stopped_ = true;
    return;
  }
  open_round(round_.round_index + 1, std::move(carried_next));
}

SimulationResult Simulation::run() {
  cfg_.validate();
  load_dataset();

  global_ = std::make_shared<const ModelParams>(
      build_model(cfg_.model.channels, cfg_.model.num_classes,
                  cfg_.model.bn_enabled, Rng::derive(cfg_.seed, 12),
                  cfg_.model.kernel1, cfg_.model.kernel2));
  noise_rng_ = Rng(Rng::derive(cfg_.seed, 13));

  agg_state_ = AggregatorState::init(cfg_.aggregator.kind, *global_,
                                     cfg_.aggregator.server_lr,
                                     cfg_.aggregator.beta1, cfg_.aggregator.beta2,
                                     cfg_.aggregator.tau);
  test_refs_ = make_refs(test_data_);
  setup_clients();

  blobs_.put("model/0", serialize_model(*global_));

  SimulationResult out;
  if (cfg_.protocol.max_rounds > 0) {
    open_round(0, {});
    clock_.run_all();
  }

  out.metrics = std::move(metrics_);
  out.events = std::move(log_);
  out.final_eval = test_refs_.empty() ? EvalMetrics{} : eval_global();
  out.final_model = *global_;
  return out;
}

}  // namespace

SimulationResult run_simulation(const ExperimentConfig& cfg) {
  Simulation sim(cfg);
  return sim.run();
}

}  // namespace flsim
