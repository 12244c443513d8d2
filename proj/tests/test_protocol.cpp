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

#include "flsim/protocol.hpp"
#include "test_support.hpp"

using namespace flsim;

namespace {

GradientUpdate named_update(const std::string& client, std::int64_t round,
                            std::vector<double> values) {
  GradientUpdate u;
  const std::size_t n = values.size();
  u.deltas.emplace_back("w", Tensor({n}, std::move(values)));
  u.client_id = client;
  u.round = static_cast<std::uint64_t>(round);
  return u;
}

ModelParams tiny_model(std::vector<double> values) {
  ModelParams p;
  p.channels = 1;
  p.num_classes = 2;
  const std::size_t n = values.size();
  p.tensors.emplace_back("w", Tensor({n}, std::move(values)));
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.seed = 11;
  cfg.synth.n_clients = 6;
  cfg.synth.per_client_count = {10, 20};
  cfg.synth.dirichlet_alpha = 0.5;
  cfg.synth.volunteer_per_class = 30;
  cfg.synth.test_per_class = 5;
  cfg.model.channels = 4;
  cfg.train.epochs = 0;  // protocol behavior only; no numeric work
  cfg.protocol.max_rounds = 6;
  cfg.protocol.deadline_ms = 10000;
  cfg.protocol.client_training_ms = 2000;
  cfg.protocol.rtcm_jitter_ms = 3000;
  cfg.protocol.msg_latency_ms = 50;
  cfg.augmentation.enabled = true;
  cfg.augmentation.per_class = 16;
  cfg.augmentation.local_range = {2, 4};
  cfg.augmentation.aug_range = {1, 2};
  return cfg;
}

}  // namespace

TEST_CASE("sim clock runs events in time order with FIFO ties") {
  SimClock clock;
  std::vector<int> order;
  clock.schedule_at(10, [&]() { order.push_back(1); });
  clock.schedule_at(5, [&]() { order.push_back(2); });
  clock.schedule_at(10, [&]() { order.push_back(3); });
  clock.schedule_at(7, [&]() { order.push_back(4); });
  clock.run_all();
  CHECK(order == std::vector<int>{2, 4, 1, 3});
  CHECK(clock.now() == 10);
  CHECK_THROWS_AS(clock.schedule_at(5, []() {}), Error);
}

TEST_CASE("rtc policy follows the device flags") {
  ProtocolConfig policy;
  ClientState client;
  client.charging = true;
  client.connected = true;
  CHECK(evaluate_rtc_policy(client, policy));
  client.charging = false;
  CHECK_FALSE(evaluate_rtc_policy(client, policy));
  policy.rtc_requires_charging = false;
  CHECK(evaluate_rtc_policy(client, policy));
  client.connected = false;
  CHECK_FALSE(evaluate_rtc_policy(client, policy));
}

TEST_CASE("stt policy declines when training cannot fit before the deadline") {
  ProtocolConfig policy;
  policy.sttp_min_remaining_ms = 0;
  // 1 s remaining, 60 s training cost.
  CHECK_FALSE(evaluate_stt_policy(/*now=*/99000, /*deadline=*/100000,
                                  /*training_ms=*/60000, policy));
  CHECK(evaluate_stt_policy(/*now=*/10000, /*deadline=*/100000,
                            /*training_ms=*/60000, policy));
  policy.sttp_min_remaining_ms = 40000;
  CHECK_FALSE(evaluate_stt_policy(/*now=*/10000, /*deadline=*/100000,
                                  /*training_ms=*/60000, policy));
}

TEST_CASE("rtcm handling: allowlists, caps, phases, carried updates") {
  ProtocolConfig policy;
  RoundState round;
  round.round_index = 3;
  round.phase = Phase::kOpen;

  CHECK(server_handle_rtcm(round, policy, "client_1").accept);

  policy.adft_allowlist = std::set<std::string>{"client_1"};
  CHECK(server_handle_rtcm(round, policy, "client_1").accept);
  const auto denied = server_handle_rtcm(round, policy, "client_2");
  CHECK_FALSE(denied.accept);
  CHECK(denied.reason == "not_allowlisted");
  policy.adft_allowlist.reset();

  round.phase = Phase::kAggregating;
  const auto during_agg = server_handle_rtcm(round, policy, "client_1");
  CHECK_FALSE(during_agg.accept);
  CHECK(during_agg.reason == "aggregating");
  round.phase = Phase::kOpen;

  policy.adft_max_accepted = 2;
  round.accepted_clients = {"a", "b"};
  const auto full = server_handle_rtcm(round, policy, "client_9");
  CHECK_FALSE(full.accept);
  CHECK(full.reason == "round_full");
  // Already-accepted clients stay accepted even at the cap.
  CHECK(server_handle_rtcm(round, policy, "a").accept);

  policy.adft_max_accepted.reset();
  round.carried_over.push_back(named_update("client_7", 2, {0.0}));
  const auto carried = server_handle_rtcm(round, policy, "client_7");
  CHECK_FALSE(carried.accept);
  CHECK(carried.reason == "carried_update_pending");
}

TEST_CASE("upload acceptance is exactly-once, on time, accepted-only") {
  RoundState round;
  round.round_index = 2;
  round.deadline = 100000;
  round.phase = Phase::kOpen;
  round.accepted_clients = {"a", "b"};

  const auto ok = server_accept_upload(round, named_update("a", 2, {1}), 50000);
  CHECK(ok.accepted);

  const auto late =
      server_accept_upload(round, named_update("a", 2, {1}), 100001);
  CHECK_FALSE(late.accepted);
  CHECK(late.reason == "late");

  const auto at_deadline =
      server_accept_upload(round, named_update("b", 2, {1}), 100000);
  CHECK(at_deadline.accepted);

  const auto stranger =
      server_accept_upload(round, named_update("zz", 2, {1}), 50000);
  CHECK_FALSE(stranger.accepted);
  CHECK(stranger.reason == "not_accepted");

  round.uploaded.push_back(named_update("a", 2, {1}));
  const auto dup = server_accept_upload(round, named_update("a", 2, {2}), 60000);
  CHECK_FALSE(dup.accepted);
  CHECK(dup.reason == "duplicate");

  const auto stale = server_accept_upload(round, named_update("b", 1, {1}), 50000);
  CHECK_FALSE(stale.accepted);
  CHECK(stale.reason == "late");

  round.phase = Phase::kAggregating;
  const auto closed = server_accept_upload(round, named_update("b", 2, {1}), 99999);
  CHECK_FALSE(closed.accepted);
}

TEST_CASE("aggregation at the deadline follows SFAp and FedAvg arithmetic") {
  ProtocolConfig policy;
  policy.sfap_min_updates = 2;
  const ModelParams theta = tiny_model({1.0, 1.0});
  const auto agg = AggregatorState::init(AggregatorKind::kFedAvg, theta, 1.0);
  PrivacySpec no_privacy;
  Rng rng(1);

  RoundState round;
  round.round_index = 0;
  round.phase = Phase::kAggregating;
  round.uploaded = {named_update("a", 0, {3.0, 0.0}),
                    named_update("b", 0, {0.0, 3.0}),
                    named_update("c", 0, {0.0, 0.0})};

  const auto ok = aggregate_round(round, policy, agg, theta, no_privacy, rng,
                                  nullptr);
  CHECK(ok.outcome == Outcome::kAccepted);
  REQUIRE(ok.model.has_value());
  CHECK(ok.model->t("w").at(0) == doctest::Approx(2.0));
  CHECK(ok.model->t("w").at(1) == doctest::Approx(2.0));
  CHECK(ok.inputs.size() == 3);

  RoundState starved;
  starved.round_index = 1;
  starved.uploaded = {named_update("a", 1, {1.0, 1.0})};
  const auto aborted =
      aggregate_round(starved, policy, agg, theta, no_privacy, rng, nullptr);
  CHECK(aborted.outcome == Outcome::kAborted);
  CHECK(aborted.abort_reason == "insufficient_updates");
  CHECK_FALSE(aborted.model.has_value());

  RoundState empty;
  empty.round_index = 2;
  const auto nothing =
      aggregate_round(empty, policy, agg, theta, no_privacy, rng, nullptr);
  CHECK(nothing.outcome == Outcome::kAborted);

  // Carried-over updates count toward SFAp and enter the pool.
  RoundState carried;
  carried.round_index = 3;
  carried.carried_over = {named_update("old", 1, {6.0, 0.0})};
  carried.uploaded = {named_update("new", 3, {0.0, 6.0})};
  const auto merged =
      aggregate_round(carried, policy, agg, theta, no_privacy, rng, nullptr);
  CHECK(merged.outcome == Outcome::kAccepted);
  CHECK(merged.model->t("w").at(0) == doctest::Approx(4.0));
  CHECK(merged.inputs.size() == 2);

  // A rejected model aborts the round.
  const auto rejected = aggregate_round(
      round, policy, agg, theta, no_privacy, rng,
      [](const ModelParams&) { return false; });
  CHECK(rejected.outcome == Outcome::kAborted);
  CHECK(rejected.abort_reason == "model_rejected");
}

TEST_CASE("update wire format round-trips") {
  GradientUpdate u = named_update("client_3", 7, {0.25, -1.5, 3.75});
  u.sample_count = 42;
  const auto bytes = serialize_update(u);
  const GradientUpdate parsed = parse_update(bytes);
  CHECK(parsed.client_id == "client_3");
  CHECK(parsed.round == 7);
  CHECK(parsed.sample_count == 42);
  CHECK(parsed.deltas[0].second.data == u.deltas[0].second.data);
}

TEST_CASE("max_rounds = 0 yields empty metrics and the initial model") {
  ExperimentConfig cfg = small_config();
  cfg.protocol.max_rounds = 0;
  const SimulationResult result = run_simulation(cfg);
  CHECK(result.metrics.rounds.empty());
  CHECK(result.final_model.trainable_count() > 0);
}

TEST_CASE("simulation is deterministic in (config, seed)") {
  const ExperimentConfig cfg = small_config();
  const SimulationResult a = run_simulation(cfg);
  const SimulationResult b = run_simulation(cfg);
  CHECK(a.metrics.to_csv() == b.metrics.to_csv());
  REQUIRE(a.events.events().size() == b.events.events().size());
  for (std::size_t i = 0; i < a.events.events().size(); ++i) {
    CHECK(a.events.events()[i].to_json_line() ==
          b.events.events()[i].to_json_line());
  }

  ExperimentConfig other = cfg;
  other.seed = 12;
  const SimulationResult c = run_simulation(other);
  std::string a_log, c_log;
  for (const Event& e : a.events.events()) a_log += e.to_json_line() + "\n";
  for (const Event& e : c.events.events()) c_log += e.to_json_line() + "\n";
  CHECK(a_log != c_log);
}

TEST_CASE("liveness: with default policies every round is accepted") {
  const ExperimentConfig cfg = small_config();
  const SimulationResult result = run_simulation(cfg);
  REQUIRE(result.metrics.rounds.size() == 6);
  for (const RoundRecord& r : result.metrics.rounds) {
    CHECK(r.outcome == "accepted");
    CHECK(r.n_uploaded >= 1);
  }
  CHECK(check_event_log(result.events.events()).empty());
}

TEST_CASE("pool delivery is identical for every client") {
  const ExperimentConfig cfg = small_config();
  const SimulationResult result = run_simulation(cfg);
  std::set<std::string> digests;
  int deliveries = 0;
  for (const Event& e : result.events.events()) {
    if (e.kind == "pool_delivered") {
      digests.insert(e.payload.at("digest").get<std::string>());
      ++deliveries;
    }
  }
  CHECK(deliveries == cfg.synth.n_clients);
  CHECK(digests.size() == 1);
}

TEST_CASE("starved rounds abort and carry uploads to the next aggregation") {
  ExperimentConfig cfg = small_config();
  cfg.protocol.sfap_min_updates = 2;
  cfg.protocol.adft_max_accepted = 1;  // one fresh upload per round
  cfg.protocol.max_rounds = 4;

  const SimulationResult result = run_simulation(cfg);
  REQUIRE(result.metrics.rounds.size() == 4);
  // Round 0: 1 upload < 2 -> aborted, carried forward. Round 1: carried (1) +
  // fresh (1) = 2 -> accepted. The pattern then repeats.
  CHECK(result.metrics.rounds[0].outcome == "aborted");
  CHECK(result.metrics.rounds[1].outcome == "accepted");
  CHECK(result.metrics.rounds[1].n_carried == 1);
  CHECK(result.metrics.rounds[2].outcome == "aborted");
  CHECK(result.metrics.rounds[3].outcome == "accepted");
  CHECK(check_event_log(result.events.events()).empty());

  // The aggregation of round 1 must contain the round-0 carried update.
  bool found = false;
  for (const Event& e : result.events.events()) {
    if (e.kind == "aggregate" && e.payload.at("round").get<int>() == 1) {
      for (const auto& input : e.payload.at("inputs")) {
        if (input.at("round").get<int>() == 0) found = true;
      }
    }
  }
  CHECK(found);
}

TEST_CASE("full dropout keeps the model at its round-0 state") {
  ExperimentConfig cfg = small_config();
  cfg.faults.p_drop = 1.0;
  cfg.protocol.max_rounds = 3;
  const SimulationResult result = run_simulation(cfg);
  REQUIRE(result.metrics.rounds.size() == 3);
  for (const RoundRecord& r : result.metrics.rounds) {
    CHECK(r.outcome == "aborted");
    CHECK(r.n_uploaded == 0);
    CHECK(r.n_dropped >= 1);
    CHECK(r.accuracy == result.metrics.rounds[0].accuracy);
  }
}

TEST_CASE("registration denial injection produces DFT responses") {
  ExperimentConfig cfg = small_config();
  cfg.faults.p_deny_registration = 1.0;
  cfg.protocol.max_rounds = 2;
  const SimulationResult result = run_simulation(cfg);
  int denials = 0;
  for (const Event& e : result.events.events()) {
    if (e.kind == "rtcm_response") {
      CHECK(e.payload.at("response").get<std::string>() == "DFT");
      ++denials;
    }
  }
  CHECK(denials > 0);
  for (const RoundRecord& r : result.metrics.rounds) {
    CHECK(r.outcome == "aborted");
  }
}

TEST_CASE("upload delays past the deadline are rejected as late") {
  ExperimentConfig cfg = small_config();
  cfg.faults.upload_delay_ms = {20000, 30000};  // deadline is 10 s
  cfg.protocol.max_rounds = 2;
  const SimulationResult result = run_simulation(cfg);
  int late = 0;
  for (const Event& e : result.events.events()) {
    if (e.kind == "upload_result" && !e.payload.at("accepted").get<bool>()) {
      CHECK(e.payload.at("reason").get<std::string>() == "late");
      ++late;
    }
  }
  CHECK(late > 0);
  CHECK(check_event_log(result.events.events()).empty());
}

TEST_CASE("target accuracy stops training early") {
  ExperimentConfig cfg = small_config();
  cfg.train.epochs = 1;  // actually learn
  cfg.protocol.max_rounds = 40;
  cfg.protocol.target_accuracy = 0.3;
  const SimulationResult result = run_simulation(cfg);
  CHECK(result.metrics.rounds.size() < 40);
  CHECK(result.metrics.rounds.back().accuracy >= 0.3);
  bool stopped_on_target = false;
  for (const Event& e : result.events.events()) {
    if (e.kind == "stop" &&
        e.payload.at("reason").get<std::string>() == "target_accuracy") {
      stopped_on_target = true;
    }
  }
  CHECK(stopped_on_target);
}

TEST_CASE("event checker flags crafted violations") {
  // A duplicate client inside one aggregation.
  std::vector<Event> events;
  Event open{0, "server", "round_open", {{"round", 0}, {"deadline", 100}}};
  events.push_back(open);
  events.push_back(Event{50, "server", "aggregate",
                         {{"round", 0},
                          {"inputs",
                           nlohmann::json::array(
                               {{{"client", "a"}, {"round", 0}},
                                {{"client", "a"}, {"round", 0}}})},
                          {"digest", "00"}}});
  const auto violations = check_event_log(events);
  REQUIRE_FALSE(violations.empty());
  bool mentions_twice = false;
  for (const std::string& v : violations) {
    if (v.find("twice") != std::string::npos) mentions_twice = true;
  }
  CHECK(mentions_twice);

  // An AFT during aggregation.
  std::vector<Event> events2;
  events2.push_back(open);
  events2.push_back(Event{100, "server", "deadline",
                          {{"round", 0}, {"n_uploaded", 0}, {"n_carried", 0}}});
  events2.push_back(Event{
      100, "server", "rtcm_response",
      {{"client", "b"}, {"round", 0}, {"response", "AFT"}, {"phase", "aggregating"}}});
  CHECK_FALSE(check_event_log(events2).empty());

  // A late accepted upload.
  std::vector<Event> events3;
  events3.push_back(open);
  events3.push_back(Event{
      10, "server", "rtcm_response",
      {{"client", "c"}, {"round", 0}, {"response", "AFT"}, {"phase", "open"}}});
  events3.push_back(Event{150, "server", "upload_result",
                          {{"client", "c"}, {"round", 0}, {"accepted", true}}});
  const auto v3 = check_event_log(events3);
  REQUIRE_FALSE(v3.empty());
  CHECK(v3[0].find("late") != std::string::npos);

  // Round indices must strictly increase.
  std::vector<Event> events4;
  events4.push_back(open);
  events4.push_back(open);
  CHECK_FALSE(check_event_log(events4).empty());
}

TEST_CASE("parallel client training reproduces the reference outputs") {
  ExperimentConfig cfg = small_config();
  cfg.train.epochs = 1;
  cfg.protocol.max_rounds = 3;
  const SimulationResult serial = run_simulation(cfg);
  cfg.parallel_clients = true;
  const SimulationResult parallel = run_simulation(cfg);
  CHECK(serial.metrics.to_csv() == parallel.metrics.to_csv());
  REQUIRE(serial.events.events().size() == parallel.events.events().size());
  for (std::size_t i = 0; i < serial.events.events().size(); ++i) {
    CHECK(serial.events.events()[i].to_json_line() ==
          parallel.events.events()[i].to_json_line());
  }
}
