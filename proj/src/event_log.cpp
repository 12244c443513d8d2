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

#include "flsim/event_log.hpp"

#include <fstream>
#include <map>
#include <set>

namespace flsim {

std::string Event::to_json_line() const {
  nlohmann::json j = payload;
  j["t"] = t;
  j["actor"] = actor;
  j["kind"] = kind;
  return j.dump();
}

Event Event::from_json_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  Event e;
  e.t = j.at("t").get<std::int64_t>();
  e.actor = j.at("actor").get<std::string>();
  e.kind = j.at("kind").get<std::string>();
  j.erase("t");
  j.erase("actor");
  j.erase("kind");
  e.payload = std::move(j);
  return e;
}

void EventLog::record(std::int64_t t, std::string actor, std::string kind,
                      nlohmann::json payload) {
  events_.push_back(Event{t, std::move(actor), std::move(kind), std::move(payload)});
}

void EventLog::write(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw Error("cannot open event log '" + path + "' for writing");
  for (const Event& e : events_) f << e.to_json_line() << "\n";
}

std::vector<Event> EventLog::read(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open event log '" + path + "' for reading");
  std::vector<Event> events;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) events.push_back(Event::from_json_line(line));
  }
  return events;
}

std::vector<std::string> check_event_log(const std::vector<Event>& events) {
  std::vector<std::string> violations;
  auto violation = [&](const std::string& msg, const Event& e) {
    violations.push_back(msg + " (t=" + std::to_string(e.t) + ", kind=" +
                         e.kind + ")");
  };

  enum class Phase { kIdle, kOpen, kAggregating };
  Phase phase = Phase::kIdle;
  std::int64_t current_round = -1;
  std::int64_t current_deadline = 0;
  std::int64_t last_opened_round = -1;

  // (client, round) sets for the current round and the carry-over pool.
  std::set<std::pair<std::string, std::int64_t>> aft_granted;
  std::set<std::pair<std::string, std::int64_t>> accepted_uploads_this_round;
  std::set<std::pair<std::string, std::int64_t>> carried_pending;

  for (const Event& e : events) {
    if (e.kind == "round_open") {
      const std::int64_t round = e.payload.at("round").get<std::int64_t>();
      if (round <= last_opened_round) {
        violation("round index did not strictly increase: " +
                      std::to_string(round) + " after " +
                      std::to_string(last_opened_round),
                  e);
      }
      last_opened_round = round;
      current_round = round;
      current_deadline = e.payload.at("deadline").get<std::int64_t>();
      phase = Phase::kOpen;
      accepted_uploads_this_round.clear();
    } else if (e.kind == "rtcm_response") {
      const std::string response = e.payload.at("response").get<std::string>();
      const std::string client = e.payload.at("client").get<std::string>();
      if (phase == Phase::kAggregating && response == "AFT") {
        violation("registration accepted during aggregation for " + client, e);
      }
      if (response == "AFT") {
        aft_granted.insert({client, e.payload.at("round").get<std::int64_t>()});
      }
    } else if (e.kind == "upload_result") {
      const bool accepted = e.payload.at("accepted").get<bool>();
      if (!accepted) continue;
      const std::string client = e.payload.at("client").get<std::string>();
      const std::int64_t round = e.payload.at("round").get<std::int64_t>();
      if (phase != Phase::kOpen || round != current_round) {
        violation("upload accepted outside an open round from " + client, e);
      }
      if (e.t > current_deadline) {
        violation("late upload accepted from " + client, e);
      }
      if (!aft_granted.count({client, round})) {
        violation("upload accepted from client without AFT: " + client, e);
      }
      if (!accepted_uploads_this_round.insert({client, round}).second) {
        violation("duplicate upload accepted from " + client, e);
      }
    } else if (e.kind == "deadline") {
      const std::int64_t round = e.payload.at("round").get<std::int64_t>();
      if (round != current_round) {
        violation("deadline for a round that is not open", e);
      }
      phase = Phase::kAggregating;
    } else if (e.kind == "aggregate") {
      // Aggregations are logged only when committed.
      const std::int64_t round = e.payload.at("round").get<std::int64_t>();
      std::set<std::string> clients_seen;
      for (const auto& input : e.payload.at("inputs")) {
        const std::string client = input.at("client").get<std::string>();
        const std::int64_t upload_round = input.at("round").get<std::int64_t>();
        if (!clients_seen.insert(client).second) {
          violation("client " + client + " appears twice in one aggregation", e);
        }
        if (upload_round == round) {
          if (!accepted_uploads_this_round.count({client, upload_round})) {
            violation("aggregated update was never accepted: " + client, e);
          }
        } else if (upload_round < round) {
          const auto key = std::make_pair(client, upload_round);
          if (!carried_pending.count(key)) {
            violation("carried update consumed twice or never carried: " +
                          client + "@" + std::to_string(upload_round),
                      e);
          }
          carried_pending.erase(key);
        } else {
          violation("aggregated update from a future round", e);
        }
      }
    } else if (e.kind == "round_outcome") {
      const std::string outcome = e.payload.at("outcome").get<std::string>();
      if (outcome == "aborted") {
        for (const auto& entry : accepted_uploads_this_round) {
          carried_pending.insert(entry);
        }
      } else if (outcome == "accepted") {
        // Aggregation consumed this round's uploads and all carried updates.
        if (!carried_pending.empty()) {
          const Event& err = e;
          for (const auto& [client, round] : carried_pending) {
            violation("carried update from " + client + "@" +
                          std::to_string(round) +
                          " not consumed by the accepting round",
                      err);
          }
          carried_pending.clear();
        }
      }
      accepted_uploads_this_round.clear();
    }
  }
  return violations;
}

}  // namespace flsim
