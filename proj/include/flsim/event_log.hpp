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

#ifndef FLSIM_EVENT_LOG_HPP_
#define FLSIM_EVENT_LOG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "flsim/tensor.hpp"

namespace flsim {

// One structured audit record. Serialized as a JSON line:
//   {"t":..., "actor":"...", "kind":"...", ...payload}
struct Event {
  std::int64_t t = 0;
  std::string actor;
  std::string kind;
  nlohmann::json payload;

  std::string to_json_line() const;
  static Event from_json_line(const std::string& line);
};

class EventLog {
 public:
  void record(std::int64_t t, std::string actor, std::string kind,
              nlohmann::json payload = nlohmann::json::object());
  const std::vector<Event>& events() const { return events_; }

  void write(const std::string& path) const;
  static std::vector<Event> read(const std::string& path);

 private:
  std::vector<Event> events_;
};

// Replays an event stream and checks the protocol safety properties:
//   - every aggregated update was uploaded at or before its round's deadline
//     by an accepted client, or carried over from an aborted round
//   - no client appears twice in one aggregation's inputs
//   - registration requests during Aggregating are denied
//   - carried-over updates are consumed by exactly one later accepted round
//     or remain pending at termination
//   - round indices strictly increase
// Returns human-readable violation descriptions (empty == safe).
std::vector<std::string> check_event_log(const std::vector<Event>& events);

}  // namespace flsim

#endif  // FLSIM_EVENT_LOG_HPP_
