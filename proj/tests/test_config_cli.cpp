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

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flsim/config.hpp"
#include "flsim/metrics.hpp"
#include "test_support.hpp"

using namespace flsim;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

// Runs the CLI binary (stdout+stderr captured).
CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(FLSIM_CLI_PATH) + " " + args + " 2>&1";
  std::array<char, 4096> buf{};
  std::string output;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  while (fgets(buf.data(), buf.size(), pipe) != nullptr) output += buf.data();
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), output};
}

std::string write_temp_config(const nlohmann::json& j, const std::string& name) {
  const std::string path = test::temp_path(name);
  std::ofstream(path) << j.dump(2);
  return path;
}

nlohmann::json small_run_config() {
  return {
      {"seed", 5},
      {"dataset",
       {{"source", "synthetic"},
        {"synthetic",
         {{"n_clients", 4},
          {"count_range", {10, 20}},
          {"volunteer_per_class", 20},
          {"test_per_class", 5}}}}},
      {"model", {{"channels", 4}}},
      {"train", {{"epochs", 1}, {"batch_size", 16}}},
      {"protocol",
       {{"max_rounds", 2}, {"deadline_ms", 10000}, {"client_training_ms", 2000},
        {"rtcm_jitter_ms", 2000}}},
      {"augmentation", {{"per_class", 10}, {"local_range", {2, 4}}, {"aug_range", {1, 2}}}},
  };
}

}  // namespace

TEST_CASE("defaults parse and validate") {
  const ExperimentConfig cfg = parse_config(nlohmann::json::object());
  CHECK(cfg.model.channels == 8);
  CHECK(cfg.protocol.deadline_ms == 360000);
  CHECK(cfg.aggregator.kind == AggregatorKind::kFedAvg);
  CHECK(cfg.augmentation.per_class == 640);
  CHECK(cfg.privacy.mode == PrivacyMode::kNone);
}

TEST_CASE("unknown keys are rejected with their dotted path") {
  nlohmann::json j = {{"protocol", {{"deadlnie_ms", 100}}}};
  CHECK_THROWS_WITH_AS(parse_config(j),
                       doctest::Contains("protocol.deadlnie_ms"), ConfigError);
  nlohmann::json top = {{"sede", 1}};
  CHECK_THROWS_WITH_AS(parse_config(top), doctest::Contains("sede"), ConfigError);
}

TEST_CASE("invalid values are rejected with the key name") {
  nlohmann::json j = {{"train", {{"dropout_rate", 1.5}}}};
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("dropout_rate"),
                       ConfigError);
  nlohmann::json agg = {{"aggregator", {{"kind", "fedprox"}}}};
  CHECK_THROWS_WITH_AS(parse_config(agg), doctest::Contains("fedprox"), Error);
  nlohmann::json dp = {{"privacy", {{"mode", "user_dp"}}},
                       {"aggregator", {{"kind", "fedyogi"}}}};
  CHECK_THROWS_AS(parse_config(dp), ConfigError);
}

TEST_CASE("config round-trip parse -> serialize -> parse is the identity") {
  nlohmann::json j = small_run_config();
  j["aggregator"] = {{"kind", "fedyogi"}, {"tau", 0.01}};
  j["privacy"] = {{"mode", "sample_ldp"}, {"mechanism", "laplace"}};
  j["faults"] = {{"p_drop", 0.25}};
  const ExperimentConfig cfg = parse_config(j);
  const nlohmann::json serialized = config_to_json(cfg);
  const ExperimentConfig reparsed = parse_config(serialized);
  CHECK(config_to_json(reparsed) == serialized);
}

TEST_CASE("metrics CSV round-trips exactly") {
  MetricsLog log;
  log.rounds.push_back(
      {0, 0.123456789012345, 1.5, 4, 3, 1, 0, 0.0, "accepted"});
  log.rounds.push_back({1, 0.25, 1.25, 5, 5, 0, 2, 0.0, "aborted"});
  const std::string path = test::temp_path("metrics.csv");
  log.write_csv(path);
  const MetricsLog back = MetricsLog::read_csv(path);
  REQUIRE(back.rounds.size() == 2);
  CHECK(back.rounds[0].accuracy == log.rounds[0].accuracy);
  CHECK(back.rounds[0].outcome == "accepted");
  CHECK(back.rounds[1].n_carried == 2);
  CHECK(back.to_csv() == log.to_csv());
  std::remove(path.c_str());
}

TEST_CASE("cli: --version and --help succeed") {
  CHECK(run_cli("--version").exit_code == 0);
  const CliResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("run") != std::string::npos);
  CHECK(help.output.find("preprocess") != std::string::npos);
}

TEST_CASE("cli: unknown flags exit 2") {
  CHECK(run_cli("run --bogus-flag 1").exit_code == 2);
  CHECK(run_cli("frobnicate").exit_code == 2);
}

TEST_CASE("cli: missing files and bad config keys exit 2 with the key named") {
  CHECK(run_cli("run --config /nonexistent.json --out /tmp/x").exit_code == 2);

  const std::string bad = write_temp_config(
      {{"aggregator", {{"kind", "fedmagic"}}}}, "bad_agg.json");
  const CliResult result = run_cli("run --config " + bad + " --out /tmp/x");
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("fedmagic") != std::string::npos);
  std::remove(bad.c_str());
}

TEST_CASE("cli: run with max_rounds=0 writes a header-only metrics file") {
  nlohmann::json j = small_run_config();
  j["protocol"]["max_rounds"] = 0;
  const std::string cfg = write_temp_config(j, "zero_rounds.json");
  const std::string out = test::temp_path("zero_rounds_out");
  const CliResult result = run_cli("run --config " + cfg + " --out " + out);
  CHECK(result.exit_code == 0);
  std::ifstream metrics(out + "/metrics.csv");
  std::string line;
  REQUIRE(std::getline(metrics, line));
  CHECK(line.find("round,accuracy") == 0);
  CHECK_FALSE(std::getline(metrics, line));
  fs::remove_all(out);
  std::remove(cfg.c_str());
}

TEST_CASE("cli: identical seeds give byte-identical outputs") {
  const std::string cfg = write_temp_config(small_run_config(), "det.json");
  const std::string out1 = test::temp_path("det_out1");
  const std::string out2 = test::temp_path("det_out2");
  CHECK(run_cli("run --config " + cfg + " --seed 7 --out " + out1).exit_code == 0);
  CHECK(run_cli("run --config " + cfg + " --seed 7 --out " + out2).exit_code == 0);

  for (const std::string file : {"metrics.csv", "events.jsonl", "final_model.flsc"}) {
    std::ifstream a(out1 + "/" + file, std::ios::binary);
    std::ifstream b(out2 + "/" + file, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)),
                         std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)),
                         std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK_FALSE(sa.empty());
  }
  fs::remove_all(out1);
  fs::remove_all(out2);
  std::remove(cfg.c_str());
}

TEST_CASE("cli: synth then run from files matches the synthetic source") {
  nlohmann::json j = small_run_config();
  const std::string cfg = write_temp_config(j, "synth.json");
  const std::string data_dir = test::temp_path("synth_data");
  CHECK(run_cli("synth --config " + cfg + " --out " + data_dir).exit_code == 0);
  CHECK(fs::exists(data_dir + "/client_0.flsc"));
  CHECK(fs::exists(data_dir + "/test.flsc"));
  CHECK(fs::exists(data_dir + "/volunteer.flsc"));

  nlohmann::json from_files = j;
  from_files["dataset"] = {{"source", "files"}, {"files", {{"dir", data_dir}}}};
  const std::string cfg2 = write_temp_config(from_files, "files.json");
  const std::string out = test::temp_path("files_out");
  const CliResult result = run_cli("run --config " + cfg2 + " --out " + out);
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out + "/metrics.csv"));

  fs::remove_all(data_dir);
  fs::remove_all(out);
  std::remove(cfg.c_str());
  std::remove(cfg2.c_str());
}

TEST_CASE("cli: report recomputes totals from the metrics file") {
  const std::string cfg = write_temp_config(small_run_config(), "rep.json");
  const std::string out = test::temp_path("rep_out");
  REQUIRE(run_cli("run --config " + cfg + " --out " + out).exit_code == 0);
  const CliResult report = run_cli("report --in " + out);
  CHECK(report.exit_code == 0);

  const MetricsLog log = MetricsLog::read_csv(out + "/metrics.csv");
  int accepted = 0;
  for (const RoundRecord& r : log.rounds) {
    if (r.outcome == "accepted") ++accepted;
  }
  std::ostringstream expected;
  expected << "accepted:        " << accepted;
  CHECK(report.output.find(expected.str()) != std::string::npos);

  // The emitted aggregate CSV matches the recomputation too.
  std::ifstream rf(out + "/report.csv");
  std::string header, row;
  REQUIRE(std::getline(rf, header));
  REQUIRE(std::getline(rf, row));
  CHECK(row.find(std::to_string(log.rounds.size()) + "," +
                 std::to_string(accepted)) == 0);

  fs::remove_all(out);
  std::remove(cfg.c_str());
}

TEST_CASE("cli: preprocess runs the whole pipeline from raw csv files") {
  const std::string sensors = test::temp_path("raw_sensors.csv");
  const std::string labels = test::temp_path("raw_labels.csv");
  {
    std::ofstream f(sensors);
    f << "timestamp_ms,x,y,z\n";
    Rng rng(3);
    for (int i = 0; i < 1500; ++i) {
      f << i * 50 << ',' << rng.normal(0, 1) << ',' << rng.normal(0, 1) << ','
        << rng.normal(0, 1) << "\n";
    }
  }
  {
    std::ofstream f(labels);
    f << "0,40000,0\n40000,76000,1\n";
  }
  const std::string out = test::temp_path("pre_out");
  const CliResult result = run_cli("preprocess --sensors " + sensors +
                                   " --labels " + labels + " --out " + out);
  CHECK(result.exit_code == 0);
  CHECK(fs::exists(out + "/train.flsc"));
  CHECK(fs::exists(out + "/test.flsc"));
  CHECK(fs::exists(out + "/stats.json"));
  CHECK(result.output.find("sessions: 1/1 accepted") != std::string::npos);

  fs::remove_all(out);
  std::remove(sensors.c_str());
  std::remove(labels.c_str());
}
