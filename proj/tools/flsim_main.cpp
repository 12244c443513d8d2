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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "flsim/config.hpp"
#include "flsim/container.hpp"
#include "flsim/experiments.hpp"
#include "flsim/pipeline.hpp"
#include "flsim/protocol.hpp"
#include "flsim/synth.hpp"

namespace fs = std::filesystem;
using namespace flsim;

namespace {

constexpr char kVersion[] = "0.1.0";

struct PreprocessArgs {
  std::string sensors;
  std::string labels;
  std::string out;
  PreprocessOptions opts;
  std::string rates_csv = "5,10,20,50";
};

std::vector<int> parse_int_list(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

int cmd_preprocess(const PreprocessArgs& args) {
  auto points = read_sensor_csv(args.sensors);
  auto labels = read_label_csv(args.labels);
  PreprocessOptions opts = args.opts;
  opts.target_rates = parse_int_list(args.rates_csv);

  const PreprocessResult result = preprocess(points, labels, opts);

  fs::create_directories(args.out);
  write_segments(result.train, (fs::path(args.out) / "train.flsc").string());
  write_segments(result.test, (fs::path(args.out) / "test.flsc").string());
  nlohmann::json stats = {{"mean", result.stats.mean},
                          {"stddev", result.stats.stddev},
                          {"clip_min", result.stats.clip_min},
                          {"clip_max", result.stats.clip_max}};
  std::ofstream((fs::path(args.out) / "stats.json").string()) << stats.dump(2) << "\n";

  std::cout << "sessions: " << result.sessions_accepted << "/"
            << result.sessions_total << " accepted\n"
            << "segments: " << result.train.size() << " train, "
            << result.test.size() << " test (" << result.segments_before_filter
            << " before filtering)\n";
  for (const std::string& w : result.warnings) {
    std::cout << "warning: " << w << "\n";
  }
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  const ExperimentConfig cfg = load_config(config_path);
  SynthConfig synth = cfg.synth;
  synth.seed = Rng::derive(cfg.seed, 10);
  const SynthDataset ds = synth_generate(synth);

  fs::create_directories(out);
  for (std::size_t i = 0; i < ds.clients.size(); ++i) {
    write_segments(ds.clients[i],
                   (fs::path(out) / ("client_" + std::to_string(i) + ".flsc")).string());
  }
  write_segments(ds.test, (fs::path(out) / "test.flsc").string());
  std::vector<DataSegment> volunteer;
  for (const auto& cls : ds.volunteer_by_class) {
    volunteer.insert(volunteer.end(), cls.begin(), cls.end());
  }
  write_segments(volunteer, (fs::path(out) / "volunteer.flsc").string());

  std::cout << "clients: " << ds.clients.size() << "\n"
            << "test segments: " << ds.test.size() << "\n"
            << "volunteer segments: " << volunteer.size() << "\n";
  return 0;
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out, bool parallel) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (parallel) cfg.parallel_clients = true;

  const SimulationResult result = run_simulation(cfg);

  fs::create_directories(out);
  result.metrics.write_csv((fs::path(out) / "metrics.csv").string());
  result.events.write((fs::path(out) / "events.jsonl").string());
  save_model(result.final_model, (fs::path(out) / "final_model.flsc").string());
  std::ofstream((fs::path(out) / "config.json").string())
      << config_to_json(cfg).dump(2) << "\n";

  std::cout << "rounds: " << result.metrics.rounds.size() << "\n";
  if (!result.metrics.rounds.empty()) {
    const RoundRecord& last = result.metrics.rounds.back();
    std::cout << "final accuracy: " << last.accuracy << "\n"
              << "final loss: " << last.loss << "\n";
  }
  return 0;
}

int cmd_report(const std::string& in_dir) {
  const MetricsLog log =
      MetricsLog::read_csv((fs::path(in_dir) / "metrics.csv").string());

  int accepted = 0, aborted = 0;
  double acc_sum = 0.0;
  long participants = 0;
  for (const RoundRecord& r : log.rounds) {
    if (r.outcome == "accepted") {
      ++accepted;
    } else {
      ++aborted;
    }
    acc_sum += r.accuracy;
    participants += r.n_uploaded;
  }
  const std::size_t n = log.rounds.size();

  nlohmann::json summary = {
      {"rounds", n},
      {"rounds_accepted", accepted},
      {"rounds_aborted", aborted},
      {"final_accuracy", n ? log.rounds.back().accuracy : 0.0},
      {"final_loss", n ? log.rounds.back().loss : 0.0},
      {"mean_accuracy", n ? acc_sum / static_cast<double>(n) : 0.0},
      {"total_uploads", participants}};

  std::ostringstream csv;
  csv << "rounds,rounds_accepted,rounds_aborted,final_accuracy,final_loss,"
         "mean_accuracy,total_uploads\n"
      << n << ',' << accepted << ',' << aborted << ','
      << summary["final_accuracy"].get<double>() << ','
      << summary["final_loss"].get<double>() << ','
      << summary["mean_accuracy"].get<double>() << ',' << participants << "\n";
  std::ofstream((fs::path(in_dir) / "report.csv").string()) << csv.str();

  std::cout << "rounds:          " << n << "\n"
            << "accepted:        " << accepted << "\n"
            << "aborted:         " << aborted << "\n"
            << "final accuracy:  " << summary["final_accuracy"].get<double>() << "\n"
            << "final loss:      " << summary["final_loss"].get<double>() << "\n"
            << "mean accuracy:   " << summary["mean_accuracy"].get<double>() << "\n"
            << "total uploads:   " << participants << "\n";
  return 0;
}

int cmd_dropout(const std::string& config_path, const std::string& p_drops_csv,
                const std::string& out) {
  const ExperimentConfig base = load_config(config_path);
  const std::vector<double> p_drops = parse_double_list(p_drops_csv);
  if (p_drops.empty()) throw ConfigError("--p-drops needs at least one value");

  std::vector<SimulationResult> results;
  const std::vector<DropoutRow> table = experiment_dropout(base, p_drops, &results);

  fs::create_directories(out);
  std::ofstream((fs::path(out) / "dropout.csv").string())
      << dropout_table_csv(table);
  for (std::size_t i = 0; i < results.size(); ++i) {
    std::ostringstream dir;
    dir << "p_drop_" << p_drops[i];
    fs::create_directories(fs::path(out) / dir.str());
    results[i].metrics.write_csv(
        (fs::path(out) / dir.str() / "metrics.csv").string());
  }

  std::cout << dropout_table_csv(table);
  return 0;
}

int cmd_scaling(const std::string& counts_csv, int channels, int reps,
                std::uint64_t seed, const std::string& out) {
  const std::vector<int> counts = parse_int_list(counts_csv);
  if (counts.empty()) throw ConfigError("--counts needs at least one value");

  const std::vector<ScalingRow> table =
      experiment_scaling(counts, channels, 5, reps, seed);

  std::vector<double> x, y;
  for (const ScalingRow& r : table) {
    x.push_back(r.clients);
    y.push_back(r.mean_agg_ms);
  }
  const LinearFit fit = linear_fit(x, y);

  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream((fs::path(out) / "scaling.csv").string())
        << scaling_table_csv(table);
  }
  std::cout << scaling_table_csv(table);
  std::printf("linear fit: %.6f ms/client + %.3f ms, R^2 = %.5f\n", fit.slope,
              fit.intercept, fit.r_squared);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous federated-learning protocol simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* preprocess_cmd = app.add_subcommand(
      "preprocess", "Turn raw sensor + label logs into train/test segments");
  preprocess_cmd->add_option("--sensors", pre.sensors, "Sensor CSV (timestamp_ms,x,y,z)")
      ->required();
  preprocess_cmd->add_option("--labels", pre.labels, "Label CSV (start_ms,end_ms,label)")
      ->required();
  preprocess_cmd->add_option("--out", pre.out, "Output directory")->required();
  preprocess_cmd->add_option("--gap-threshold-ms", pre.opts.gap_threshold_ms,
                             "Session split threshold");
  preprocess_cmd->add_option("--rates", pre.rates_csv, "Target rates (Hz, csv)");
  preprocess_cmd->add_option("--rate-tolerance", pre.opts.rate_tolerance,
                             "Relative rate tolerance");
  preprocess_cmd->add_option("--min-duration-ms", pre.opts.min_duration_ms,
                             "Minimum session duration");
  preprocess_cmd->add_option("--label-trim-ms", pre.opts.label_trim_ms,
                             "Trim from each label session end");
  preprocess_cmd->add_option("--label-cap-ms", pre.opts.label_cap_ms,
                             "Maximum label session length");
  preprocess_cmd->add_option("--window", pre.opts.window, "Segment window size");
  preprocess_cmd->add_option("--classes", pre.opts.num_classes, "Number of classes");
  preprocess_cmd->add_option("--majority-count", pre.opts.majority_count,
                             "Classes that use the majority overlap");
  preprocess_cmd->add_option("--majority-overlap", pre.opts.majority_overlap,
                             "Overlap for majority classes");
  preprocess_cmd->add_option("--minority-overlap", pre.opts.minority_overlap,
                             "Overlap for minority classes");
  preprocess_cmd->add_option("--flat-window", pre.opts.flat_window,
                             "Rolling window for the flat filter");
  preprocess_cmd->add_option("--flat-threshold", pre.opts.flat_threshold,
                             "Mean variance threshold");
  preprocess_cmd->add_option("--test-fraction", pre.opts.test_fraction,
                             "Held-out fraction");
  preprocess_cmd->add_option("--seed", pre.opts.seed, "Split seed");

  std::string synth_config, synth_out;
  auto* synth_cmd =
      app.add_subcommand("synth", "Generate a synthetic non-IID dataset");
  synth_cmd->add_option("--config", synth_config, "Experiment config (JSON)")
      ->required();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  std::string run_config, run_out;
  std::optional<std::uint64_t> run_seed;
  bool run_parallel = false;
  auto* run_cmd = app.add_subcommand("run", "Run a federated experiment");
  run_cmd->add_option("--config", run_config, "Experiment config (JSON)")
      ->required();
  run_cmd->add_option("--seed", run_seed, "Override the config seed");
  run_cmd->add_option("--out", run_out, "Output directory")->required();
  run_cmd->add_flag("--parallel", run_parallel,
                    "Train accepted clients on worker threads");

  std::string report_in;
  auto* report_cmd =
      app.add_subcommand("report", "Summarize a run's metrics file");
  report_cmd->add_option("--in", report_in, "Run output directory")->required();

  std::string drop_config, drop_out, drop_ps = "0,0.25,0.5";
  auto* drop_cmd = app.add_subcommand(
      "dropout", "Accuracy vs client dropout probability study");
  drop_cmd->add_option("--config", drop_config, "Base experiment config")
      ->required();
  drop_cmd->add_option("--p-drops", drop_ps, "Dropout probabilities (csv)");
  drop_cmd->add_option("--out", drop_out, "Output directory")->required();

  std::string scale_counts = "60,120,240,480,960", scale_out;
  int scale_channels = 64, scale_reps = 5;
  std::uint64_t scale_seed = 1;
  auto* scale_cmd = app.add_subcommand(
      "scaling", "Aggregation wall-time vs client count study");
  scale_cmd->add_option("--counts", scale_counts, "Client counts (csv)");
  scale_cmd->add_option("--channels", scale_channels, "Model width");
  scale_cmd->add_option("--reps", scale_reps, "Repetitions per count");
  scale_cmd->add_option("--seed", scale_seed, "Synthetic update seed");
  scale_cmd->add_option("--out", scale_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (preprocess_cmd->parsed()) return cmd_preprocess(pre);
    if (synth_cmd->parsed()) return cmd_synth(synth_config, synth_out);
    if (run_cmd->parsed())
      return cmd_run(run_config, run_seed, run_out, run_parallel);
    if (report_cmd->parsed()) return cmd_report(report_in);
    if (drop_cmd->parsed()) return cmd_dropout(drop_config, drop_ps, drop_out);
    if (scale_cmd->parsed())
      return cmd_scaling(scale_counts, scale_channels, scale_reps, scale_seed,
                         scale_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
