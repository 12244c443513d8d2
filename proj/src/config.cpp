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

#include "flsim/config.hpp"

#include <fstream>

namespace flsim {

namespace {

using nlohmann::json;

// Rejects keys that are not in the schema, naming the offending key with its
// dotted path so typos surface immediately.
void check_keys(const json& obj, const std::string& prefix,
                const std::set<std::string>& known) {
  if (!obj.is_object()) {
    throw ConfigError("config section '" + prefix + "' must be an object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("unknown config key '" +
                        (prefix.empty() ? key : prefix + "." + key) + "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, const std::string& prefix,
         T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + prefix + "." + key +
                      "' has the wrong type");
  }
}

// Re-tags enum-name parse failures as config errors so the CLI reports them
// as validation problems (exit 2), message preserved.
template <typename Fn>
auto as_config_error(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

std::array<int, 2> get_range(const json& obj, const std::string& key,
                             const std::string& prefix,
                             std::array<int, 2> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError("config key '" + prefix + "." + key +
                      "' must be a [lo, hi] pair");
  }
  return {v[0].get<int>(), v[1].get<int>()};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model.channels <= 0) throw ConfigError("model.channels must be positive");
  if (model.num_classes <= 0) {
    throw ConfigError("model.num_classes must be positive");
  }
  if (train.client_lr <= 0.0) throw ConfigError("train.client_lr must be > 0");
  if (train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (train.batch_size <= 0) throw ConfigError("train.batch_size must be > 0");
  if (train.dropout_rate < 0.0 || train.dropout_rate >= 1.0) {
    throw ConfigError("train.dropout_rate must lie in [0, 1)");
  }
  if (protocol.deadline_ms <= 0) {
    throw ConfigError("protocol.deadline_ms must be > 0");
  }
  if (protocol.max_rounds < 0) {
    throw ConfigError("protocol.max_rounds must be >= 0");
  }
  if (protocol.sfap_min_updates < 1) {
    throw ConfigError("protocol.sfap_min_updates must be >= 1");
  }
  if (protocol.adft_max_accepted && *protocol.adft_max_accepted < 1) {
    throw ConfigError("protocol.adft_max_accepted must be >= 1");
  }
  if (source == Source::kSynthetic) {
    if (synth.n_clients <= 0) {
      throw ConfigError("dataset.synthetic.n_clients must be positive");
    }
    if (synth.dirichlet_alpha <= 0.0) {
      throw ConfigError("dataset.synthetic.dirichlet_alpha must be > 0");
    }
  } else if (files_dir.empty()) {
    throw ConfigError("dataset.files.dir is required when source is 'files'");
  }
  if (faults.p_drop < 0.0 || faults.p_drop > 1.0) {
    throw ConfigError("faults.p_drop must lie in [0, 1]");
  }
  if (faults.p_deny_registration < 0.0 || faults.p_deny_registration > 1.0) {
    throw ConfigError("faults.p_deny_registration must lie in [0, 1]");
  }
  if (augmentation.enabled && augmentation.per_class <= 0) {
    throw ConfigError("augmentation.per_class must be positive");
  }
  try {
    privacy.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (privacy.mode == PrivacyMode::kUserDP &&
      aggregator.kind != AggregatorKind::kFedAvg) {
    throw ConfigError(
        "privacy.mode user_dp composes with aggregator.kind fedavg only");
  }
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig cfg;
  check_keys(j, "",
             {"seed", "dataset", "model", "train", "protocol", "aggregator",
              "augmentation", "privacy", "faults", "wall_clock_agg_timing",
              "parallel_clients"});

  cfg.seed = get_or<std::uint64_t>(j, "seed", "", cfg.seed);
  cfg.wall_clock_agg_timing =
      get_or<bool>(j, "wall_clock_agg_timing", "", cfg.wall_clock_agg_timing);
  cfg.parallel_clients =
      get_or<bool>(j, "parallel_clients", "", cfg.parallel_clients);

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset", {"source", "synthetic", "files"});
    const std::string source = get_or<std::string>(d, "source", "dataset",
                                                   std::string("synthetic"));
    if (source == "synthetic") {
      cfg.source = ExperimentConfig::Source::kSynthetic;
    } else if (source == "files") {
      cfg.source = ExperimentConfig::Source::kFiles;
    } else {
      throw ConfigError("dataset.source must be 'synthetic' or 'files', got '" +
                        source + "'");
    }
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      check_keys(s, "dataset.synthetic",
                 {"n_clients", "classes", "count_range", "dirichlet_alpha",
                  "classes_per_client", "rate_mix", "volunteer_per_class",
                  "test_per_class", "noise_std"});
      cfg.synth.n_clients =
          get_or<int>(s, "n_clients", "dataset.synthetic", cfg.synth.n_clients);
      cfg.synth.classes =
          get_or<int>(s, "classes", "dataset.synthetic", cfg.synth.classes);
      cfg.synth.per_client_count = get_range(s, "count_range", "dataset.synthetic",
                                             cfg.synth.per_client_count);
      cfg.synth.dirichlet_alpha = get_or<double>(
          s, "dirichlet_alpha", "dataset.synthetic", cfg.synth.dirichlet_alpha);
      cfg.synth.classes_per_client =
          get_or<int>(s, "classes_per_client", "dataset.synthetic",
                      cfg.synth.classes_per_client);
      cfg.synth.volunteer_per_class =
          get_or<int>(s, "volunteer_per_class", "dataset.synthetic",
                      cfg.synth.volunteer_per_class);
      cfg.synth.test_per_class = get_or<int>(s, "test_per_class",
                                             "dataset.synthetic",
                                             cfg.synth.test_per_class);
      cfg.synth.noise_std =
          get_or<double>(s, "noise_std", "dataset.synthetic", cfg.synth.noise_std);
      if (s.contains("rate_mix")) {
        cfg.synth.rate_mix.clear();
        for (const auto& [rate, weight] : s.at("rate_mix").items()) {
          cfg.synth.rate_mix[std::stoi(rate)] = weight.get<double>();
        }
      }
    }
    if (d.contains("files")) {
      const json& f = d.at("files");
      check_keys(f, "dataset.files", {"dir"});
      cfg.files_dir = get_or<std::string>(f, "dir", "dataset.files", "");
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model",
               {"channels", "num_classes", "bn_enabled", "kernel1", "kernel2"});
    cfg.model.channels = get_or<int>(m, "channels", "model", cfg.model.channels);
    cfg.model.num_classes =
        get_or<int>(m, "num_classes", "model", cfg.model.num_classes);
    cfg.model.bn_enabled =
        get_or<bool>(m, "bn_enabled", "model", cfg.model.bn_enabled);
    cfg.model.kernel1 = get_or<int>(m, "kernel1", "model", cfg.model.kernel1);
    cfg.model.kernel2 = get_or<int>(m, "kernel2", "model", cfg.model.kernel2);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, "train",
               {"client_lr", "epochs", "batch_size", "dropout_rate", "optimizer"});
    cfg.train.client_lr =
        get_or<double>(t, "client_lr", "train", cfg.train.client_lr);
    cfg.train.epochs = get_or<int>(t, "epochs", "train", cfg.train.epochs);
    cfg.train.batch_size =
        get_or<int>(t, "batch_size", "train", cfg.train.batch_size);
    cfg.train.dropout_rate =
        get_or<double>(t, "dropout_rate", "train", cfg.train.dropout_rate);
    const std::string opt =
        get_or<std::string>(t, "optimizer", "train", std::string("adam"));
    if (opt == "adam") {
      cfg.train.optimizer = TrainConfig::Optimizer::kAdam;
    } else if (opt == "sgd") {
      cfg.train.optimizer = TrainConfig::Optimizer::kSgd;
    } else {
      throw ConfigError("train.optimizer must be 'adam' or 'sgd', got '" + opt +
                        "'");
    }
  }

  if (j.contains("protocol")) {
    const json& p = j.at("protocol");
    check_keys(p, "protocol",
               {"deadline_ms", "max_rounds", "target_accuracy",
                "rtc_requires_charging", "rtc_requires_connected",
                "adft_allowlist", "adft_max_accepted", "sttp_min_remaining_ms",
                "sfap_min_updates", "client_training_ms", "rtcm_jitter_ms",
                "msg_latency_ms"});
    cfg.protocol.deadline_ms =
        get_or<std::int64_t>(p, "deadline_ms", "protocol", cfg.protocol.deadline_ms);
    cfg.protocol.max_rounds =
        get_or<int>(p, "max_rounds", "protocol", cfg.protocol.max_rounds);
    if (p.contains("target_accuracy") && !p.at("target_accuracy").is_null()) {
      cfg.protocol.target_accuracy = p.at("target_accuracy").get<double>();
    }
    cfg.protocol.rtc_requires_charging =
        get_or<bool>(p, "rtc_requires_charging", "protocol",
                     cfg.protocol.rtc_requires_charging);
    cfg.protocol.rtc_requires_connected =
        get_or<bool>(p, "rtc_requires_connected", "protocol",
                     cfg.protocol.rtc_requires_connected);
    if (p.contains("adft_allowlist") && !p.at("adft_allowlist").is_null()) {
      std::set<std::string> allow;
      for (const auto& c : p.at("adft_allowlist")) {
        allow.insert(c.get<std::string>());
      }
      cfg.protocol.adft_allowlist = std::move(allow);
    }
    if (p.contains("adft_max_accepted") && !p.at("adft_max_accepted").is_null()) {
      cfg.protocol.adft_max_accepted = p.at("adft_max_accepted").get<int>();
    }
    cfg.protocol.sttp_min_remaining_ms =
        get_or<std::int64_t>(p, "sttp_min_remaining_ms", "protocol",
                             cfg.protocol.sttp_min_remaining_ms);
    cfg.protocol.sfap_min_updates = get_or<int>(p, "sfap_min_updates", "protocol",
                                                cfg.protocol.sfap_min_updates);
    cfg.protocol.client_training_ms =
        get_or<std::int64_t>(p, "client_training_ms", "protocol",
                             cfg.protocol.client_training_ms);
    cfg.protocol.rtcm_jitter_ms = get_or<std::int64_t>(
        p, "rtcm_jitter_ms", "protocol", cfg.protocol.rtcm_jitter_ms);
    cfg.protocol.msg_latency_ms = get_or<std::int64_t>(
        p, "msg_latency_ms", "protocol", cfg.protocol.msg_latency_ms);
  }

  if (j.contains("aggregator")) {
    const json& a = j.at("aggregator");
    check_keys(a, "aggregator", {"kind", "server_lr", "beta1", "beta2", "tau"});
    cfg.aggregator.kind = as_config_error([&] {
      return aggregator_from_name(
          get_or<std::string>(a, "kind", "aggregator", std::string("fedavg")));
    });
    cfg.aggregator.server_lr =
        get_or<double>(a, "server_lr", "aggregator", cfg.aggregator.server_lr);
    cfg.aggregator.beta1 =
        get_or<double>(a, "beta1", "aggregator", cfg.aggregator.beta1);
    cfg.aggregator.beta2 =
        get_or<double>(a, "beta2", "aggregator", cfg.aggregator.beta2);
    cfg.aggregator.tau = get_or<double>(a, "tau", "aggregator", cfg.aggregator.tau);
  }

  if (j.contains("augmentation")) {
    const json& a = j.at("augmentation");
    check_keys(a, "augmentation",
               {"enabled", "per_class", "local_range", "aug_range", "mode"});
    cfg.augmentation.enabled =
        get_or<bool>(a, "enabled", "augmentation", cfg.augmentation.enabled);
    cfg.augmentation.per_class =
        get_or<int>(a, "per_class", "augmentation", cfg.augmentation.per_class);
    cfg.augmentation.local_range = get_range(a, "local_range", "augmentation",
                                             cfg.augmentation.local_range);
    cfg.augmentation.aug_range =
        get_range(a, "aug_range", "augmentation", cfg.augmentation.aug_range);
    const std::string mode =
        get_or<std::string>(a, "mode", "augmentation", std::string("all_classes"));
    if (mode == "all_classes") {
      cfg.augmentation.mode = AugmentMode::kAllClasses;
    } else if (mode == "missing_only") {
      cfg.augmentation.mode = AugmentMode::kMissingOnly;
    } else {
      throw ConfigError(
          "augmentation.mode must be 'all_classes' or 'missing_only', got '" +
          mode + "'");
    }
  }

  if (j.contains("privacy")) {
    const json& p = j.at("privacy");
    check_keys(p, "privacy",
               {"mode", "epsilon", "delta", "epsilon_x", "epsilon_y",
                "clip_norm", "noise_multiplier", "mechanism",
                "per_coordinate_budget", "clamp_features"});
    cfg.privacy.mode = as_config_error([&] {
      return privacy_mode_from_name(
          get_or<std::string>(p, "mode", "privacy", std::string("none")));
    });
    cfg.privacy.epsilon =
        get_or<double>(p, "epsilon", "privacy", cfg.privacy.epsilon);
    cfg.privacy.delta = get_or<double>(p, "delta", "privacy", cfg.privacy.delta);
    cfg.privacy.epsilon_x =
        get_or<double>(p, "epsilon_x", "privacy", cfg.privacy.epsilon_x);
    cfg.privacy.epsilon_y =
        get_or<double>(p, "epsilon_y", "privacy", cfg.privacy.epsilon_y);
    cfg.privacy.clip_norm =
        get_or<double>(p, "clip_norm", "privacy", cfg.privacy.clip_norm);
    cfg.privacy.noise_multiplier = get_or<double>(p, "noise_multiplier", "privacy",
                                                  cfg.privacy.noise_multiplier);
    cfg.privacy.mechanism = as_config_error([&] {
      return ldp_mechanism_from_name(
          get_or<std::string>(p, "mechanism", "privacy", std::string("duchi")));
    });
    cfg.privacy.per_coordinate_budget =
        get_or<bool>(p, "per_coordinate_budget", "privacy",
                     cfg.privacy.per_coordinate_budget);
    cfg.privacy.clamp_features = get_or<bool>(p, "clamp_features", "privacy",
                                              cfg.privacy.clamp_features);
  }

  if (j.contains("faults")) {
    const json& f = j.at("faults");
    check_keys(f, "faults", {"p_drop", "upload_delay_ms", "p_deny_registration"});
    cfg.faults.p_drop = get_or<double>(f, "p_drop", "faults", cfg.faults.p_drop);
    if (f.contains("upload_delay_ms")) {
      const json& d = f.at("upload_delay_ms");
      if (!d.is_array() || d.size() != 2) {
        throw ConfigError("faults.upload_delay_ms must be a [lo, hi] pair");
      }
      cfg.faults.upload_delay_ms = {d[0].get<std::int64_t>(),
                                    d[1].get<std::int64_t>()};
    }
    cfg.faults.p_deny_registration = get_or<double>(
        f, "p_deny_registration", "faults", cfg.faults.p_deny_registration);
  }

  cfg.validate();
  return cfg;
}

nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  json rate_mix = json::object();
  for (const auto& [rate, weight] : cfg.synth.rate_mix) {
    rate_mix[std::to_string(rate)] = weight;
  }
  json j = {
      {"seed", cfg.seed},
      {"dataset",
       {{"source",
         cfg.source == ExperimentConfig::Source::kSynthetic ? "synthetic"
                                                            : "files"},
        {"synthetic",
         {{"n_clients", cfg.synth.n_clients},
          {"classes", cfg.synth.classes},
          {"count_range", cfg.synth.per_client_count},
          {"dirichlet_alpha", cfg.synth.dirichlet_alpha},
          {"classes_per_client", cfg.synth.classes_per_client},
          {"rate_mix", rate_mix},
          {"volunteer_per_class", cfg.synth.volunteer_per_class},
          {"test_per_class", cfg.synth.test_per_class},
          {"noise_std", cfg.synth.noise_std}}},
        {"files", {{"dir", cfg.files_dir}}}}},
      {"model",
       {{"channels", cfg.model.channels},
        {"num_classes", cfg.model.num_classes},
        {"bn_enabled", cfg.model.bn_enabled},
        {"kernel1", cfg.model.kernel1},
        {"kernel2", cfg.model.kernel2}}},
      {"train",
       {{"client_lr", cfg.train.client_lr},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size},
        {"dropout_rate", cfg.train.dropout_rate},
        {"optimizer",
         cfg.train.optimizer == TrainConfig::Optimizer::kAdam ? "adam" : "sgd"}}},
      {"protocol",
       {{"deadline_ms", cfg.protocol.deadline_ms},
        {"max_rounds", cfg.protocol.max_rounds},
        {"target_accuracy",
         cfg.protocol.target_accuracy ? json(*cfg.protocol.target_accuracy)
                                      : json(nullptr)},
        {"rtc_requires_charging", cfg.protocol.rtc_requires_charging},
        {"rtc_requires_connected", cfg.protocol.rtc_requires_connected},
        {"adft_allowlist", cfg.protocol.adft_allowlist
                               ? json(*cfg.protocol.adft_allowlist)
                               : json(nullptr)},
        {"adft_max_accepted", cfg.protocol.adft_max_accepted
                                  ? json(*cfg.protocol.adft_max_accepted)
                                  : json(nullptr)},
        {"sttp_min_remaining_ms", cfg.protocol.sttp_min_remaining_ms},
        {"sfap_min_updates", cfg.protocol.sfap_min_updates},
        {"client_training_ms", cfg.protocol.client_training_ms},
        {"rtcm_jitter_ms", cfg.protocol.rtcm_jitter_ms},
        {"msg_latency_ms", cfg.protocol.msg_latency_ms}}},
      {"aggregator",
       {{"kind", aggregator_name(cfg.aggregator.kind)},
        {"server_lr", cfg.aggregator.server_lr},
        {"beta1", cfg.aggregator.beta1},
        {"beta2", cfg.aggregator.beta2},
        {"tau", cfg.aggregator.tau}}},
      {"augmentation",
       {{"enabled", cfg.augmentation.enabled},
        {"per_class", cfg.augmentation.per_class},
        {"local_range", cfg.augmentation.local_range},
        {"aug_range", cfg.augmentation.aug_range},
        {"mode", cfg.augmentation.mode == AugmentMode::kAllClasses
                     ? "all_classes"
                     : "missing_only"}}},
      {"privacy",
       {{"mode", cfg.privacy.mode == PrivacyMode::kNone
                     ? "none"
                     : (cfg.privacy.mode == PrivacyMode::kUserDP ? "user_dp"
                                                                 : "sample_ldp")},
        {"epsilon", cfg.privacy.epsilon},
        {"delta", cfg.privacy.delta},
        {"epsilon_x", cfg.privacy.epsilon_x},
        {"epsilon_y", cfg.privacy.epsilon_y},
        {"clip_norm", cfg.privacy.clip_norm},
        {"noise_multiplier", cfg.privacy.noise_multiplier},
        {"mechanism",
         cfg.privacy.mechanism == LdpMechanism::kDuchi ? "duchi" : "laplace"},
        {"per_coordinate_budget", cfg.privacy.per_coordinate_budget},
        {"clamp_features", cfg.privacy.clamp_features}}},
      {"faults",
       {{"p_drop", cfg.faults.p_drop},
        {"upload_delay_ms", cfg.faults.upload_delay_ms},
        {"p_deny_registration", cfg.faults.p_deny_registration}}},
      {"wall_clock_agg_timing", cfg.wall_clock_agg_timing},
      {"parallel_clients", cfg.parallel_clients},
  };
  return j;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " +
                      e.what());
  }
  return parse_config(j);
}

}  // namespace flsim
