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

#include "flsim/privacy.hpp"

#include <algorithm>
#include <cmath>

namespace flsim {

PrivacyMode privacy_mode_from_name(const std::string& name) {
  if (name == "none") return PrivacyMode::kNone;
  if (name == "user_dp") return PrivacyMode::kUserDP;
  if (name == "sample_ldp") return PrivacyMode::kSampleLDP;
  throw Error("unknown privacy mode '" + name +
              "' (expected none, user_dp, or sample_ldp)");
}

LdpMechanism ldp_mechanism_from_name(const std::string& name) {
  if (name == "duchi") return LdpMechanism::kDuchi;
  if (name == "laplace") return LdpMechanism::kLaplace;
  throw Error("unknown LDP mechanism '" + name +
              "' (expected duchi or laplace)");
}

void PrivacySpec::validate() const {
  if (mode == PrivacyMode::kUserDP) {
    if (epsilon <= 0.0) throw Error("privacy: epsilon must be > 0");
    if (delta < 0.0 || delta >= 1.0) throw Error("privacy: delta must lie in [0, 1)");
    if (clip_norm <= 0.0) throw Error("privacy: clip_norm must be > 0");
    if (noise_multiplier <= 0.0) {
      throw Error("privacy: noise_multiplier must be > 0");
    }
  } else if (mode == PrivacyMode::kSampleLDP) {
    if (epsilon_x <= 0.0) throw Error("privacy: epsilon_x must be > 0");
    if (epsilon_y <= 0.0) throw Error("privacy: epsilon_y must be > 0");
  }
}

GradientUpdate clip_update(const GradientUpdate& update, double clip_norm) {
  if (clip_norm <= 0.0) throw Error("clip_update: clip_norm must be > 0");
  const double norm = update_l2_norm(update);
  if (norm <= clip_norm) return update;
  GradientUpdate out = update;
  const double scale = clip_norm / norm;
  for (auto& [name, t] : out.deltas) {
    for (double& v : t.data) v *= scale;
  }
  return out;
}

ModelParams user_dp_aggregate(const std::vector<GradientUpdate>& updates,
                              const ModelParams& global, double gamma,
                              const PrivacySpec& spec, Rng& rng) {
  if (updates.empty()) {
    throw Error("user_dp_aggregate: updates must be non-empty");
  }
  if (spec.mode != PrivacyMode::kUserDP) {
    throw Error("user_dp_aggregate: spec mode must be user_dp");
  }
  spec.validate();

  std::vector<GradientUpdate> clipped;
  clipped.reserve(updates.size());
  for (const GradientUpdate& u : updates) {
    clipped.push_back(clip_update(u, spec.clip_norm));
  }
  auto mean = mean_delta(clipped);

  const double k = static_cast<double>(updates.size());
  const double sigma = spec.noise_multiplier * spec.clip_norm / k;
  for (auto& [name, t] : mean) {
    for (double& v : t.data) v += rng.normal(0.0, sigma);
  }

  ModelParams next = global;
  apply_delta(next, mean, gamma);
  for (const auto& [name, t] : next.tensors) {
    require_finite(t, "user_dp_aggregate output '" + name + "'");
  }
  return next;
}

double duchi_output_magnitude(double epsilon) {
  // (e^eps + 1)/(e^eps - 1) written to survive huge budgets.
  return 1.0 + 2.0 / std::expm1(epsilon);
}

double duchi_positive_probability(double x, double epsilon) {
  // (e^eps - 1) x / (2 (e^eps + 1)) + 1/2 == (1 + r x) / 2 with
  // r = 1 - 2/(e^eps + 1).
  const double r = 1.0 - 2.0 / (std::exp(epsilon) + 1.0);
  return 0.5 * (1.0 + r * x);
}

double ldp_duchi(double x, double epsilon, Rng& rng) {
  if (std::abs(x) > 1.0) {
    throw Error("ldp_duchi: input must lie in [-1, 1]");
  }
  if (epsilon <= 0.0) throw Error("ldp_duchi: epsilon must be > 0");
  const double c = duchi_output_magnitude(epsilon);
  return rng.uniform() < duchi_positive_probability(x, epsilon) ? c : -c;
}

double ldp_laplace(double x, double epsilon, Rng& rng) {
  if (std::abs(x) > 1.0) {
    throw Error("ldp_laplace: input must lie in [-1, 1]");
  }
  if (epsilon <= 0.0) throw Error("ldp_laplace: epsilon must be > 0");
  return x + rng.laplace(2.0 / epsilon);
}

double krr_keep_probability(int num_classes, double epsilon) {
  // e^eps / (e^eps + K - 1), stable for budgets where e^eps overflows.
  return 1.0 /
         (1.0 + (static_cast<double>(num_classes) - 1.0) * std::exp(-epsilon));
}

int krr_label(int label, int num_classes, double epsilon, Rng& rng) {
  if (num_classes < 2) throw Error("krr_label: need at least 2 classes");
  if (label < 0 || label >= num_classes) {
    throw Error("krr_label: label " + std::to_string(label) +
                " out of range for " + std::to_string(num_classes) + " classes");
  }
  if (epsilon <= 0.0) throw Error("krr_label: epsilon must be > 0");
  if (rng.uniform() < krr_keep_probability(num_classes, epsilon)) return label;
  // Uniform over the other classes.
  const int offset =
      static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(num_classes) - 1));
  return (label + offset) % num_classes;
}

DataSegment perturb_segment(const DataSegment& segment, const PrivacySpec& spec,
                            int num_classes, Rng& rng) {
  if (spec.mode == PrivacyMode::kNone) return segment;
  if (spec.mode != PrivacyMode::kSampleLDP) {
    throw Error("perturb_segment: spec mode must be sample_ldp or none");
  }
  spec.validate();

  const double coord_budget =
      spec.per_coordinate_budget
          ? spec.epsilon_x
          : spec.epsilon_x / static_cast<double>(segment.values.size());

  DataSegment out = segment;
  for (double& v : out.values.data) {
    const double x = std::clamp(v, -1.0, 1.0);
    double y = spec.mechanism == LdpMechanism::kDuchi
                   ? ldp_duchi(x, coord_budget, rng)
                   : ldp_laplace(x, coord_budget, rng);
    if (spec.clamp_features) y = std::clamp(y, -1.0, 1.0);
    v = y;
  }
  out.label = krr_label(segment.label, num_classes, spec.epsilon_y, rng);
  return out;
}

double verify_ldp(VerifyMechanism mechanism, double epsilon,
                  const std::vector<double>& grid, int num_classes) {
  if (epsilon <= 0.0) throw Error("verify_ldp: epsilon must be > 0");
  double max_ratio = 0.0;

  switch (mechanism) {
    case VerifyMechanism::kDuchi: {
      // Two-point output alphabet {+C, -C}; enumerate exact probabilities.
      for (double x : grid) {
        for (double xp : grid) {
          const double p1 = duchi_positive_probability(x, epsilon);
          const double p2 = duchi_positive_probability(xp, epsilon);
          if (p2 > 0.0) max_ratio = std::max(max_ratio, p1 / p2);
          if (1.0 - p2 > 0.0)
            max_ratio = std::max(max_ratio, (1.0 - p1) / (1.0 - p2));
        }
      }
      break;
    }
    case VerifyMechanism::kKrr: {
      // Output alphabet = the classes. P(report r | true y) is exact.
      const double keep = krr_keep_probability(num_classes, epsilon);
      const double other =
          (1.0 - keep) / (static_cast<double>(num_classes) - 1.0);
      for (int y = 0; y < num_classes; ++y) {
        for (int yp = 0; yp < num_classes; ++yp) {
          for (int r = 0; r < num_classes; ++r) {
            const double p1 = r == y ? keep : other;
            const double p2 = r == yp ? keep : other;
            max_ratio = std::max(max_ratio, p1 / p2);
          }
        }
      }
      break;
    }
    case VerifyMechanism::kLaplace: {
      // Density ratio exp((|y-x'| - |y-x|)/b) attains exp(|x-x'|/b); with
      // b = 2/eps and |x-x'| <= 2 the bound is e^eps.
      const double b = 2.0 / epsilon;
      for (double x : grid) {
        for (double xp : grid) {
          max_ratio = std::max(max_ratio, std::exp(std::abs(x - xp) / b));
        }
      }
      break;
    }
  }
  return max_ratio;
}

}  // namespace flsim
