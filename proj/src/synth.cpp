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

#include "flsim/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flsim {

namespace {

// Per-class signal signatures. All classes share the same per-axis amplitude
// envelope and zero mean, so nothing but the dominant frequency (and a mild
// harmonic mix) separates them; the filters must genuinely tune to the
// frequencies. Frequencies stay below the 2.5 Hz Nyquist limit of the slowest
// supported rate.
struct ClassSignature {
  double freq_hz;
  std::array<double, 3> amp;
  double harmonic;
};

ClassSignature signature(int label, int classes) {
  (void)classes;
  ClassSignature s;
  s.freq_hz = 0.35 + 0.5 * static_cast<double>(label % 5) +
              0.04 * static_cast<double>(label / 5);
  s.amp = {0.7, 0.55, 0.4};
  s.harmonic = 0.15 * static_cast<double>(label % 3);
  return s;
}

int draw_rate(const std::map<int, double>& rate_mix, Rng& rng) {
  double total = 0.0;
  for (const auto& [rate, w] : rate_mix) total += w;
  double u = rng.uniform() * total;
  for (const auto& [rate, w] : rate_mix) {
    u -= w;
    if (u <= 0.0) return rate;
  }
  return rate_mix.rbegin()->first;
}

}  // namespace

std::vector<double> dirichlet(double alpha, int k, Rng& rng) {
  if (alpha <= 0.0) throw Error("dirichlet: alpha must be > 0");
  std::vector<double> p(static_cast<std::size_t>(k));
  double total = 0.0;
  for (double& v : p) {
    v = rng.gamma(alpha);
    total += v;
  }
  if (total <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(k));
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

DataSegment synth_segment(int label, int classes, int rate_hz, double noise_std,
                          Rng& rng) {
  const ClassSignature s = signature(label, classes);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double freq = s.freq_hz * rng.uniform(0.95, 1.05);

  DataSegment seg;
  seg.values = Tensor({3, static_cast<std::size_t>(kSegmentWindow)});
  seg.label = label;
  seg.source_rate_hz = rate_hz;
  seg.session_id = -1;  // synthetic windows never share source points
  for (int ax = 0; ax < 3; ++ax) {
    const double ax_phase = phase + static_cast<double>(ax) * std::numbers::pi / 3.0;
    const double amp = s.amp[static_cast<std::size_t>(ax)];
    for (int i = 0; i < kSegmentWindow; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(rate_hz);
      const double w = 2.0 * std::numbers::pi * freq * t;
      double v = amp * ((1.0 - s.harmonic) * std::sin(w + ax_phase) +
                        s.harmonic * std::sin(2.0 * w + 1.3 * ax_phase)) +
                 rng.normal(0.0, noise_std);
      seg.values.at(static_cast<std::size_t>(ax), static_cast<std::size_t>(i)) =
          std::clamp(v, -1.0, 1.0);
    }
  }
  return seg;
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  if (cfg.dirichlet_alpha <= 0.0) {
    throw Error("synth_generate: dirichlet_alpha must be > 0");
  }
  if (cfg.classes < 2) throw Error("synth_generate: classes must be >= 2");
  if (cfg.per_client_count[0] < 1 ||
      cfg.per_client_count[1] < cfg.per_client_count[0]) {
    throw Error("synth_generate: invalid per_client_count range");
  }

  SynthDataset ds;
  ds.clients.resize(static_cast<std::size_t>(cfg.n_clients));
  for (int ci = 0; ci < cfg.n_clients; ++ci) {
    Rng rng(Rng::derive(cfg.seed, 1, static_cast<std::uint64_t>(ci)));
    std::vector<double> p = dirichlet(cfg.dirichlet_alpha, cfg.classes, rng);

    if (cfg.classes_per_client > 0 && cfg.classes_per_client < cfg.classes) {
      std::vector<int> order(static_cast<std::size_t>(cfg.classes));
      for (int c = 0; c < cfg.classes; ++c) order[static_cast<std::size_t>(c)] = c;
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)]; });
      double kept = 0.0;
      for (int r = 0; r < cfg.classes_per_client; ++r)
        kept += p[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])];
      for (int c = 0; c < cfg.classes; ++c) {
        bool keep = false;
        for (int r = 0; r < cfg.classes_per_client; ++r) {
          if (order[static_cast<std::size_t>(r)] == c) keep = true;
        }
        p[static_cast<std::size_t>(c)] =
            keep ? p[static_cast<std::size_t>(c)] / kept : 0.0;
      }
    }

    const int count = static_cast<int>(
        rng.uniform_int(cfg.per_client_count[0], cfg.per_client_count[1]));
    auto& shard = ds.clients[static_cast<std::size_t>(ci)];
    shard.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      double u = rng.uniform();
      int label = cfg.classes - 1;
      for (int c = 0; c < cfg.classes; ++c) {
        u -= p[static_cast<std::size_t>(c)];
        if (u <= 0.0) {
          label = c;
          break;
        }
      }
      const int rate = draw_rate(cfg.rate_mix, rng);
      shard.push_back(synth_segment(label, cfg.classes, rate, cfg.noise_std, rng));
    }
  }

  ds.volunteer_by_class.resize(static_cast<std::size_t>(cfg.classes));
  for (int c = 0; c < cfg.classes; ++c) {
    Rng rng(Rng::derive(cfg.seed, 2, static_cast<std::uint64_t>(c)));
    auto& pool = ds.volunteer_by_class[static_cast<std::size_t>(c)];
    pool.reserve(static_cast<std::size_t>(cfg.volunteer_per_class));
    for (int i = 0; i < cfg.volunteer_per_class; ++i) {
      const int rate = draw_rate(cfg.rate_mix, rng);
      pool.push_back(synth_segment(c, cfg.classes, rate, cfg.noise_std, rng));
    }
  }

  for (int c = 0; c < cfg.classes; ++c) {
    Rng rng(Rng::derive(cfg.seed, 3, static_cast<std::uint64_t>(c)));
    for (int i = 0; i < cfg.test_per_class; ++i) {
      const int rate = draw_rate(cfg.rate_mix, rng);
      ds.test.push_back(synth_segment(c, cfg.classes, rate, cfg.noise_std, rng));
    }
  }
  return ds;
}

}  // namespace flsim
