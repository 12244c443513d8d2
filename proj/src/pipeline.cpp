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

#include "flsim/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flsim/container.hpp"
#include "flsim/rng.hpp"

namespace flsim {

std::vector<SensorPoint> merge_duplicates(const std::vector<SensorPoint>& points) {
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].timestamp_ms < points[i - 1].timestamp_ms) {
      throw PipelineError("merge_duplicates: input not sorted at index " +
                          std::to_string(i));
    }
  }
  std::vector<SensorPoint> out;
  out.reserve(points.size());
  std::size_t i = 0;
  while (i < points.size()) {
    std::size_t j = i;
    double sx = 0, sy = 0, sz = 0;
    while (j < points.size() &&
           points[j].timestamp_ms == points[i].timestamp_ms) {
      sx += points[j].x;
      sy += points[j].y;
      sz += points[j].z;
      ++j;
    }
    const double n = static_cast<double>(j - i);
    out.push_back({points[i].timestamp_ms, sx / n, sy / n, sz / n});
    i = j;
  }
  return out;
}

std::vector<DataSession> split_sessions(const std::vector<SensorPoint>& points,
                                        std::int64_t gap_threshold_ms) {
  std::vector<DataSession> sessions;
  if (points.empty()) return sessions;
  DataSession current;
  current.points.push_back(points[0]);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const std::int64_t gap = points[i].timestamp_ms - points[i - 1].timestamp_ms;
    if (gap > gap_threshold_ms) {
      sessions.push_back(std::move(current));
      current = DataSession{};
    }
    current.points.push_back(points[i]);
  }
  sessions.push_back(std::move(current));
  return sessions;
}

RateValidation validate_rate(const DataSession& session,
                             const std::vector<int>& targets, double tolerance,
                             std::int64_t min_duration_ms) {
  if (session.points.size() < 2) {
    return {false, 0, "fewer than 2 points"};
  }
  const std::int64_t duration = session.points.back().timestamp_ms -
                                session.points.front().timestamp_ms;
  if (duration <= min_duration_ms) {
    return {false, 0,
            "duration " + std::to_string(duration) + " ms does not exceed " +
                std::to_string(min_duration_ms) + " ms"};
  }

  std::vector<std::int64_t> gaps;
  gaps.reserve(session.points.size() - 1);
  for (std::size_t i = 1; i < session.points.size(); ++i) {
    gaps.push_back(session.points[i].timestamp_ms -
                   session.points[i - 1].timestamp_ms);
  }
  double mean_gap = 0.0;
  for (std::int64_t g : gaps) mean_gap += static_cast<double>(g);
  mean_gap /= static_cast<double>(gaps.size());

  std::vector<std::int64_t> sorted = gaps;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median_gap =
      n % 2 == 1 ? static_cast<double>(sorted[n / 2])
                 : 0.5 * static_cast<double>(sorted[n / 2 - 1] + sorted[n / 2]);

  const double mean_rate = 1000.0 / mean_gap;
  const double median_rate = 1000.0 / median_gap;
  for (int r : targets) {
    const double lo = (1.0 - tolerance) * r;
    const double hi = (1.0 + tolerance) * r;
    if (mean_rate >= lo && mean_rate <= hi && median_rate >= lo &&
        median_rate <= hi) {
      return {true, r, ""};
    }
  }
  std::ostringstream os;
  os << "no target rate within tolerance (mean " << mean_rate << " Hz, median "
     << median_rate << " Hz)";
  return {false, 0, os.str()};
}

std::vector<LabelSession> trim_labels(const std::vector<LabelSession>& labels,
                                      std::int64_t trim_ms, std::int64_t cap_ms) {
  std::vector<LabelSession> out;
  for (const LabelSession& l : labels) {
    if (l.start_ms >= l.end_ms) {
      throw PipelineError("trim_labels: label session with start >= end");
    }
    LabelSession t{l.start_ms + trim_ms, l.end_ms - trim_ms, l.label};
    if (t.start_ms >= t.end_ms) continue;
    if (t.end_ms - t.start_ms > cap_ms) t.end_ms = t.start_ms + cap_ms;
    out.push_back(t);
  }
  return out;
}

std::vector<DataSegment> segment_session(
    const DataSession& session, const std::vector<LabelSession>& trimmed_labels,
    const std::map<int, double>& overlap_by_class, int window,
    std::int64_t session_id) {
  std::vector<DataSegment> out;
  const auto& pts = session.points;
  if (static_cast<int>(pts.size()) < window) return out;

  for (const LabelSession& label : trimmed_labels) {
    // Contiguous run of points inside this label session.
    auto lo = std::lower_bound(
        pts.begin(), pts.end(), label.start_ms,
        [](const SensorPoint& p, std::int64_t t) { return p.timestamp_ms < t; });
    auto hi = std::upper_bound(
        pts.begin(), pts.end(), label.end_ms,
        [](std::int64_t t, const SensorPoint& p) { return t < p.timestamp_ms; });
    const std::size_t begin = static_cast<std::size_t>(lo - pts.begin());
    const std::size_t end = static_cast<std::size_t>(hi - pts.begin());
    if (end - begin < static_cast<std::size_t>(window)) continue;

    const auto it = overlap_by_class.find(label.label);
    const double overlap = it != overlap_by_class.end() ? it->second : 0.25;
    if (overlap < 0.0 || overlap > 0.99) {
      throw PipelineError("segment: overlap fraction must lie in [0, 0.99]");
    }
    const int stride =
        std::max(1, static_cast<int>(std::lround(window * (1.0 - overlap))));

    for (std::size_t start = begin;
         start + static_cast<std::size_t>(window) <= end;
         start += static_cast<std::size_t>(stride)) {
      DataSegment seg;
      seg.values = Tensor({3, static_cast<std::size_t>(window)});
      for (int i = 0; i < window; ++i) {
        const SensorPoint& p = pts[start + static_cast<std::size_t>(i)];
        seg.values.at(0, static_cast<std::size_t>(i)) = p.x;
        seg.values.at(1, static_cast<std::size_t>(i)) = p.y;
        seg.values.at(2, static_cast<std::size_t>(i)) = p.z;
      }
      seg.label = label.label;
      seg.source_rate_hz = session.rate_hz;
      seg.session_id = session_id;
      seg.start_index = static_cast<std::int64_t>(start);
      out.push_back(std::move(seg));
    }
  }
  return out;
}

std::map<int, double> default_overlaps(const std::vector<LabelSession>& trimmed,
                                       int num_classes, int majority_count,
                                       double majority_overlap,
                                       double minority_overlap) {
  std::vector<std::pair<std::int64_t, int>> duration_by_class;
  for (int c = 0; c < num_classes; ++c) duration_by_class.push_back({0, c});
  for (const LabelSession& l : trimmed) {
    if (l.label >= 0 && l.label < num_classes) {
      duration_by_class[static_cast<std::size_t>(l.label)].first +=
          l.end_ms - l.start_ms;
    }
  }
  std::stable_sort(duration_by_class.begin(), duration_by_class.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::map<int, double> overlaps;
  for (std::size_t i = 0; i < duration_by_class.size(); ++i) {
    overlaps[duration_by_class[i].second] =
        static_cast<int>(i) < majority_count ? majority_overlap
                                             : minority_overlap;
  }
  return overlaps;
}

NormStats compute_stats(const std::vector<DataSegment>& training_segments) {
  if (training_segments.empty()) {
    throw PipelineError("compute_stats: no training segments");
  }
  NormStats stats;
  std::array<double, 3> sum{}, sumsq{};
  std::size_t count = 0;
  for (const DataSegment& seg : training_segments) {
    const std::size_t len = seg.values.dim(1);
    for (std::size_t ax = 0; ax < 3; ++ax) {
      for (std::size_t i = 0; i < len; ++i) {
        const double v = seg.values.at(ax, i);
        sum[ax] += v;
        sumsq[ax] += v * v;
      }
    }
    count += seg.values.dim(1);
  }
  for (std::size_t ax = 0; ax < 3; ++ax) {
    const double n = static_cast<double>(count);
    stats.mean[ax] = sum[ax] / n;
    const double var = sumsq[ax] / n - stats.mean[ax] * stats.mean[ax];
    stats.stddev[ax] = std::sqrt(std::max(0.0, var));
    if (stats.stddev[ax] <= 0.0) {
      throw PipelineError("compute_stats: zero standard deviation on axis " +
                          std::to_string(ax));
    }
  }
  return stats;
}

DataSegment normalize(const DataSegment& segment, const NormStats& stats) {
  DataSegment out = segment;
  const std::size_t len = segment.values.dim(1);
  const double span = stats.clip_max - stats.clip_min;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    for (std::size_t i = 0; i < len; ++i) {
      double v = (segment.values.at(ax, i) - stats.mean[ax]) / stats.stddev[ax];
      v = std::clamp(v, stats.clip_min, stats.clip_max);
      out.values.at(ax, i) = 2.0 * ((v - stats.clip_min) / span - 0.5);
    }
  }
  return out;
}

double mean_rolling_variance(const DataSegment& segment, int roll_window) {
  const std::size_t len = segment.values.dim(1);
  const std::size_t w = static_cast<std::size_t>(roll_window);
  if (len < w) throw PipelineError("mean_rolling_variance: segment shorter than window");
  double acc = 0.0;
  std::size_t windows = 0;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    for (std::size_t start = 0; start + w <= len; ++start) {
      double s = 0.0, sq = 0.0;
      for (std::size_t i = start; i < start + w; ++i) {
        const double v = segment.values.at(ax, i);
        s += v;
        sq += v * v;
      }
      const double mean = s / static_cast<double>(w);
      acc += sq / static_cast<double>(w) - mean * mean;
      ++windows;
    }
  }
  return acc / static_cast<double>(windows);
}

std::vector<DataSegment> filter_flat(const std::vector<DataSegment>& segments,
                                     int roll_window, double threshold) {
  std::vector<DataSegment> out;
  out.reserve(segments.size());
  for (const DataSegment& seg : segments) {
    if (mean_rolling_variance(seg, roll_window) >= threshold) {
      out.push_back(seg);
    }
  }
  return out;
}

namespace {

// True when the two segments contain any common raw source point.
bool shares_source_points(const DataSegment& a, const DataSegment& b) {
  if (a.session_id < 0 || b.session_id < 0) return false;
  if (a.session_id != b.session_id) return false;
  const std::int64_t w_a = static_cast<std::int64_t>(a.values.dim(1));
  const std::int64_t w_b = static_cast<std::int64_t>(b.values.dim(1));
  return a.start_index < b.start_index + w_b && b.start_index < a.start_index + w_a;
}

}  // namespace

SplitResult split_train_test(const std::vector<DataSegment>& segments,
                             double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw PipelineError("split_train_test: test_fraction must lie in [0, 1)");
  }
  SplitResult result;
  if (segments.empty()) return result;

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    by_class[segments[i].label].push_back(i);
  }

  Rng rng(seed);
  for (auto& [label, indices] : by_class) {
    // Session order, then window order: contiguous blocks never interleave.
    std::stable_sort(indices.begin(), indices.end(),
                     [&](std::size_t a, std::size_t b) {
                       const DataSegment& sa = segments[a];
                       const DataSegment& sb = segments[b];
                       if (sa.session_id != sb.session_id)
                         return sa.session_id < sb.session_id;
                       return sa.start_index < sb.start_index;
                     });
    const std::size_t n = indices.size();
    const std::size_t k = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(n)));
    if (n < 2 || k == 0) {
      for (std::size_t i : indices) result.train.push_back(segments[i]);
      if (n < 2) {
        result.warnings.push_back("class " + std::to_string(label) +
                                  " has fewer than 2 segments; all to train");
      }
      continue;
    }
    const std::size_t block_start =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n - k)));
    std::vector<bool> is_test(n, false);
    for (std::size_t i = block_start; i < block_start + k; ++i) is_test[i] = true;

    for (std::size_t i = 0; i < n; ++i) {
      const DataSegment& seg = segments[indices[i]];
      if (is_test[i]) {
        result.test.push_back(seg);
        continue;
      }
      bool leaks = false;
      // Only block-adjacent windows can overlap; scan the test block edges.
      for (std::size_t j = block_start; j < block_start + k; ++j) {
        if (shares_source_points(seg, segments[indices[j]])) {
          leaks = true;
          break;
        }
      }
      if (leaks) {
        ++result.boundary_dropped;
      } else {
        result.train.push_back(seg);
      }
    }
  }
  return result;
}

std::vector<SensorPoint> read_sensor_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw PipelineError("cannot open sensor file '" + path + "'");
  std::vector<SensorPoint> points;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    SensorPoint p;
    char c1, c2, c3;
    if (ss >> p.timestamp_ms >> c1 >> p.x >> c2 >> p.y >> c3 >> p.z &&
        c1 == ',' && c2 == ',' && c3 == ',') {
      points.push_back(p);
    } else if (first) {
      // header line
    } else {
      throw PipelineError("bad sensor line " + std::to_string(lineno) +
                          " in '" + path + "'");
    }
    first = false;
  }
  std::sort(points.begin(), points.end(),
            [](const SensorPoint& a, const SensorPoint& b) {
              return a.timestamp_ms < b.timestamp_ms;
            });
  return points;
}

std::vector<LabelSession> read_label_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw PipelineError("cannot open label file '" + path + "'");
  std::vector<LabelSession> labels;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    LabelSession l;
    char c1, c2;
    if (ss >> l.start_ms >> c1 >> l.end_ms >> c2 >> l.label && c1 == ',' &&
        c2 == ',') {
      labels.push_back(l);
    } else if (first) {
      // header line
    } else {
      throw PipelineError("bad label line " + std::to_string(lineno) + " in '" +
                          path + "'");
    }
    first = false;
  }
  return labels;
}

void write_segments(const std::vector<DataSegment>& segments,
                    const std::string& path) {
  const std::size_t n = segments.size();
  Container c;
  c.meta = {{"kind", "segments"}, {"count", n}};
  Tensor values({n, 3, static_cast<std::size_t>(kSegmentWindow)});
  Tensor labels({n}), rates({n}), session_ids({n}), start_indices({n});
  for (std::size_t i = 0; i < n; ++i) {
    const DataSegment& seg = segments[i];
    require_shape(seg.values, {3, static_cast<std::size_t>(kSegmentWindow)},
                  "segment values");
    std::copy(seg.values.data.begin(), seg.values.data.end(),
              values.data.begin() + static_cast<std::ptrdiff_t>(i * 3 * kSegmentWindow));
    labels.at(i) = seg.label;
    rates.at(i) = seg.source_rate_hz;
    session_ids.at(i) = static_cast<double>(seg.session_id);
    start_indices.at(i) = static_cast<double>(seg.start_index);
  }
  c.entries.emplace_back("values", std::move(values));
  c.entries.emplace_back("labels", std::move(labels));
  c.entries.emplace_back("rates", std::move(rates));
  c.entries.emplace_back("session_ids", std::move(session_ids));
  c.entries.emplace_back("start_indices", std::move(start_indices));
  write_container(c, path);
}

std::vector<DataSegment> read_segments(const std::string& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "segments") {
    throw ContainerError("'" + path + "' is not a segments file");
  }
  const Tensor& values = c.require("values");
  const Tensor& labels = c.require("labels");
  const Tensor& rates = c.require("rates");
  const Tensor& session_ids = c.require("session_ids");
  const Tensor& start_indices = c.require("start_indices");
  const std::size_t n = values.dim(0);
  std::vector<DataSegment> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    DataSegment& seg = out[i];
    seg.values = Tensor({3, static_cast<std::size_t>(kSegmentWindow)});
    std::copy(values.data.begin() + static_cast<std::ptrdiff_t>(i * 3 * kSegmentWindow),
              values.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * 3 * kSegmentWindow),
              seg.values.data.begin());
    seg.label = static_cast<int>(labels.at(i));
    seg.source_rate_hz = static_cast<int>(rates.at(i));
    seg.session_id = static_cast<std::int64_t>(session_ids.at(i));
    seg.start_index = static_cast<std::int64_t>(start_indices.at(i));
  }
  return out;
}

PreprocessResult preprocess(const std::vector<SensorPoint>& raw_points,
                            const std::vector<LabelSession>& raw_labels,
                            const PreprocessOptions& opts) {
  PreprocessResult result;

  std::vector<SensorPoint> points = raw_points;
  std::sort(points.begin(), points.end(),
            [](const SensorPoint& a, const SensorPoint& b) {
              return a.timestamp_ms < b.timestamp_ms;
            });
  points = merge_duplicates(points);

  const std::vector<DataSession> sessions =
      split_sessions(points, opts.gap_threshold_ms);
  result.sessions_total = sessions.size();

  const std::vector<LabelSession> trimmed =
      trim_labels(raw_labels, opts.label_trim_ms, opts.label_cap_ms);
  const std::map<int, double> overlaps = default_overlaps(
      trimmed, opts.num_classes, opts.majority_count, opts.majority_overlap,
      opts.minority_overlap);

  std::vector<DataSegment> segments;
  std::int64_t session_id = 0;
  for (const DataSession& session : sessions) {
    DataSession validated = session;
    const RateValidation v =
        validate_rate(session, opts.target_rates, opts.rate_tolerance,
                      opts.min_duration_ms);
    ++session_id;
    if (!v.accepted) continue;
    ++result.sessions_accepted;
    validated.rate_hz = v.rate_hz;
    auto segs = segment_session(validated, trimmed, overlaps, opts.window,
                                session_id - 1);
    for (auto& s : segs) segments.push_back(std::move(s));
  }
  result.segments_before_filter = segments.size();

  SplitResult split = split_train_test(segments, opts.test_fraction, opts.seed);
  result.warnings = split.warnings;
  if (split.train.empty()) {
    throw PipelineError("preprocess: no training segments survived");
  }

  result.stats = compute_stats(split.train);
  std::vector<DataSegment> train_norm, test_norm;
  train_norm.reserve(split.train.size());
  test_norm.reserve(split.test.size());
  for (const DataSegment& s : split.train)
    train_norm.push_back(normalize(s, result.stats));
  for (const DataSegment& s : split.test)
    test_norm.push_back(normalize(s, result.stats));

  result.train = filter_flat(train_norm, opts.flat_window, opts.flat_threshold);
  result.test = filter_flat(test_norm, opts.flat_window, opts.flat_threshold);
  return result;
}

}  // namespace flsim
