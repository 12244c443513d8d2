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

#ifndef FLSIM_PIPELINE_HPP_
#define FLSIM_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flsim/tensor.hpp"

namespace flsim {

// One raw accelerometer reading.
struct SensorPoint {
  std::int64_t timestamp_ms = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

// Maximal run of points whose inter-point gaps stay under the session
// threshold. rate_hz is 0 until the session passes rate validation.
struct DataSession {
  std::vector<SensorPoint> points;
  int rate_hz = 0;
};

struct LabelSession {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  int label = 0;
};

// A [3, 100] model-input window. session_id/start_index identify the raw
// source points so train/test splits can prove they share none.
struct DataSegment {
  Tensor values;  // [3, 100]
  int label = 0;
  int source_rate_hz = 0;
  std::int64_t session_id = -1;
  std::int64_t start_index = 0;
};

struct NormStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
  double clip_min = -2.0;
  double clip_max = 2.0;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

inline constexpr int kSegmentWindow = 100;

// Points sharing a timestamp are replaced by their per-axis mean. Input must
// already be sorted by timestamp.
std::vector<SensorPoint> merge_duplicates(const std::vector<SensorPoint>& points);

// Breaks the stream at any gap larger than the threshold.
std::vector<DataSession> split_sessions(const std::vector<SensorPoint>& points,
                                        std::int64_t gap_threshold_ms = 300);

struct RateValidation {
  bool accepted = false;
  int rate_hz = 0;
  std::string reason;
};

// Accepts a session at target rate r iff both the mean-gap rate and the
// median-gap rate fall within +-tolerance of r and the session lasts longer
// than min_duration. Never resamples.
RateValidation validate_rate(const DataSession& session,
                             const std::vector<int>& targets = {5, 10, 20, 50},
                             double tolerance = 0.25,
                             std::int64_t min_duration_ms = 30000);

// Trims 10 s from both ends, drops sessions that vanish, caps the remainder
// at 30 minutes from the trimmed start.
std::vector<LabelSession> trim_labels(const std::vector<LabelSession>& labels,
                                      std::int64_t trim_ms = 10000,
                                      std::int64_t cap_ms = 1800000);

// Slides class-dependent windows over the labeled stretches of a validated
// session. A window is emitted only when all 100 points fall inside a single
// trimmed label session. stride = round(window * (1 - overlap)).
std::vector<DataSegment> segment_session(
    const DataSession& session, const std::vector<LabelSession>& trimmed_labels,
    const std::map<int, double>& overlap_by_class, int window = 100,
    std::int64_t session_id = -1);

// Default per-class overlaps: 25% for the `majority_count` most frequent
// classes (by total trimmed label duration), 90% for the rest.
std::map<int, double> default_overlaps(const std::vector<LabelSession>& trimmed,
                                       int num_classes = 5,
                                       int majority_count = 3,
                                       double majority_overlap = 0.25,
                                       double minority_overlap = 0.90);

// Per-axis mean/std over the training segments only.
NormStats compute_stats(const std::vector<DataSegment>& training_segments);

// z-score, clip to [-2, 2], then scale linearly onto [-1, 1].
DataSegment normalize(const DataSegment& segment, const NormStats& stats);

// Drops segments whose mean rolling-window variance (all windows, all axes)
// falls below the threshold.
std::vector<DataSegment> filter_flat(const std::vector<DataSegment>& segments,
                                     int roll_window = 20,
                                     double threshold = 0.001);
double mean_rolling_variance(const DataSegment& segment, int roll_window = 20);

struct SplitResult {
  std::vector<DataSegment> train;
  std::vector<DataSegment> test;
  // Segments dropped from train because they shared raw points with a test
  // segment across a block boundary.
  std::size_t boundary_dropped = 0;
  std::vector<std::string> warnings;
};

// Stratified contiguous-block split. Per class the test set is one block of
// round(test_fraction * n) segments in session order; any train segment that
// would share raw source points with test is dropped.
SplitResult split_train_test(const std::vector<DataSegment>& segments,
                             double test_fraction, std::uint64_t seed);

// Plain-text ingestion: "timestamp_ms,x,y,z" and "start_ms,end_ms,label".
// A non-numeric first line is treated as a header and skipped.
std::vector<SensorPoint> read_sensor_csv(const std::string& path);
std::vector<LabelSession> read_label_csv(const std::string& path);

// Segment files in the shared container format.
void write_segments(const std::vector<DataSegment>& segments,
                    const std::string& path);
std::vector<DataSegment> read_segments(const std::string& path);

// Everything above in order: merge, session split, rate validation, label
// trimming, segmentation, train/test split, normalization, flat filtering.
struct PreprocessOptions {
  std::int64_t gap_threshold_ms = 300;
  std::vector<int> target_rates = {5, 10, 20, 50};
  double rate_tolerance = 0.25;
  std::int64_t min_duration_ms = 30000;
  std::int64_t label_trim_ms = 10000;
  std::int64_t label_cap_ms = 1800000;
  int window = 100;
  int num_classes = 5;
  int majority_count = 3;
  double majority_overlap = 0.25;
  double minority_overlap = 0.90;
  int flat_window = 20;
  double flat_threshold = 0.001;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;
};

struct PreprocessResult {
  std::vector<DataSegment> train;
  std::vector<DataSegment> test;
  NormStats stats;
  std::size_t sessions_total = 0;
  std::size_t sessions_accepted = 0;
  std::size_t segments_before_filter = 0;
  std::vector<std::string> warnings;
};

PreprocessResult preprocess(const std::vector<SensorPoint>& raw_points,
                            const std::vector<LabelSession>& raw_labels,
                            const PreprocessOptions& opts);

}  // namespace flsim

#endif  // FLSIM_PIPELINE_HPP_
