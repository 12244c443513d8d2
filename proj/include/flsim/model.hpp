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

#ifndef FLSIM_MODEL_HPP_
#define FLSIM_MODEL_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flsim/rng.hpp"
#include "flsim/tensor.hpp"

namespace flsim {

// Two-branch 1D-CNN over [3, 100] accelerometer segments:
//   branch A: conv(3->F, k1) -> [BN] -> ReLU -> conv(F->F, k2) -> [BN] -> ReLU -> GAP
//   branch B: conv(3->F, k1) -> [BN] -> ReLU -> GAP
//   concat [2F] -> dropout -> dense(2F -> num_classes)
// Both branches read the raw input independently. Batch norm is off by
// default; it is known to misbehave under federated averaging and exists for
// centralized comparisons only.
struct ModelParams {
  int channels = 64;
  int num_classes = 5;
  bool bn_enabled = false;
  int kernel1 = 9;
  int kernel2 = 5;

  // Ordered so iteration, serialization, and update layout are deterministic.
  std::vector<std::pair<std::string, Tensor>> tensors;

  Tensor& t(const std::string& name);
  const Tensor& t(const std::string& name) const;

  // BN running statistics are carried along but never touched by optimizers.
  static bool is_trainable(const std::string& name);

  std::size_t trainable_count() const;
};

inline constexpr int kSegmentChannels = 3;
inline constexpr int kSegmentLength = 100;

// A client delta: theta_local - theta_global, same named layout as the model.
struct GradientUpdate {
  std::vector<std::pair<std::string, Tensor>> deltas;
  std::string client_id;
  std::uint64_t round = 0;
  std::size_t sample_count = 1;
};

struct TrainConfig {
  enum class Optimizer { kAdam, kSgd };

  double client_lr = 0.005;
  int epochs = 1;
  int batch_size = 128;
  double dropout_rate = 0.4;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::kAdam;
};

// Non-owning view of one training sample.
struct SampleRef {
  const Tensor* values;
  int label;
};

enum class Mode { kTrain, kEval };

ModelParams build_model(int channels, int num_classes, bool bn_enabled,
                        std::uint64_t seed, int kernel1 = 9, int kernel2 = 5);

// Logits for one segment. Eval mode is deterministic; train mode applies
// inverted dropout (and per-sample BN statistics when BN is on) without
// touching `params`.
Tensor forward(const ModelParams& params, const Tensor& segment, Mode mode,
               Rng* rng = nullptr, double dropout_rate = 0.0);

// Mean loss over `batch` plus gradients of every trainable tensor (mean
// reduction). In train mode with BN enabled, batch statistics are used and
// the running averages inside `params` are advanced (momentum 0.9).
double batch_loss_and_gradients(
    ModelParams& params, std::span<const SampleRef> batch, double dropout_rate,
    Rng& rng, std::vector<std::pair<std::string, Tensor>>& grads_out);

// Runs cfg.epochs passes of shuffled mini-batch training starting from
// `global` and returns the resulting delta. `global` is never modified.
// epoch_losses, when given, receives the mean training loss of each epoch.
GradientUpdate local_train(const ModelParams& global,
                           std::span<const SampleRef> data,
                           const TrainConfig& cfg,
                           std::vector<double>* epoch_losses = nullptr);

struct EvalMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double loss = 0.0;
};

// Accuracy, macro precision/recall/F1 and mean loss. Classes that never occur
// in `data` contribute zero precision and recall to the macro averages.
EvalMetrics evaluate(const ModelParams& params, std::span<const SampleRef> data);

// Checkpoint persistence (bit-exact round trip).
void save_model(const ModelParams& params, const std::string& path);
ModelParams load_model(const std::string& path);

// Arithmetic over named delta/parameter lists, used by aggregators and DP.
GradientUpdate zero_update_like(const ModelParams& params);
void apply_delta(ModelParams& params,
                 const std::vector<std::pair<std::string, Tensor>>& delta,
                 double scale);
double update_l2_norm(const GradientUpdate& update);

}  // namespace flsim

#endif  // FLSIM_MODEL_HPP_
