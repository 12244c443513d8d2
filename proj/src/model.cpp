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

#include "flsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flsim/container.hpp"
#include "flsim/nn_ops.hpp"

namespace flsim {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

Tensor glorot_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                      std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-a, a);
  return t;
}

struct BnCache {
  Tensor mean;                // [F]
  Tensor inv_std;             // [F], 1/sqrt(var + eps)
  std::vector<Tensor> xhat;   // per sample [F, L]
};

// Train-mode batch norm over a whole batch; statistics are per channel over
// (batch x length). Optionally advances the running averages.
std::vector<Tensor> bn_forward_train(const std::vector<Tensor>& xs,
                                     const Tensor& gamma, const Tensor& beta,
                                     Tensor* running_mean, Tensor* running_var,
                                     BnCache& cache) {
  const std::size_t s_count = xs.size();
  const std::size_t f = xs[0].dim(0);
  const std::size_t len = xs[0].dim(1);
  const double n = static_cast<double>(s_count * len);

  cache.mean = Tensor({f});
  cache.inv_std = Tensor({f});
  Tensor var({f});
  for (std::size_t c = 0; c < f; ++c) {
    double acc = 0.0;
    for (const Tensor& x : xs)
      for (std::size_t i = 0; i < len; ++i) acc += x.at(c, i);
    const double mu = acc / n;
    double vacc = 0.0;
    for (const Tensor& x : xs)
      for (std::size_t i = 0; i < len; ++i) {
        const double d = x.at(c, i) - mu;
        vacc += d * d;
      }
    cache.mean.at(c) = mu;
    var.at(c) = vacc / n;
    cache.inv_std.at(c) = 1.0 / std::sqrt(var.at(c) + kBnEps);
  }

  if (running_mean != nullptr) {
    for (std::size_t c = 0; c < f; ++c) {
      running_mean->at(c) =
          kBnMomentum * running_mean->at(c) + (1.0 - kBnMomentum) * cache.mean.at(c);
      running_var->at(c) =
          kBnMomentum * running_var->at(c) + (1.0 - kBnMomentum) * var.at(c);
    }
  }

  cache.xhat.resize(s_count);
  std::vector<Tensor> out(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    cache.xhat[s] = Tensor({f, len});
    out[s] = Tensor({f, len});
    for (std::size_t c = 0; c < f; ++c) {
      const double mu = cache.mean.at(c);
      const double is = cache.inv_std.at(c);
      for (std::size_t i = 0; i < len; ++i) {
        const double xh = (xs[s].at(c, i) - mu) * is;
        cache.xhat[s].at(c, i) = xh;
        out[s].at(c, i) = gamma.at(c) * xh + beta.at(c);
      }
    }
  }
  return out;
}

Tensor bn_forward_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var) {
  const std::size_t f = x.dim(0);
  const std::size_t len = x.dim(1);
  Tensor out({f, len});
  for (std::size_t c = 0; c < f; ++c) {
    const double is = 1.0 / std::sqrt(running_var.at(c) + kBnEps);
    for (std::size_t i = 0; i < len; ++i) {
      out.at(c, i) = gamma.at(c) * (x.at(c, i) - running_mean.at(c)) * is + beta.at(c);
    }
  }
  return out;
}

// dx = inv_std/N * (N*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)), per channel.
std::vector<Tensor> bn_backward(const std::vector<Tensor>& dys,
                                const BnCache& cache, const Tensor& gamma,
                                Tensor& dgamma, Tensor& dbeta) {
  const std::size_t s_count = dys.size();
  const std::size_t f = dys[0].dim(0);
  const std::size_t len = dys[0].dim(1);
  const double n = static_cast<double>(s_count * len);

  Tensor sum_dxhat({f});
  Tensor sum_dxhat_xhat({f});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t c = 0; c < f; ++c) {
      const double g = gamma.at(c);
      for (std::size_t i = 0; i < len; ++i) {
        const double dy = dys[s].at(c, i);
        const double xh = cache.xhat[s].at(c, i);
        dgamma.at(c) += dy * xh;
        dbeta.at(c) += dy;
        sum_dxhat.at(c) += dy * g;
        sum_dxhat_xhat.at(c) += dy * g * xh;
      }
    }
  }

  std::vector<Tensor> dxs(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    dxs[s] = Tensor({f, len});
    for (std::size_t c = 0; c < f; ++c) {
      const double g = gamma.at(c);
      const double is = cache.inv_std.at(c);
      for (std::size_t i = 0; i < len; ++i) {
        const double dxhat = dys[s].at(c, i) * g;
        dxs[s].at(c, i) =
            (is / n) * (n * dxhat - sum_dxhat.at(c) -
                        cache.xhat[s].at(c, i) * sum_dxhat_xhat.at(c));
      }
    }
  }
  return dxs;
}

void check_segment(const Tensor& segment) {
  require_shape(segment,
                {static_cast<std::size_t>(kSegmentChannels),
                 static_cast<std::size_t>(kSegmentLength)},
                "model input segment");
  require_finite(segment, "model input segment");
}

}  // namespace

Tensor& ModelParams::t(const std::string& name) {
  for (auto& [n, tensor] : tensors) {
    if (n == name) return tensor;
  }
  throw Error("model has no parameter named '" + name + "'");
}

const Tensor& ModelParams::t(const std::string& name) const {
  for (const auto& [n, tensor] : tensors) {
    if (n == name) return tensor;
  }
  throw Error("model has no parameter named '" + name + "'");
}

bool ModelParams::is_trainable(const std::string& name) {
  return name.find(".bn.running_") == std::string::npos;
}

std::size_t ModelParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, tensor] : tensors) {
    if (is_trainable(name)) n += tensor.size();
  }
  return n;
}

ModelParams build_model(int channels, int num_classes, bool bn_enabled,
                        std::uint64_t seed, int kernel1, int kernel2) {
  if (channels <= 0) throw Error("build_model: channels must be positive");
  if (num_classes <= 0) throw Error("build_model: num_classes must be positive");
  if (kernel1 % 2 == 0 || kernel2 % 2 == 0) {
    throw Error("build_model: kernel sizes must be odd");
  }

  const auto f = static_cast<std::size_t>(channels);
  const auto k = static_cast<std::size_t>(num_classes);
  const auto cin = static_cast<std::size_t>(kSegmentChannels);
  const auto k1 = static_cast<std::size_t>(kernel1);
  const auto k2 = static_cast<std::size_t>(kernel2);

  ModelParams p;
  p.channels = channels;
  p.num_classes = num_classes;
  p.bn_enabled = bn_enabled;
  p.kernel1 = kernel1;
  p.kernel2 = kernel2;

  Rng rng(seed);
  auto add_bn = [&](const std::string& layer) {
    Tensor gamma({f});
    std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
    Tensor var({f});
    std::fill(var.data.begin(), var.data.end(), 1.0);
    p.tensors.emplace_back(layer + ".bn.gamma", gamma);
    p.tensors.emplace_back(layer + ".bn.beta", Tensor({f}));
    p.tensors.emplace_back(layer + ".bn.running_mean", Tensor({f}));
    p.tensors.emplace_back(layer + ".bn.running_var", var);
  };

  p.tensors.emplace_back("a1.kernels",
                         glorot_uniform({f, cin, k1}, cin * k1, f * k1, rng));
  p.tensors.emplace_back("a1.bias", Tensor({f}));
  if (bn_enabled) add_bn("a1");
  p.tensors.emplace_back("a2.kernels",
                         glorot_uniform({f, f, k2}, f * k2, f * k2, rng));
  p.tensors.emplace_back("a2.bias", Tensor({f}));
  if (bn_enabled) add_bn("a2");
  p.tensors.emplace_back("b1.kernels",
                         glorot_uniform({f, cin, k1}, cin * k1, f * k1, rng));
  p.tensors.emplace_back("b1.bias", Tensor({f}));
  if (bn_enabled) add_bn("b1");
  p.tensors.emplace_back("out.weights",
                         glorot_uniform({k, 2 * f}, 2 * f, k, rng));
  p.tensors.emplace_back("out.bias", Tensor({k}));
  return p;
}

Tensor forward(const ModelParams& params, const Tensor& segment, Mode mode,
               Rng* rng, double dropout_rate) {
  check_segment(segment);
  const bool bn = params.bn_enabled;
  const bool train = mode == Mode::kTrain;

  auto branch = [&](const std::string& l1,
                    const std::string& l2) -> Tensor {
    Tensor h = conv1d_forward(segment, params.t(l1 + ".kernels"),
                              params.t(l1 + ".bias"));
    if (bn) {
      if (train) {
        BnCache cache;
        std::vector<Tensor> xs{std::move(h)};
        h = std::move(bn_forward_train(xs, params.t(l1 + ".bn.gamma"),
                                       params.t(l1 + ".bn.beta"), nullptr,
                                       nullptr, cache)[0]);
      } else {
        h = bn_forward_eval(h, params.t(l1 + ".bn.gamma"),
                            params.t(l1 + ".bn.beta"),
                            params.t(l1 + ".bn.running_mean"),
                            params.t(l1 + ".bn.running_var"));
      }
    }
    h = relu(h);
    if (!l2.empty()) {
      h = conv1d_forward(h, params.t(l2 + ".kernels"), params.t(l2 + ".bias"));
      if (bn) {
        if (train) {
          BnCache cache;
          std::vector<Tensor> xs{std::move(h)};
          h = std::move(bn_forward_train(xs, params.t(l2 + ".bn.gamma"),
                                         params.t(l2 + ".bn.beta"), nullptr,
                                         nullptr, cache)[0]);
        } else {
          h = bn_forward_eval(h, params.t(l2 + ".bn.gamma"),
                              params.t(l2 + ".bn.beta"),
                              params.t(l2 + ".bn.running_mean"),
                              params.t(l2 + ".bn.running_var"));
        }
      }
      h = relu(h);
    }
    return gap(h);
  };

  const Tensor fa = branch("a1", "a2");
  const Tensor fb = branch("b1", "");
  const std::size_t f = fa.dim(0);
  Tensor z({2 * f});
  std::copy(fa.data.begin(), fa.data.end(), z.data.begin());
  std::copy(fb.data.begin(), fb.data.end(), z.data.begin() + f);

  if (train && dropout_rate > 0.0) {
    if (rng == nullptr) {
      throw Error("forward: train mode with dropout requires an rng");
    }
    const double keep = 1.0 - dropout_rate;
    for (double& v : z.data) v = rng->bernoulli(keep) ? v / keep : 0.0;
  }

  Tensor logits =
      dense_forward(z, params.t("out.weights"), params.t("out.bias"));
  require_finite(logits, "model logits");
  return logits;
}

double batch_loss_and_gradients(
    ModelParams& params, std::span<const SampleRef> batch, double dropout_rate,
    Rng& rng, std::vector<std::pair<std::string, Tensor>>& grads_out) {
  if (batch.empty()) throw Error("batch_loss_and_gradients: empty batch");
  const bool bn = params.bn_enabled;
  const std::size_t s_count = batch.size();
  const std::size_t f = static_cast<std::size_t>(params.channels);

  grads_out.clear();
  for (const auto& [name, tensor] : params.tensors) {
    if (ModelParams::is_trainable(name)) {
      grads_out.emplace_back(name, Tensor::zeros_like(tensor));
    }
  }
  auto grad_of = [&](const std::string& name) -> Tensor& {
    for (auto& [n, g] : grads_out) {
      if (n == name) return g;
    }
    throw Error("no gradient slot for '" + name + "'");
  };

  // Forward, layer by layer across the whole batch so BN sees batch
  // statistics.
  std::vector<Tensor> a1_pre(s_count), b1_pre(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    check_segment(*batch[s].values);
    a1_pre[s] = conv1d_forward(*batch[s].values, params.t("a1.kernels"),
                               params.t("a1.bias"));
    b1_pre[s] = conv1d_forward(*batch[s].values, params.t("b1.kernels"),
                               params.t("b1.bias"));
  }

  BnCache c_a1, c_a2, c_b1;
  std::vector<Tensor> a1_out, b1_out;
  if (bn) {
    a1_out = bn_forward_train(a1_pre, params.t("a1.bn.gamma"),
                              params.t("a1.bn.beta"),
                              &params.t("a1.bn.running_mean"),
                              &params.t("a1.bn.running_var"), c_a1);
    b1_out = bn_forward_train(b1_pre, params.t("b1.bn.gamma"),
                              params.t("b1.bn.beta"),
                              &params.t("b1.bn.running_mean"),
                              &params.t("b1.bn.running_var"), c_b1);
  } else {
    a1_out = a1_pre;
    b1_out = b1_pre;
  }

  std::vector<Tensor> a1_act(s_count), b1_act(s_count), a2_pre(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    a1_act[s] = relu(a1_out[s]);
    b1_act[s] = relu(b1_out[s]);
    a2_pre[s] = conv1d_forward(a1_act[s], params.t("a2.kernels"),
                               params.t("a2.bias"));
  }

  std::vector<Tensor> a2_out;
  if (bn) {
    a2_out = bn_forward_train(a2_pre, params.t("a2.bn.gamma"),
                              params.t("a2.bn.beta"),
                              &params.t("a2.bn.running_mean"),
                              &params.t("a2.bn.running_var"), c_a2);
  } else {
    a2_out = a2_pre;
  }

  std::vector<Tensor> a2_act(s_count), z(s_count), mask;
  const bool use_dropout = dropout_rate > 0.0;
  if (use_dropout) mask.resize(s_count);
  double loss_acc = 0.0;
  std::vector<Tensor> dz(s_count);

  const Tensor& out_w = params.t("out.weights");
  const Tensor& out_b = params.t("out.bias");
  Tensor& g_out_w = grad_of("out.weights");
  Tensor& g_out_b = grad_of("out.bias");

  for (std::size_t s = 0; s < s_count; ++s) {
    a2_act[s] = relu(a2_out[s]);
    const Tensor fa = gap(a2_act[s]);
    const Tensor fb = gap(b1_act[s]);
    z[s] = Tensor({2 * f});
    std::copy(fa.data.begin(), fa.data.end(), z[s].data.begin());
    std::copy(fb.data.begin(), fb.data.end(), z[s].data.begin() + f);

    if (use_dropout) {
      const double keep = 1.0 - dropout_rate;
      mask[s] = Tensor({2 * f});
      for (std::size_t i = 0; i < 2 * f; ++i) {
        mask[s].at(i) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        z[s].at(i) *= mask[s].at(i);
      }
    }

    const Tensor logits = dense_forward(z[s], out_w, out_b);
    auto xent = softmax_cross_entropy(
        logits, static_cast<std::size_t>(batch[s].label));
    loss_acc += xent.loss;
    // Mean reduction: scale each sample's upstream gradient by 1/S.
    for (double& v : xent.grad_logits.data) v /= static_cast<double>(s_count);

    DenseGrads dg = dense_backward(z[s], out_w, xent.grad_logits);
    for (std::size_t i = 0; i < g_out_w.size(); ++i)
      g_out_w.data[i] += dg.weights.data[i];
    for (std::size_t i = 0; i < g_out_b.size(); ++i)
      g_out_b.data[i] += dg.bias.data[i];
    dz[s] = std::move(dg.input);
    if (use_dropout) {
      for (std::size_t i = 0; i < 2 * f; ++i) dz[s].at(i) *= mask[s].at(i);
    }
  }

  // Backward through both branches, batch at a time for the BN layers.
  std::vector<Tensor> d_a2_out(s_count), d_b1_out(s_count);
  for (std::size_t s = 0; s < s_count; ++s) {
    Tensor dfa({f}), dfb({f});
    std::copy(dz[s].data.begin(), dz[s].data.begin() + f, dfa.data.begin());
    std::copy(dz[s].data.begin() + f, dz[s].data.end(), dfb.data.begin());
    d_a2_out[s] = relu_backward(a2_out[s], gap_backward(a2_act[s], dfa));
    d_b1_out[s] = relu_backward(b1_out[s], gap_backward(b1_act[s], dfb));
  }

  std::vector<Tensor> d_a2_pre;
  if (bn) {
    d_a2_pre = bn_backward(d_a2_out, c_a2, params.t("a2.bn.gamma"),
                           grad_of("a2.bn.gamma"), grad_of("a2.bn.beta"));
  } else {
    d_a2_pre = std::move(d_a2_out);
  }

  std::vector<Tensor> d_a1_out(s_count);
  {
    Tensor& gk = grad_of("a2.kernels");
    Tensor& gb = grad_of("a2.bias");
    for (std::size_t s = 0; s < s_count; ++s) {
      Conv1dGrads cg =
          conv1d_backward(a1_act[s], params.t("a2.kernels"), d_a2_pre[s]);
      for (std::size_t i = 0; i < gk.size(); ++i) gk.data[i] += cg.kernels.data[i];
      for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += cg.bias.data[i];
      d_a1_out[s] = relu_backward(a1_out[s], cg.input);
    }
  }

  std::vector<Tensor> d_a1_pre;
  if (bn) {
    d_a1_pre = bn_backward(d_a1_out, c_a1, params.t("a1.bn.gamma"),
                           grad_of("a1.bn.gamma"), grad_of("a1.bn.beta"));
  } else {
    d_a1_pre = std::move(d_a1_out);
  }

  std::vector<Tensor> d_b1_pre;
  if (bn) {
    d_b1_pre = bn_backward(d_b1_out, c_b1, params.t("b1.bn.gamma"),
                           grad_of("b1.bn.gamma"), grad_of("b1.bn.beta"));
  } else {
    d_b1_pre = std::move(d_b1_out);
  }

  {
    Tensor& gk1 = grad_of("a1.kernels");
    Tensor& gb1 = grad_of("a1.bias");
    Tensor& gkb = grad_of("b1.kernels");
    Tensor& gbb = grad_of("b1.bias");
    for (std::size_t s = 0; s < s_count; ++s) {
      Conv1dGrads ca =
          conv1d_backward(*batch[s].values, params.t("a1.kernels"), d_a1_pre[s]);
      for (std::size_t i = 0; i < gk1.size(); ++i) gk1.data[i] += ca.kernels.data[i];
      for (std::size_t i = 0; i < gb1.size(); ++i) gb1.data[i] += ca.bias.data[i];
      Conv1dGrads cb =
          conv1d_backward(*batch[s].values, params.t("b1.kernels"), d_b1_pre[s]);
      for (std::size_t i = 0; i < gkb.size(); ++i) gkb.data[i] += cb.kernels.data[i];
      for (std::size_t i = 0; i < gbb.size(); ++i) gbb.data[i] += cb.bias.data[i];
    }
  }

  return loss_acc / static_cast<double>(s_count);
}

GradientUpdate local_train(const ModelParams& global,
                           std::span<const SampleRef> data,
                           const TrainConfig& cfg,
                           std::vector<double>* epoch_losses) {
  if (cfg.client_lr <= 0.0) throw Error("local_train: client_lr must be > 0");
  if (cfg.epochs < 0) throw Error("local_train: epochs must be >= 0");
  if (cfg.epochs > 0 && data.empty()) {
    throw Error("local_train: no training data but epochs > 0");
  }
  if (cfg.batch_size <= 0) throw Error("local_train: batch_size must be > 0");

  GradientUpdate update = zero_update_like(global);
  update.sample_count = std::max<std::size_t>(1, data.size());
  if (cfg.epochs == 0) return update;

  ModelParams local = global;
  Rng rng(cfg.seed);

  std::vector<AdamState> adam;
  std::vector<std::string> trainable;
  for (const auto& [name, tensor] : local.tensors) {
    if (ModelParams::is_trainable(name)) {
      trainable.push_back(name);
      adam.push_back(AdamState::init(tensor));
    }
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::pair<std::string, Tensor>> grads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<SampleRef> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);

      const double loss = batch_loss_and_gradients(
          local, batch, cfg.dropout_rate, rng, grads);
      epoch_loss += loss * static_cast<double>(batch.size());

      for (std::size_t ti = 0; ti < trainable.size(); ++ti) {
        Tensor& p = local.t(trainable[ti]);
        const Tensor& g = grads[ti].second;
        if (cfg.optimizer == TrainConfig::Optimizer::kSgd) {
          for (std::size_t i = 0; i < p.size(); ++i)
            p.data[i] -= cfg.client_lr * g.data[i];
        } else {
          AdamConfig ac;
          ac.lr = cfg.client_lr;
          auto [next_p, next_state] = adam_step(p, g, adam[ti], ac);
          p = std::move(next_p);
          adam[ti] = std::move(next_state);
        }
      }
    }
    if (epoch_losses != nullptr) {
      epoch_losses->push_back(epoch_loss / static_cast<double>(data.size()));
    }
  }

  for (std::size_t i = 0; i < update.deltas.size(); ++i) {
    const Tensor& before = global.tensors[i].second;
    const Tensor& after = local.tensors[i].second;
    Tensor& d = update.deltas[i].second;
    for (std::size_t j = 0; j < d.size(); ++j)
      d.data[j] = after.data[j] - before.data[j];
    require_finite(d, "local_train delta '" + update.deltas[i].first + "'");
  }
  return update;
}

EvalMetrics evaluate(const ModelParams& params,
                     std::span<const SampleRef> data) {
  if (data.empty()) throw Error("evaluate: data must be non-empty");
  const std::size_t k = static_cast<std::size_t>(params.num_classes);
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::size_t correct = 0;
  double loss_acc = 0.0;

  for (const SampleRef& sample : data) {
    const Tensor logits = forward(params, *sample.values, Mode::kEval);
    const std::size_t label = static_cast<std::size_t>(sample.label);
    loss_acc += softmax_cross_entropy(logits, label).loss;
    std::size_t pred = 0;
    for (std::size_t i = 1; i < k; ++i) {
      if (logits.at(i) > logits.at(pred)) pred = i;
    }
    if (pred == label) {
      ++correct;
      ++tp[label];
    } else {
      ++fp[pred];
      ++fn[label];
    }
  }

  EvalMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  m.loss = loss_acc / static_cast<double>(data.size());
  for (std::size_t c = 0; c < k; ++c) {
    double precision = 0.0;
    double recall = 0.0;
    if (tp[c] + fn[c] > 0) {  // class present in the data
      precision = tp[c] + fp[c] > 0
                      ? static_cast<double>(tp[c]) /
                            static_cast<double>(tp[c] + fp[c])
                      : 0.0;
      recall = static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
    }
    const double f1 =
        precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                 : 0.0;
    m.macro_precision += precision / static_cast<double>(k);
    m.macro_recall += recall / static_cast<double>(k);
    m.macro_f1 += f1 / static_cast<double>(k);
  }
  return m;
}

void save_model(const ModelParams& params, const std::string& path) {
  Container c;
  c.meta = {{"kind", "model"},
            {"channels", params.channels},
            {"num_classes", params.num_classes},
            {"bn_enabled", params.bn_enabled},
            {"kernel1", params.kernel1},
            {"kernel2", params.kernel2}};
  c.entries = params.tensors;
  write_container(c, path);
}

ModelParams load_model(const std::string& path) {
  const Container c = read_container(path);
  if (c.meta.value("kind", "") != "model") {
    throw ContainerError("'" + path + "' is not a model checkpoint");
  }
  ModelParams p;
  p.channels = c.meta.at("channels").get<int>();
  p.num_classes = c.meta.at("num_classes").get<int>();
  p.bn_enabled = c.meta.at("bn_enabled").get<bool>();
  p.kernel1 = c.meta.value("kernel1", 9);
  p.kernel2 = c.meta.value("kernel2", 5);
  p.tensors = c.entries;
  return p;
}

GradientUpdate zero_update_like(const ModelParams& params) {
  GradientUpdate u;
  u.deltas.reserve(params.tensors.size());
  for (const auto& [name, tensor] : params.tensors) {
    u.deltas.emplace_back(name, Tensor::zeros_like(tensor));
  }
  return u;
}

void apply_delta(ModelParams& params,
                 const std::vector<std::pair<std::string, Tensor>>& delta,
                 double scale) {
  if (delta.size() != params.tensors.size()) {
    throw ShapeError("apply_delta: delta has " + std::to_string(delta.size()) +
                     " tensors, model has " +
                     std::to_string(params.tensors.size()));
  }
  for (std::size_t i = 0; i < delta.size(); ++i) {
    Tensor& p = params.tensors[i].second;
    const Tensor& d = delta[i].second;
    if (!p.same_shape(d)) {
      throw ShapeError("apply_delta: shape mismatch for '" +
                       params.tensors[i].first + "'");
    }
    for (std::size_t j = 0; j < p.size(); ++j) p.data[j] += scale * d.data[j];
  }
}

double update_l2_norm(const GradientUpdate& update) {
  double acc = 0.0;
  for (const auto& [name, t] : update.deltas) {
    for (double v : t.data) acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace flsim
