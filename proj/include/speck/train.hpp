#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "speck/adam.hpp"
#include "speck/checkpoint.hpp"
#include "speck/downstream.hpp"
#include "speck/error.hpp"
#include "speck/eval.hpp"
#include "speck/features.hpp"
#include "speck/manifest.hpp"
#include "speck/upstream.hpp"

namespace speck {

enum class TrainMode { kFrozen, kFinetune };

struct TrainConfig {
  TrainMode mode = TrainMode::kFrozen;
  double head_lr = 1e-2;
  double upstream_lr = 1e-3;  // ignored in frozen mode
  int batch_size = 8;
  int64_t max_steps = 1000;
  int64_t eval_every_steps = 100;
  int patience = 10;
  double grad_clip = 5.0;
  uint64_t seed = 0;
};

// Records plus their acoustic features, aligned by index.
struct TaskDataset {
  std::vector<UtteranceRecord> records;
  std::vector<FeatureSequence> feats;

  size_t size() const { return records.size(); }
};

// Checkpoints of one training run, in strictly increasing step order.
struct CheckpointStore {
  std::string run_id;
  std::vector<Checkpoint> checkpoints;

  void append(Checkpoint ck) {
    if (!checkpoints.empty()) {
      if (ck.step <= checkpoints.back().step)
        throw DataError("checkpoint store: steps must be strictly increasing");
      if (ck.config_fingerprint != checkpoints.front().config_fingerprint)
        throw IncompatibleCheckpointsError(
            "checkpoint store: config fingerprint changed within a run");
    }
    checkpoints.push_back(std::move(ck));
  }

  void save(const std::string& root_dir) const {
    const auto dir = std::filesystem::path(root_dir) / run_id;
    std::filesystem::create_directories(dir);
    for (const auto& ck : checkpoints)
      save_checkpoint(ck, (dir / ("step" + std::to_string(ck.step) + ".ckpt")).string());
  }
};

// ---------------------------------------------------------------------------
// Checkpoint <-> model transfer

template <class S>
Checkpoint snapshot(UpstreamModel<S>& upstream, ClassifierHead<S>* head, int64_t step,
                    std::optional<double> dev_metric, uint64_t fingerprint) {
  Checkpoint ck;
  ck.step = step;
  ck.dev_metric = dev_metric;
  ck.config_fingerprint = fingerprint;
  for (auto* p : upstream.params())
    ck.tensors.emplace_back(p->name, p->value.template cast<float>());
  if (head) {
    for (auto* p : head->params())
      ck.tensors.emplace_back(p->name, p->value.template cast<float>());
    ck.label_sets[head->task_name] = head->label_set;
  }
  return ck;
}

template <class S>
void load_from_checkpoint(const Checkpoint& ck, UpstreamModel<S>& upstream,
                          ClassifierHead<S>* head) {
  auto restore = [&](Parameter<S>* p) {
    const Tensor<float>* t = ck.find(p->name);
    if (!t)
      throw IncompatibleCheckpointsError("checkpoint is missing tensor: " + p->name);
    if (t->shape != p->value.shape)
      throw IncompatibleCheckpointsError("checkpoint tensor shape mismatch: " + p->name);
    p->value = t->template cast<S>();
    p->zero_grad();
  };
  for (auto* p : upstream.params()) restore(p);
  if (head)
    for (auto* p : head->params()) restore(p);
}

// ---------------------------------------------------------------------------
// Weight averaging and checkpoint selection

// Elementwise arithmetic mean per named tensor. Inputs must agree on names,
// shapes, and config fingerprint. The result's dev metric is unset: averaging
// invalidates it.
inline Checkpoint average_checkpoints(const std::vector<Checkpoint>& cks) {
  if (cks.empty()) throw EmptyInputError("average_checkpoints: empty list");
  const Checkpoint& first = cks.front();
  Checkpoint out;
  out.config_fingerprint = first.config_fingerprint;
  out.label_sets = first.label_sets;
  out.step = first.step;
  out.dev_metric = std::nullopt;

  for (const auto& ck : cks) {
    if (ck.config_fingerprint != first.config_fingerprint)
      throw IncompatibleCheckpointsError("average_checkpoints: fingerprint mismatch");
    if (ck.tensors.size() != first.tensors.size())
      throw IncompatibleCheckpointsError("average_checkpoints: tensor count mismatch");
    out.step = std::max(out.step, ck.step);
  }

  for (size_t ti = 0; ti < first.tensors.size(); ++ti) {
    const auto& [name, t0] = first.tensors[ti];
    std::vector<double> acc(static_cast<size_t>(t0.size()), 0.0);
    for (const auto& ck : cks) {
      const auto& [n, t] = ck.tensors[ti];
      if (n != name || t.shape != t0.shape)
        throw IncompatibleCheckpointsError(
            "average_checkpoints: tensor name/shape mismatch at " + name);
      for (int64_t j = 0; j < t.size(); ++j) acc[static_cast<size_t>(j)] += static_cast<double>(t[j]);
    }
    Tensor<float> mean(t0.shape);
    for (int64_t j = 0; j < mean.size(); ++j)
      mean[j] = static_cast<float>(acc[static_cast<size_t>(j)] / static_cast<double>(cks.size()));
    out.tensors.emplace_back(name, std::move(mean));
  }
  return out;
}

// The k checkpoints with the highest dev metric; ties break toward the
// earlier step. Fewer than k checkpoints returns the whole store.
inline std::vector<Checkpoint> select_top_k(const CheckpointStore& store, int k) {
  if (store.checkpoints.empty()) throw EmptyInputError("select_top_k: empty store");
  if (k < 1) throw RangeError("select_top_k: k must be >= 1");
  std::vector<size_t> order(store.checkpoints.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double ma = store.checkpoints[a].dev_metric.value_or(
        -std::numeric_limits<double>::infinity());
    const double mb = store.checkpoints[b].dev_metric.value_or(
        -std::numeric_limits<double>::infinity());
    if (ma != mb) return ma > mb;
    return store.checkpoints[a].step < store.checkpoints[b].step;
  });
  std::vector<Checkpoint> out;
  const size_t n = std::min(static_cast<size_t>(k), order.size());
  for (size_t i = 0; i < n; ++i) out.push_back(store.checkpoints[order[i]]);
  return out;
}

// The best-dev checkpoint plus the first checkpoint at or after the requested
// step; deduplicated when they coincide.
inline std::vector<Checkpoint> select_best_plus_step(const CheckpointStore& store,
                                                     int64_t step) {
  if (store.checkpoints.empty())
    throw EmptyInputError("select_best_plus_step: empty store");
  const Checkpoint* at_step = nullptr;
  for (const auto& ck : store.checkpoints)
    if (ck.step >= step) {
      at_step = &ck;
      break;
    }
  if (!at_step)
    throw StepNotReachedError("select_best_plus_step: training ended at step " +
                              std::to_string(store.checkpoints.back().step) +
                              " before requested step " + std::to_string(step));
  Checkpoint best = select_top_k(store, 1).front();
  if (best.step == at_step->step) return {best};
  return {best, *at_step};
}

// ---------------------------------------------------------------------------
// Upstream pretraining driver

struct PretrainConfig {
  int64_t steps = 2000;
  int batch_size = 4;
  double lr = 3e-4;
  double grad_clip = 5.0;
  MaskSpec mask;
  uint64_t seed = 0;
};

// Minibatch masked-prediction pretraining over a corpus of feature sequences
// with per-frame cluster targets. Returns the per-step mean losses.
template <class S>
std::vector<double> pretrain_run(UpstreamModel<S>& model,
                                 const std::vector<FeatureSequence>& feats,
                                 const std::vector<std::vector<int>>& targets,
                                 const PretrainConfig& cfg) {
  if (feats.empty()) throw EmptyInputError("pretrain_run: empty corpus");
  if (feats.size() != targets.size())
    throw ShapeError("pretrain_run: feature/target count mismatch");

  ParamRefs<S> params = model.params();
  AdamState<S> opt = AdamState<S>::init(params, cfg.lr);
  Rng order_rng(cfg.seed, "pretrain.order");

  std::vector<size_t> order(feats.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  size_t cursor = 0;

  std::vector<double> losses;
  losses.reserve(static_cast<size_t>(cfg.steps));
  for (int64_t step = 0; step < cfg.steps; ++step) {
    zero_grads(params);
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      const size_t idx = order[cursor++];
      MaskSpec spec = cfg.mask;
      spec.seed = cfg.seed ^ fnv1a64("pretrain.mask") ^
                  (static_cast<uint64_t>(step) * 0x9E3779B97F4A7C15ull + b);
      batch_loss += static_cast<double>(
          pretrain_step(model, feats[idx], targets[idx], spec, 1.0 / cfg.batch_size));
    }
    batch_loss /= cfg.batch_size;
    if (!std::isfinite(batch_loss)) throw NumericError("pretrain_run: non-finite loss");
    clip_grad_norm(params, cfg.grad_clip);
    adam_step(params, opt);
    losses.push_back(batch_loss);
  }
  return losses;
}

// ---------------------------------------------------------------------------
// Task training (frozen / finetune)

namespace detail {

template <class S>
std::vector<int> dataset_labels(const TaskDataset& ds, const ClassifierHead<S>& head) {
  std::vector<int> labels;
  labels.reserve(ds.size());
  for (const auto& r : ds.records) labels.push_back(head.label_index(r.label));
  return labels;
}

// Pooled upstream representations for a whole dataset, one row per utterance.
template <class S>
Tensor<float> pooled_matrix(const UpstreamModel<S>& upstream,
                            const std::vector<FeatureSequence>& feats) {
  if (feats.empty()) throw EmptyInputError("pooled_matrix: no features");
  Tensor<float> out({static_cast<int64_t>(feats.size()), upstream.cfg.d_model});
  for (size_t i = 0; i < feats.size(); ++i) {
    FeatureSequence reps = extract(upstream, feats[i]);
    std::vector<float> pooled = pool_mean(reps.data);
    std::copy(pooled.begin(), pooled.end(), out.v.begin() + static_cast<int64_t>(i) * out.cols());
  }
  return out;
}

template <class S>
double accuracy_from_pooled(const Tensor<float>& pooled, const std::vector<int>& labels,
                            const ClassifierHead<S>& head) {
  std::vector<int> preds;
  preds.reserve(static_cast<size_t>(pooled.rows()));
  for (int64_t i = 0; i < pooled.rows(); ++i) {
    std::vector<S> row(static_cast<size_t>(pooled.cols()));
    for (int64_t j = 0; j < pooled.cols(); ++j) row[static_cast<size_t>(j)] = static_cast<S>(pooled.at(i, j));
    preds.push_back(classify(row, head).argmax());
  }
  return weighted_accuracy(preds, labels);
}

}  // namespace detail

// Minibatch cross-entropy training of the linear head (frozen) or of head and
// upstream jointly (finetune). Every eval_every_steps the dev accuracy is
// computed and a checkpoint appended; training stops at max_steps or when the
// dev metric has not improved for `patience` evaluations.
//
// Frozen mode precomputes pooled representations once and never touches the
// upstream parameters.
template <class S>
CheckpointStore train(UpstreamModel<S>& upstream, ClassifierHead<S>& head,
                      const TaskDataset& train_ds, const TaskDataset& dev_ds,
                      const TrainConfig& cfg, uint64_t fingerprint,
                      const std::string& run_id = "run") {
  if (dev_ds.size() == 0) throw EmptyInputError("train: dev set is empty");
  if (train_ds.size() == 0) throw EmptyInputError("train: train set is empty");
  if (cfg.max_steps < 1 || cfg.eval_every_steps < 1 || cfg.batch_size < 1 ||
      cfg.patience < 1)
    throw RangeError("train: counts must be positive");

  const std::vector<int> train_labels = detail::dataset_labels(train_ds, head);
  const std::vector<int> dev_labels = detail::dataset_labels(dev_ds, head);

  CheckpointStore store;
  store.run_id = run_id;

  ParamRefs<S> head_params = head.params();
  ParamRefs<S> all_params;
  AdamState<S> opt;
  const bool frozen = cfg.mode == TrainMode::kFrozen;
  if (frozen) {
    all_params = head_params;
    opt = AdamState<S>::init(all_params, cfg.head_lr);
  } else {
    if (cfg.head_lr <= 0.0) throw RangeError("train: head_lr must be positive");
    all_params = upstream.params();
    const size_t n_upstream = all_params.size();
    for (auto* p : head_params) all_params.push_back(p);
    opt = AdamState<S>::init(all_params, cfg.head_lr);
    for (size_t i = 0; i < n_upstream; ++i)
      opt.lr_scale[i] = cfg.upstream_lr / cfg.head_lr;
  }

  // Frozen: representations are fixed, compute them once.
  Tensor<float> train_pooled, dev_pooled;
  if (frozen) {
    train_pooled = detail::pooled_matrix(upstream, train_ds.feats);
    dev_pooled = detail::pooled_matrix(upstream, dev_ds.feats);
  }

  auto dev_accuracy = [&]() -> double {
    if (frozen) return detail::accuracy_from_pooled(dev_pooled, dev_labels, head);
    std::vector<int> preds;
    preds.reserve(dev_ds.size());
    for (const auto& f : dev_ds.feats) {
      FeatureSequence reps = extract(upstream, f);
      std::vector<float> pooled = pool_mean(reps.data);
      std::vector<S> row(pooled.begin(), pooled.end());
      preds.push_back(classify(row, head).argmax());
    }
    return weighted_accuracy(preds, dev_labels);
  };

  Rng order_rng(cfg.seed, "train.order");
  std::vector<size_t> order(train_ds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  size_t cursor = 0;

  double best_metric = -1.0;
  int evals_since_improvement = 0;

  for (int64_t step = 1; step <= cfg.max_steps; ++step) {
    // Assemble the batch.
    std::vector<size_t> batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    zero_grads(all_params);
    double loss = 0.0;
    if (frozen) {
      Tensor<S> x({static_cast<int64_t>(batch.size()), train_pooled.cols()});
      std::vector<int> y(batch.size());
      for (size_t b = 0; b < batch.size(); ++b) {
        for (int64_t j = 0; j < train_pooled.cols(); ++j)
          x.at(static_cast<int64_t>(b), j) =
              static_cast<S>(train_pooled.at(static_cast<int64_t>(batch[b]), j));
        y[b] = train_labels[batch[b]];
      }
      typename Linear<S>::Cache cache;
      Tensor<S> logits = head.lin.forward(x, cache);
      std::vector<int64_t> rows(batch.size());
      for (size_t b = 0; b < batch.size(); ++b) rows[b] = static_cast<int64_t>(b);
      Tensor<S> dlogits;
      loss = static_cast<double>(cross_entropy_rows(logits, y, rows, &dlogits));
      head.lin.backward(dlogits, cache);
    } else {
      for (size_t idx : batch) {
        typename UpstreamModel<S>::ForwardCache cache;
        Tensor<S> hidden = upstream.forward_hidden(train_ds.feats[idx], nullptr, cache);
        std::vector<S> pooled = pool_mean(hidden);
        Tensor<S> x({1, static_cast<int64_t>(pooled.size())}, pooled);
        typename Linear<S>::Cache head_cache;
        Tensor<S> logits = head.lin.forward(x, head_cache);
        std::vector<S> logit_row(logits.v.begin(), logits.v.end());
        std::vector<S> grad_row;
        loss += static_cast<double>(
            cross_entropy(logit_row, train_labels[idx], &grad_row));
        Tensor<S> dlogits({1, static_cast<int64_t>(grad_row.size())}, grad_row);
        for (auto& g : dlogits.v)
          g = static_cast<S>(static_cast<double>(g) / static_cast<double>(batch.size()));
        Tensor<S> dpooled = head.lin.backward(dlogits, head_cache);
        // Mean pooling spreads the gradient uniformly over time.
        Tensor<S> dhidden(hidden.shape);
        const S inv_t = static_cast<S>(1.0 / static_cast<double>(hidden.rows()));
        for (int64_t t = 0; t < hidden.rows(); ++t)
          for (int64_t j = 0; j < hidden.cols(); ++j)
            dhidden.at(t, j) = dpooled.at(0, j) * inv_t;
        upstream.backward_hidden(dhidden, cache);
      }
      loss /= static_cast<double>(batch.size());
    }
    if (!std::isfinite(loss)) throw NumericError("train: non-finite loss at step " +
                                                 std::to_string(step));
    clip_grad_norm(all_params, cfg.grad_clip);
    adam_step(all_params, opt);

    if (step % cfg.eval_every_steps == 0) {
      const double metric = dev_accuracy();
      store.append(snapshot(upstream, &head, step, metric, fingerprint));
      if (metric > best_metric) {
        best_metric = metric;
        evals_since_improvement = 0;
      } else {
        ++evals_since_improvement;
        if (evals_since_improvement >= cfg.patience) break;
      }
    }
  }
  return store;
}

}  // namespace speck
