#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/features.hpp"
#include "speck/nn.hpp"
#include "speck/rng.hpp"
#include "speck/tensor.hpp"

namespace speck {

// Span masking: every frame is an independent candidate span start with
// probability start_prob; a start at t masks [t, t + span_len). Overlaps are
// allowed.
struct MaskSpec {
  double start_prob = 0.08;
  int span_len = 10;
  uint64_t seed = 0;
};

inline std::vector<uint8_t> sample_mask(int64_t t_len, const MaskSpec& spec) {
  if (t_len < 1) throw EmptyInputError("sample_mask: T must be >= 1");
  if (spec.start_prob < 0.0 || spec.start_prob > 1.0)
    throw RangeError("sample_mask: start_prob must be in [0, 1]");
  if (spec.span_len < 1) throw RangeError("sample_mask: span_len must be >= 1");
  Rng rng(spec.seed, "mask");
  std::vector<uint8_t> mask(static_cast<size_t>(t_len), 0);
  for (int64_t t = 0; t < t_len; ++t) {
    if (rng.bernoulli(spec.start_prob)) {
      const int64_t end = std::min<int64_t>(t_len, t + spec.span_len);
      for (int64_t i = t; i < end; ++i) mask[static_cast<size_t>(i)] = 1;
    }
  }
  return mask;
}

// Masked rows are replaced by the learned mask embedding, unmasked rows pass
// through untouched.
template <class S>
Tensor<S> apply_mask(const Tensor<S>& projected, const std::vector<uint8_t>& mask,
                     const Tensor<S>& mask_embedding) {
  if (projected.rows() != static_cast<int64_t>(mask.size()))
    throw ShapeError("apply_mask: mask length does not match frame count");
  if (mask_embedding.size() != projected.cols())
    throw ShapeError("apply_mask: embedding width mismatch");
  Tensor<S> out = projected;
  for (int64_t t = 0; t < out.rows(); ++t)
    if (mask[static_cast<size_t>(t)])
      for (int64_t j = 0; j < out.cols(); ++j) out.at(t, j) = mask_embedding[j];
  return out;
}

struct UpstreamConfig {
  int64_t feat_dim = 40;
  int64_t d_model = 96;
  int n_blocks = 3;
  int heads = 4;
  int64_t ffn_dim = 384;
  int64_t num_clusters = 50;  // prediction head width K
};

// Masked-prediction representation extractor: input projection, learned mask
// embedding, sinusoidal positions, a stack of transformer blocks, and a
// linear head over cluster IDs used only during pretraining.
template <class S>
struct UpstreamModel {
  UpstreamConfig cfg;
  Linear<S> proj;
  Parameter<S> mask_embedding;
  std::vector<TransformerBlock<S>> blocks;
  Linear<S> pred_head;

  UpstreamModel() = default;
  UpstreamModel(const UpstreamConfig& c, uint64_t seed) : cfg(c) {
    Rng rng(seed, "upstream.init");
    proj = Linear<S>("upstream.proj", cfg.feat_dim, cfg.d_model, rng);
    Tensor<S> emb({cfg.d_model});
    xavier_uniform(emb, cfg.d_model, cfg.d_model, rng);
    mask_embedding = Parameter<S>("upstream.mask_embedding", std::move(emb));
    for (int i = 0; i < cfg.n_blocks; ++i)
      blocks.emplace_back("upstream.block" + std::to_string(i), cfg.d_model, cfg.heads,
                          cfg.ffn_dim, rng);
    pred_head = Linear<S>("upstream.pred_head", cfg.d_model, cfg.num_clusters, rng);
  }

  // All parameters, fixed order. Includes the prediction head.
  ParamRefs<S> params() {
    ParamRefs<S> out;
    proj.collect(out);
    out.push_back(&mask_embedding);
    for (auto& b : blocks) b.collect(out);
    pred_head.collect(out);
    return out;
  }

  struct ForwardCache {
    typename Linear<S>::Cache proj_c;
    std::vector<uint8_t> mask;
    std::vector<typename TransformerBlock<S>::Cache> block_c;
    Tensor<S> hidden;  // T x d_model, final block output
  };

  // Shared forward pass. With a mask, masked rows are replaced by the mask
  // embedding right after projection, before positions are added.
  Tensor<S> forward_hidden(const FeatureSequence& features,
                           const std::vector<uint8_t>* mask, ForwardCache& cache) const {
    if (features.dim() != cfg.feat_dim)
      throw ShapeError("upstream: feature dim " + std::to_string(features.dim()) +
                       " != configured " + std::to_string(cfg.feat_dim));
    Tensor<S> x = proj.forward(features.data.template cast<S>(), cache.proj_c);
    if (mask) {
      cache.mask = *mask;
      x = apply_mask(x, *mask, mask_embedding.value);
    }
    axpy(x, S(1), sinusoidal_positions<S>(x.rows(), x.cols()));
    cache.block_c.resize(blocks.size());
    for (size_t i = 0; i < blocks.size(); ++i)
      x = blocks[i].forward(x, cache.block_c[i]);
    cache.hidden = x;
    return x;
  }

  // Backward through blocks, positions, masking, and projection.
  void backward_hidden(const Tensor<S>& dhidden, const ForwardCache& cache) {
    Tensor<S> d = dhidden;
    for (size_t i = blocks.size(); i-- > 0;)
      d = blocks[i].backward(d, cache.block_c[i]);
    // Positions are constant. Masked rows took the embedding instead of the
    // projection, so their gradient flows to the embedding only.
    if (!cache.mask.empty()) {
      for (int64_t t = 0; t < d.rows(); ++t)
        if (cache.mask[static_cast<size_t>(t)]) {
          for (int64_t j = 0; j < d.cols(); ++j) {
            mask_embedding.grad[j] += d.at(t, j);
            d.at(t, j) = S(0);
          }
        }
    }
    proj.backward(d, cache.proj_c);
  }
};

// Frame representations with masking disabled and the prediction head
// skipped: the downstream-facing surface of the model.
template <class S>
FeatureSequence extract(const UpstreamModel<S>& model, const FeatureSequence& features) {
  typename UpstreamModel<S>::ForwardCache cache;
  Tensor<S> h = model.forward_hidden(features, nullptr, cache);
  FeatureSequence out;
  out.frame_shift_ms = features.frame_shift_ms;
  out.frame_length_ms = features.frame_length_ms;
  out.data = h.template cast<float>();
  require_finite(out.data, "upstream representations");
  return out;
}

// One masked-prediction example: forward, mean cross-entropy over masked
// frames only, backward into all parameter gradients (accumulating, scaled by
// grad_scale). An empty sampled mask is re-sampled with seed+1.
template <class S>
S pretrain_step(UpstreamModel<S>& model, const FeatureSequence& features,
                const std::vector<int>& targets, const MaskSpec& spec,
                double grad_scale = 1.0) {
  const int64_t t_len = features.num_frames();
  if (t_len == 0) throw EmptyInputError("pretrain_step: empty feature sequence");
  if (static_cast<int64_t>(targets.size()) != t_len)
    throw ShapeError("pretrain_step: target length != frame count");
  if (spec.start_prob <= 0.0)
    throw DegenerateInputError("pretrain_step: start_prob must be > 0");

  MaskSpec s = spec;
  std::vector<uint8_t> mask = sample_mask(t_len, s);
  while (std::none_of(mask.begin(), mask.end(), [](uint8_t m) { return m != 0; })) {
    s.seed += 1;
    mask = sample_mask(t_len, s);
  }
  std::vector<int64_t> masked_rows;
  for (int64_t t = 0; t < t_len; ++t)
    if (mask[static_cast<size_t>(t)]) masked_rows.push_back(t);

  typename UpstreamModel<S>::ForwardCache cache;
  Tensor<S> hidden = model.forward_hidden(features, &mask, cache);
  typename Linear<S>::Cache head_c;
  Tensor<S> logits = model.pred_head.forward(hidden, head_c);

  Tensor<S> dlogits;
  S loss = cross_entropy_rows(logits, targets, masked_rows, &dlogits);
  if (!std::isfinite(static_cast<double>(loss)))
    throw NumericError("pretrain_step: non-finite loss");

  if (grad_scale != 1.0)
    for (auto& g : dlogits.v) g = static_cast<S>(static_cast<double>(g) * grad_scale);
  Tensor<S> dhidden = model.pred_head.backward(dlogits, head_c);
  model.backward_hidden(dhidden, cache);
  return loss;
}

// Masked-frame prediction accuracy under a given mask seed; used by the
// pretraining sanity checks.
template <class S>
double masked_prediction_accuracy(UpstreamModel<S>& model, const FeatureSequence& features,
                                  const std::vector<int>& targets, const MaskSpec& spec,
                                  int64_t* correct_out = nullptr,
                                  int64_t* total_out = nullptr) {
  const int64_t t_len = features.num_frames();
  MaskSpec s = spec;
  std::vector<uint8_t> mask = sample_mask(t_len, s);
  while (std::none_of(mask.begin(), mask.end(), [](uint8_t m) { return m != 0; })) {
    s.seed += 1;
    mask = sample_mask(t_len, s);
  }
  typename UpstreamModel<S>::ForwardCache cache;
  Tensor<S> hidden = model.forward_hidden(features, &mask, cache);
  typename Linear<S>::Cache head_c;
  Tensor<S> logits = model.pred_head.forward(hidden, head_c);

  int64_t correct = 0, total = 0;
  for (int64_t t = 0; t < t_len; ++t) {
    if (!mask[static_cast<size_t>(t)]) continue;
    int64_t best = 0;
    for (int64_t j = 1; j < logits.cols(); ++j)
      if (logits.at(t, j) > logits.at(t, best)) best = j;
    if (best == targets[static_cast<size_t>(t)]) ++correct;
    ++total;
  }
  if (correct_out) *correct_out += correct;
  if (total_out) *total_out += total;
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace speck
