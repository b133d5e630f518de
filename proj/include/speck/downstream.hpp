#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "speck/error.hpp"
#include "speck/features.hpp"
#include "speck/nn.hpp"
#include "speck/upstream.hpp"
#include "speck/wav.hpp"

namespace speck {

// Temporal average pooling: one vector per utterance.
template <class S>
std::vector<S> pool_mean(const Tensor<S>& reps) {
  const int64_t t_len = reps.rows(), d = reps.cols();
  if (t_len < 1) throw EmptyInputError("pool_mean: empty sequence");
  std::vector<S> out(static_cast<size_t>(d), S(0));
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t j = 0; j < d; ++j) out[static_cast<size_t>(j)] += reps.at(t, j);
  for (auto& x : out) x = static_cast<S>(static_cast<double>(x) / static_cast<double>(t_len));
  return out;
}

// The task-dependent half of the pipeline: a linear layer over the pooled
// representation, one head per task.
template <class S>
struct ClassifierHead {
  std::string task_name;
  std::vector<std::string> label_set;  // order fixed at creation
  Linear<S> lin;

  ClassifierHead() = default;
  ClassifierHead(std::string task, std::vector<std::string> labels, int64_t d_model,
                 uint64_t seed)
      : task_name(std::move(task)), label_set(std::move(labels)) {
    if (label_set.size() < 2)
      throw DataError("classifier head needs at least 2 labels");
    Rng rng(seed, "head.init/" + task_name);
    lin = Linear<S>("head." + task_name, d_model,
                    static_cast<int64_t>(label_set.size()), rng);
  }

  int64_t num_classes() const { return static_cast<int64_t>(label_set.size()); }

  ParamRefs<S> params() {
    ParamRefs<S> out;
    lin.collect(out);
    return out;
  }

  int label_index(const std::string& label) const {
    for (size_t i = 0; i < label_set.size(); ++i)
      if (label_set[i] == label) return static_cast<int>(i);
    throw LabelMismatchError("label not in head's label set: " + label);
  }
};

struct Posteriors {
  std::vector<float> probs;
  std::vector<float> log_probs;

  int argmax() const {
    int best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[best]) best = static_cast<int>(i);
    return best;
  }
};

// logits = W pooled + b; returns softmax posteriors and log posteriors (the
// latter feed detection trials).
template <class S>
Posteriors classify(const std::vector<S>& pooled, const ClassifierHead<S>& head) {
  if (static_cast<int64_t>(pooled.size()) != head.lin.in_dim())
    throw ShapeError("classify: pooled dim does not match head");
  const int64_t c = head.num_classes();
  std::vector<double> logits(static_cast<size_t>(c), 0.0);
  for (int64_t i = 0; i < c; ++i) {
    double acc = static_cast<double>(head.lin.b.value[i]);
    for (int64_t j = 0; j < head.lin.in_dim(); ++j)
      acc += static_cast<double>(head.lin.w.value.at(i, j)) *
             static_cast<double>(pooled[static_cast<size_t>(j)]);
    logits[static_cast<size_t>(i)] = acc;
  }
  double m = logits[0];
  for (double x : logits) m = std::max(m, x);
  double denom = 0.0;
  for (double x : logits) denom += std::exp(x - m);
  const double log_denom = std::log(denom) + m;

  Posteriors out;
  out.probs.resize(static_cast<size_t>(c));
  out.log_probs.resize(static_cast<size_t>(c));
  for (int64_t i = 0; i < c; ++i) {
    out.log_probs[static_cast<size_t>(i)] = static_cast<float>(logits[static_cast<size_t>(i)] - log_denom);
    out.probs[static_cast<size_t>(i)] = static_cast<float>(std::exp(logits[static_cast<size_t>(i)] - log_denom));
  }
  return out;
}

// Full Figure-style path: features -> representations -> pooling -> head.
template <class S>
Posteriors score_utterance(const UpstreamModel<S>& upstream, const ClassifierHead<S>& head,
                           const Waveform& w, int n_mels = 40) {
  FeatureSequence feats = logmel(w, n_mels);
  FeatureSequence reps = extract(upstream, feats);
  std::vector<float> pooled = pool_mean(reps.data);
  std::vector<S> pooled_s(pooled.begin(), pooled.end());
  return classify(pooled_s, head);
}

}  // namespace speck
