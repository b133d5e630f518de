#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "speck/downstream.hpp"
#include "speck/error.hpp"
#include "speck/manifest.hpp"
#include "speck/rng.hpp"
#include "speck/tensor.hpp"
#include "speck/upstream.hpp"
#include "speck/wav.hpp"

namespace speck {

// Detection trials: a score per trial plus whether the trial is a target.
struct TrialSet {
  std::vector<double> scores;
  std::vector<uint8_t> is_target;

  void add(double score, bool target) {
    scores.push_back(score);
    is_target.push_back(target ? 1 : 0);
  }
};

// Equal error rate under the decision rule "accept iff score >= theta".
// Thresholds sweep the distinct scores from above the maximum downward;
// FAR rises from 0 while FRR falls to 0, and the EER is read off where
// FAR - FRR changes sign, linearly interpolating between the two adjacent
// operating points.
inline double eer(const TrialSet& trials) {
  const size_t n = trials.scores.size();
  if (n == 0 || n != trials.is_target.size())
    throw DegenerateTrialSetError("eer: empty or inconsistent trial set");
  int64_t n_target = 0, n_nontarget = 0;
  for (uint8_t t : trials.is_target) (t ? n_target : n_nontarget)++;
  if (n_target == 0 || n_nontarget == 0)
    throw DegenerateTrialSetError("eer: need at least one target and one nontarget");

  // Sort scores descending, remember target flags.
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return trials.scores[a] > trials.scores[b];
  });

  // Operating points at theta = +inf and at theta = each distinct score.
  double prev_far = 0.0, prev_frr = 1.0;
  int64_t acc_t = 0, acc_n = 0;
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && trials.scores[order[j]] == trials.scores[order[i]]) {
      (trials.is_target[order[j]] ? acc_t : acc_n)++;
      ++j;
    }
    const double far = static_cast<double>(acc_n) / static_cast<double>(n_nontarget);
    const double frr = 1.0 - static_cast<double>(acc_t) / static_cast<double>(n_target);
    if (far >= frr) {
      if (far == frr) return far;
      // Sign change between (prev_far, prev_frr) and (far, frr).
      const double num = prev_frr - prev_far;
      const double den = (far - prev_far) - (frr - prev_frr);
      const double t = den != 0.0 ? num / den : 0.0;
      return prev_far + t * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
    i = j;
  }
  // FAR never reached FRR within the sweep; the crossing sits at the final
  // point (all trials accepted: FAR = 1, FRR = 0 cannot be below FAR).
  return prev_far;
}

// One trial per (utterance, hypothesized class): N x C pooled trials, scored
// with the log posterior of the hypothesized class.
inline TrialSet closed_set_trials(const Tensor<float>& log_scores,
                                  const std::vector<int>& true_labels) {
  const int64_t n = log_scores.rows(), c = log_scores.cols();
  if (static_cast<int64_t>(true_labels.size()) != n)
    throw ShapeError("closed_set_trials: label count mismatch");
  TrialSet out;
  out.scores.reserve(static_cast<size_t>(n * c));
  for (int64_t i = 0; i < n; ++i) {
    if (true_labels[static_cast<size_t>(i)] < 0 || true_labels[static_cast<size_t>(i)] >= c)
      throw OutOfRangeError("closed_set_trials: label out of range");
    for (int64_t j = 0; j < c; ++j)
      out.add(log_scores.at(i, j), j == true_labels[static_cast<size_t>(i)]);
  }
  return out;
}

// Per-class one-vs-rest EERs averaged; the non-default alternative to pooled
// trials.
inline double eer_macro(const Tensor<float>& log_scores, const std::vector<int>& true_labels) {
  const int64_t c = log_scores.cols();
  double acc = 0.0;
  for (int64_t cls = 0; cls < c; ++cls) {
    TrialSet per;
    for (int64_t i = 0; i < log_scores.rows(); ++i)
      per.add(log_scores.at(i, cls), true_labels[static_cast<size_t>(i)] == cls);
    acc += eer(per);
  }
  return acc / static_cast<double>(c);
}

// Fraction of utterances classified correctly.
inline double weighted_accuracy(const std::vector<int>& predictions,
                                const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw ShapeError("weighted_accuracy: length mismatch");
  if (predictions.empty()) throw EmptyInputError("weighted_accuracy: no predictions");
  int64_t correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

// Group-disjoint cross-validation plan.
struct FoldPlan {
  int k = 0;
  std::string group_key;  // "speaker" or "session"
  // per fold: train group ids, test group ids
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> folds;
};

// Shuffles the distinct groups by seed and partitions them into k near-equal
// test sets; fold i trains on every other group.
inline FoldPlan group_kfold(const Manifest& records, int k,
                            const std::string& group_key, uint64_t seed) {
  std::vector<std::string> groups = records.distinct_groups();
  if (static_cast<int>(groups.size()) < k)
    throw TooFewGroupsError("group_kfold: " + std::to_string(groups.size()) +
                            " groups for k=" + std::to_string(k));
  if (k < 2) throw RangeError("group_kfold: k must be >= 2");
  Rng rng(seed, "group_kfold");
  rng.shuffle(groups);

  FoldPlan plan;
  plan.k = k;
  plan.group_key = group_key;
  const int64_t n = static_cast<int64_t>(groups.size());
  int64_t start = 0;
  for (int f = 0; f < k; ++f) {
    const int64_t count = n / k + (f < n % k ? 1 : 0);
    std::vector<std::string> test(groups.begin() + start, groups.begin() + start + count);
    std::vector<std::string> train;
    for (int64_t i = 0; i < n; ++i)
      if (i < start || i >= start + count) train.push_back(groups[static_cast<size_t>(i)]);
    plan.folds.emplace_back(std::move(train), std::move(test));
    start += count;
  }
  return plan;
}

inline std::vector<UtteranceRecord> filter_by_groups(
    const std::vector<UtteranceRecord>& records, const std::vector<std::string>& groups) {
  std::set<std::string> keep(groups.begin(), groups.end());
  std::vector<UtteranceRecord> out;
  for (const auto& r : records)
    if (keep.count(r.group_id)) out.push_back(r);
  return out;
}

// Label-stratified dev extraction: round(fraction * n_label) records per
// label go to dev, the remainder stays in train.
inline std::pair<std::vector<UtteranceRecord>, std::vector<UtteranceRecord>> dev_split(
    const std::vector<UtteranceRecord>& train_records, double fraction, uint64_t seed) {
  if (fraction < 0.0 || fraction >= 1.0)
    throw RangeError("dev_split: fraction must be in [0, 1)");
  std::map<std::string, std::vector<size_t>> by_label;
  for (size_t i = 0; i < train_records.size(); ++i)
    by_label[train_records[i].label].push_back(i);

  std::set<size_t> dev_idx;
  Rng rng(seed, "dev_split");
  for (auto& [label, idx] : by_label) {
    const auto n_dev = static_cast<int64_t>(std::llround(fraction * static_cast<double>(idx.size())));
    rng.shuffle(idx);
    for (int64_t i = 0; i < n_dev; ++i) dev_idx.insert(idx[static_cast<size_t>(i)]);
  }
  std::vector<UtteranceRecord> train, dev;
  for (size_t i = 0; i < train_records.size(); ++i)
    (dev_idx.count(i) ? dev : train).push_back(train_records[i]);
  return {train, dev};
}

// Seeded uniform sample of min(n_per_class, class size) records per class.
inline std::vector<UtteranceRecord> subsample_per_class(
    const std::vector<UtteranceRecord>& records, int n_per_class, uint64_t seed) {
  if (n_per_class < 1) throw RangeError("subsample_per_class: n_per_class must be >= 1");
  std::map<std::string, std::vector<size_t>> by_label;
  for (size_t i = 0; i < records.size(); ++i) by_label[records[i].label].push_back(i);

  Rng rng(seed, "subsample_per_class");
  std::set<size_t> keep;
  for (auto& [label, idx] : by_label) {
    rng.shuffle(idx);
    const size_t n = std::min(static_cast<size_t>(n_per_class), idx.size());
    for (size_t i = 0; i < n; ++i) keep.insert(idx[i]);
  }
  std::vector<UtteranceRecord> out;
  for (size_t i = 0; i < records.size(); ++i)
    if (keep.count(i)) out.push_back(records[i]);
  return out;
}

// Evaluation outcome for one (task, fold, n_per_class, seed) cell.
struct EvalReport {
  std::string task_name;
  std::map<double, double> eer_by_duration;
  std::optional<double> weighted_acc;
  std::optional<double> dev_metric;
  std::vector<std::vector<int64_t>> confusion;  // C x C, rows = truth
  int64_t n_trials = 0;
  int64_t n_target_trials = 0;
  uint64_t config_fingerprint = 0;
  int fold = 0;
  int n_per_class = 0;  // 0 = full training data
  uint64_t seed = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task_name;
    j["fold"] = fold;
    j["n_per_class"] = n_per_class;
    j["seed"] = seed;
    nlohmann::ordered_json eers = nlohmann::ordered_json::object();
    for (const auto& [d, v] : eer_by_duration) eers[std::to_string(d)] = v;
    j["eer_by_duration"] = eers;
    if (weighted_acc)
      j["weighted_accuracy"] = *weighted_acc;
    else
      j["weighted_accuracy"] = nullptr;
    if (dev_metric)
      j["dev_metric"] = *dev_metric;
    else
      j["dev_metric"] = nullptr;
    j["confusion"] = confusion;
    j["n_trials"] = n_trials;
    j["n_target_trials"] = n_target_trials;
    j["config_fingerprint"] = detail::fingerprint_hex(config_fingerprint);
    return j;
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport r;
    r.task_name = j.at("task").get<std::string>();
    r.fold = j.at("fold").get<int>();
    r.n_per_class = j.at("n_per_class").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    for (const auto& [k, v] : j.at("eer_by_duration").items())
      r.eer_by_duration[std::stod(k)] = v.get<double>();
    if (!j.at("weighted_accuracy").is_null())
      r.weighted_acc = j.at("weighted_accuracy").get<double>();
    if (j.contains("dev_metric") && !j.at("dev_metric").is_null())
      r.dev_metric = j.at("dev_metric").get<double>();
    r.confusion = j.at("confusion").get<std::vector<std::vector<int64_t>>>();
    r.n_trials = j.at("n_trials").get<int64_t>();
    r.n_target_trials = j.at("n_target_trials").get<int64_t>();
    r.config_fingerprint =
        detail::fingerprint_from_hex(j.at("config_fingerprint").get<std::string>());
    return r;
  }
};

// Scores every test utterance at each duration (center crop) and reports one
// pooled EER per duration; the confusion matrix is taken at full duration.
template <class S>
EvalReport duration_sliced_eval(
    const UpstreamModel<S>& upstream, const ClassifierHead<S>& head,
    const std::vector<UtteranceRecord>& test_records,
    const std::vector<double>& durations,
    const std::function<Waveform(const UtteranceRecord&)>& audio_of, int n_mels = 40,
    bool macro_average = false) {
  if (durations.empty()) throw EmptyInputError("duration_sliced_eval: no durations");
  if (test_records.empty()) throw EmptyInputError("duration_sliced_eval: no test records");

  const int64_t c = head.num_classes();
  EvalReport report;
  report.task_name = head.task_name;
  report.confusion.assign(static_cast<size_t>(c), std::vector<int64_t>(static_cast<size_t>(c), 0));

  std::vector<int> labels;
  labels.reserve(test_records.size());
  for (const auto& r : test_records) labels.push_back(head.label_index(r.label));

  for (double d : durations) {
    Tensor<float> log_scores({static_cast<int64_t>(test_records.size()), c});
    for (size_t i = 0; i < test_records.size(); ++i) {
      Waveform w = crop_duration(audio_of(test_records[i]), d, CropMode::kCenter);
      Posteriors post = score_utterance(upstream, head, w, n_mels);
      for (int64_t j = 0; j < c; ++j)
        log_scores.at(static_cast<int64_t>(i), j) = post.log_probs[static_cast<size_t>(j)];
    }
    if (macro_average) {
      report.eer_by_duration[d] = eer_macro(log_scores, labels);
    } else {
      TrialSet trials = closed_set_trials(log_scores, labels);
      report.eer_by_duration[d] = eer(trials);
      report.n_trials = static_cast<int64_t>(trials.scores.size());
      report.n_target_trials = 0;
      for (uint8_t t : trials.is_target) report.n_target_trials += t;
    }
  }

  // Confusion at native length.
  std::vector<int> predictions;
  predictions.reserve(test_records.size());
  for (const auto& r : test_records) {
    Posteriors post = score_utterance(upstream, head, audio_of(r), n_mels);
    predictions.push_back(post.argmax());
  }
  for (size_t i = 0; i < predictions.size(); ++i)
    report.confusion[static_cast<size_t>(labels[i])][static_cast<size_t>(predictions[i])]++;
  return report;
}

}  // namespace speck
