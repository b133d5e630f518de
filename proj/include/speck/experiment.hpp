#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "speck/config.hpp"
#include "speck/downstream.hpp"
#include "speck/error.hpp"
#include "speck/eval.hpp"
#include "speck/features.hpp"
#include "speck/kmeans.hpp"
#include "speck/manifest.hpp"
#include "speck/synth.hpp"
#include "speck/train.hpp"
#include "speck/upstream.hpp"

namespace speck {

// One metric cell bound for curves.csv.
struct CurveRow {
  std::string task;
  int fold = 0;
  int n_per_class = 0;
  double duration_s = 0.0;
  std::string metric_name;
  double value = 0.0;
  uint64_t seed = 0;
};

namespace detail {

inline std::string fmt_sig6(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace detail

inline std::vector<CurveRow> rows_from_reports(const std::vector<EvalReport>& reports) {
  std::vector<CurveRow> rows;
  for (const auto& r : reports) {
    for (const auto& [d, v] : r.eer_by_duration)
      rows.push_back({r.task_name, r.fold, r.n_per_class, d, "eer", v, r.seed});
    if (r.weighted_acc)
      rows.push_back({r.task_name, r.fold, r.n_per_class, 0.0, "weighted_accuracy",
                      *r.weighted_acc, r.seed});
  }
  return rows;
}

// Flat CSV with a fixed header. Rows are sorted by (task, n_per_class,
// duration_s, fold) so emission order never depends on input order; values
// carry 6 significant digits.
inline void emit_report(const std::vector<EvalReport>& reports, const std::string& out) {
  if (reports.empty()) throw EmptyInputError("emit_report: no reports");
  std::vector<CurveRow> rows = rows_from_reports(reports);
  std::stable_sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) {
    if (a.task != b.task) return a.task < b.task;
    if (a.n_per_class != b.n_per_class) return a.n_per_class < b.n_per_class;
    if (a.duration_s != b.duration_s) return a.duration_s < b.duration_s;
    if (a.fold != b.fold) return a.fold < b.fold;
    return a.metric_name < b.metric_name;
  });
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw IoError("cannot write report: " + out);
  f << "task,fold,n_per_class,duration_s,metric_name,value,seed\n";
  for (const auto& r : rows)
    f << r.task << "," << r.fold << "," << r.n_per_class << ","
      << detail::fmt_sig6(r.duration_s) << "," << r.metric_name << ","
      << detail::fmt_sig6(r.value) << "," << r.seed << "\n";
  if (!f) throw IoError("short write: " + out);
}

inline std::vector<CurveRow> parse_curves_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curves file: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "task,fold,n_per_class,duration_s,metric_name,value,seed")
    throw DataError("unexpected curves header in " + path);
  std::vector<CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t pos = 0;
    while (true) {
      size_t comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 7) throw DataError("bad curves row: " + line);
    CurveRow r;
    r.task = cells[0];
    r.fold = std::stoi(cells[1]);
    r.n_per_class = std::stoi(cells[2]);
    r.duration_s = std::stod(cells[3]);
    r.metric_name = cells[4];
    r.value = std::stod(cells[5]);
    r.seed = std::stoull(cells[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment stages. Everything below writes only inside cfg.out_dir.

// Feature store: logmel (and lazily mfcc) per utterance, keyed by utt_id.
class FeatureStore {
 public:
  FeatureStore(const Manifest& manifest, int n_mels, int n_mfcc)
      : manifest_(manifest), n_mels_(n_mels), n_mfcc_(n_mfcc) {}

  Waveform audio(const UtteranceRecord& r) const { return read_wav(manifest_.resolve(r)); }

  const FeatureSequence& logmel_of(const UtteranceRecord& r) {
    auto it = logmel_.find(r.utt_id);
    if (it != logmel_.end()) return it->second;
    return logmel_.emplace(r.utt_id, logmel(audio(r), n_mels_)).first->second;
  }

  const FeatureSequence& mfcc_of(const UtteranceRecord& r) {
    auto it = mfcc_.find(r.utt_id);
    if (it != mfcc_.end()) return it->second;
    return mfcc_.emplace(r.utt_id, mfcc(audio(r), n_mfcc_, n_mels_)).first->second;
  }

  TaskDataset dataset(const std::vector<UtteranceRecord>& records) {
    TaskDataset ds;
    ds.records = records;
    for (const auto& r : records) ds.feats.push_back(logmel_of(r));
    return ds;
  }

 private:
  const Manifest& manifest_;
  int n_mels_;
  int n_mfcc_;
  std::map<std::string, FeatureSequence> logmel_;
  std::map<std::string, FeatureSequence> mfcc_;
};

// Stage 1: corpus on disk (synthesized if configured and absent).
inline Manifest stage_corpus(const ExperimentConfig& cfg) {
  if (!cfg.manifest_path.empty()) return read_manifest(cfg.manifest_path);
  if (!cfg.synth_enabled)
    throw ConfigError("no manifest given and synthesis is disabled");
  SynthSpec spec = cfg.synth;
  spec.seed = cfg.seed ^ fnv1a64("synth");
  const std::string corpus_dir =
      (std::filesystem::path(cfg.out_dir) / "corpus").string();
  const std::string manifest_path =
      (std::filesystem::path(corpus_dir) / "manifest.jsonl").string();
  if (std::filesystem::exists(manifest_path)) return read_manifest(manifest_path);
  return generate_corpus(spec, corpus_dir);
}

// Stage 2: cluster targets. Frames are pooled over the corpus (seeded cap)
// and a codebook fit on MFCCs.
inline Codebook stage_codebook(const ExperimentConfig& cfg, const Manifest& manifest,
                               FeatureStore& store) {
  std::vector<FeatureSequence> seqs;
  for (const auto& r : manifest.records) seqs.push_back(store.mfcc_of(r));
  Tensor<float> frames = stack_frames(seqs);
  if (frames.rows() > cfg.kmeans_max_frames) {
    Rng rng(cfg.seed, "kmeans.subsample");
    std::vector<int64_t> idx(static_cast<size_t>(frames.rows()));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int64_t>(i);
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(cfg.kmeans_max_frames));
    std::sort(idx.begin(), idx.end());
    Tensor<float> sub({cfg.kmeans_max_frames, frames.cols()});
    for (size_t i = 0; i < idx.size(); ++i)
      std::copy_n(frames.v.begin() + idx[i] * frames.cols(), frames.cols(),
                  sub.v.begin() + static_cast<int64_t>(i) * frames.cols());
    frames = std::move(sub);
  }
  return kmeans_fit(frames, cfg.kmeans_k, cfg.seed ^ fnv1a64("kmeans"),
                    cfg.kmeans_max_iters);
}

// Stage 3: masked-prediction pretraining over the whole corpus.
inline UpstreamModel<float> stage_pretrain(const ExperimentConfig& cfg,
                                           const Manifest& manifest, FeatureStore& store,
                                           const Codebook& codebook,
                                           std::vector<double>* losses = nullptr) {
  UpstreamConfig mc = cfg.model;
  mc.feat_dim = cfg.n_mels;
  mc.num_clusters = static_cast<int64_t>(codebook.k());
  UpstreamModel<float> model(mc, cfg.seed ^ fnv1a64("upstream.init"));

  std::vector<FeatureSequence> feats;
  std::vector<std::vector<int>> targets;
  for (const auto& r : manifest.records) {
    const FeatureSequence& lm = store.logmel_of(r);
    feats.push_back(lm);
    targets.push_back(kmeans_assign(store.mfcc_of(r), codebook));
  }
  PretrainConfig pc = cfg.pretrain;
  pc.mask = cfg.mask;
  pc.seed = cfg.seed ^ fnv1a64("pretrain");
  std::vector<double> curve = pretrain_run(model, feats, targets, pc);
  if (losses) *losses = std::move(curve);
  return model;
}

// Applies the configured averaging recipe to a finished run and returns the
// checkpoint to evaluate. Averaged checkpoints get their dev metric
// recomputed by the caller-supplied evaluator, since averaging invalidates
// the stored one.
inline Checkpoint apply_recipe(const ExperimentConfig& cfg, const CheckpointStore& store,
                               const std::function<double(const Checkpoint&)>& dev_eval) {
  if (store.checkpoints.empty()) throw EmptyInputError("apply_recipe: empty store");
  switch (cfg.recipe) {
    case AveragingRecipe::kNone:
      return select_top_k(store, 1).front();
    case AveragingRecipe::kTopK: {
      Checkpoint avg = average_checkpoints(select_top_k(store, cfg.average_top_k));
      avg.dev_metric = dev_eval(avg);
      return avg;
    }
    case AveragingRecipe::kBestPlusStep: {
      Checkpoint avg =
          average_checkpoints(select_best_plus_step(store, cfg.average_step));
      avg.dev_metric = dev_eval(avg);
      return avg;
    }
  }
  throw ConfigError("apply_recipe: unknown recipe");
}

struct FoldOutcome {
  EvalReport report;
  Checkpoint final_checkpoint;
};

// Stage 4 for one (fold, n_per_class) cell: subsample, split off dev, train,
// apply the averaging recipe, evaluate on the held-out groups.
inline FoldOutcome run_fold(const ExperimentConfig& cfg, const Manifest& manifest,
                            FeatureStore& store, UpstreamModel<float>& pretrained,
                            const std::vector<std::string>& labels,
                            const FoldPlan& plan, int fold, int n_per_class) {
  const auto& [train_groups, test_groups] = plan.folds[static_cast<size_t>(fold)];
  std::vector<UtteranceRecord> fold_train = filter_by_groups(manifest.records, train_groups);
  std::vector<UtteranceRecord> fold_test = filter_by_groups(manifest.records, test_groups);

  const uint64_t cell_seed =
      cfg.seed ^ fnv1a64("fold/" + std::to_string(fold) + "/n/" + std::to_string(n_per_class));
  if (n_per_class > 0)
    fold_train = subsample_per_class(fold_train, n_per_class, cell_seed);
  auto [train_records, dev_records] = dev_split(fold_train, cfg.dev_fraction, cell_seed);
  if (dev_records.empty()) {
    // A dev set is required for checkpoint selection; carve one utterance per
    // label if the fraction rounded to zero.
    dev_records.clear();
    std::map<std::string, bool> taken;
    std::vector<UtteranceRecord> rest;
    for (const auto& r : train_records) {
      if (!taken[r.label]) {
        taken[r.label] = true;
        dev_records.push_back(r);
      } else {
        rest.push_back(r);
      }
    }
    train_records = std::move(rest);
  }

  // Finetuning owns a private copy of the upstream; frozen shares it.
  UpstreamModel<float> private_upstream;
  UpstreamModel<float>* upstream = &pretrained;
  if (cfg.train.mode == TrainMode::kFinetune) {
    private_upstream = pretrained;
    upstream = &private_upstream;
  }

  ClassifierHead<float> head(cfg.task_name, labels, cfg.model.d_model,
                             cell_seed ^ fnv1a64("head.init"));
  TaskDataset train_ds = store.dataset(train_records);
  TaskDataset dev_ds = store.dataset(dev_records);

  TrainConfig tc = cfg.train;
  tc.seed = cell_seed ^ fnv1a64("train");
  const std::string run_id =
      "fold" + std::to_string(fold) + "_n" + std::to_string(n_per_class);
  CheckpointStore ckpts =
      train(*upstream, head, train_ds, dev_ds, tc, cfg.fingerprint(), run_id);
  ckpts.save((std::filesystem::path(cfg.out_dir) / "checkpoints").string());

  auto dev_eval = [&](const Checkpoint& ck) {
    load_from_checkpoint(ck, *upstream, &head);
    std::vector<int> preds, dev_labels;
    for (size_t i = 0; i < dev_ds.size(); ++i) {
      FeatureSequence reps = extract(*upstream, dev_ds.feats[i]);
      std::vector<float> pooled = pool_mean(reps.data);
      preds.push_back(classify(pooled, head).argmax());
      dev_labels.push_back(head.label_index(dev_ds.records[i].label));
    }
    return weighted_accuracy(preds, dev_labels);
  };
  Checkpoint final_ck = apply_recipe(cfg, ckpts, dev_eval);
  load_from_checkpoint(final_ck, *upstream, &head);

  auto audio_of = [&](const UtteranceRecord& r) { return store.audio(r); };
  EvalReport report;
  if (cfg.metric == MetricKind::kEer) {
    report = duration_sliced_eval(*upstream, head, fold_test, cfg.durations, audio_of,
                                  cfg.n_mels, cfg.macro_eer);
  } else {
    report.task_name = cfg.task_name;
    const int64_t c = head.num_classes();
    report.confusion.assign(static_cast<size_t>(c),
                            std::vector<int64_t>(static_cast<size_t>(c), 0));
    std::vector<int> preds, truth;
    for (const auto& r : fold_test) {
      FeatureSequence reps = extract(*upstream, store.logmel_of(r));
      std::vector<float> pooled = pool_mean(reps.data);
      preds.push_back(classify(pooled, head).argmax());
      truth.push_back(head.label_index(r.label));
    }
    report.weighted_acc = weighted_accuracy(preds, truth);
    for (size_t i = 0; i < preds.size(); ++i)
      report.confusion[static_cast<size_t>(truth[i])][static_cast<size_t>(preds[i])]++;
  }
  report.dev_metric = final_ck.dev_metric;
  report.fold = fold;
  report.n_per_class = n_per_class;
  report.seed = cfg.seed;
  report.config_fingerprint = cfg.fingerprint();

  FoldOutcome out;
  out.report = std::move(report);
  out.final_checkpoint = std::move(final_ck);
  return out;
}

// The full recipe: corpus -> codebook -> pretrain -> per-fold training and
// evaluation (optionally repeated per sweep point) -> reports and curves.csv.
inline std::vector<EvalReport> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::create_directories(std::filesystem::path(cfg.out_dir) / "reports");

  Manifest manifest = stage_corpus(cfg);
  FeatureStore store(manifest, cfg.n_mels, cfg.n_mfcc);

  Codebook codebook = stage_codebook(cfg, manifest, store);
  {
    Checkpoint ck;
    ck.tensors.emplace_back("centroids", codebook.centroids);
    ck.config_fingerprint = cfg.fingerprint();
    save_checkpoint(ck, (std::filesystem::path(cfg.out_dir) / "codebook.ckpt").string());
  }

  UpstreamModel<float> upstream = stage_pretrain(cfg, manifest, store, codebook);
  {
    Checkpoint ck = snapshot(upstream, static_cast<ClassifierHead<float>*>(nullptr),
                             cfg.pretrain.steps, std::nullopt, cfg.fingerprint());
    save_checkpoint(ck, (std::filesystem::path(cfg.out_dir) / "upstream.ckpt").string());
  }

  const std::vector<std::string> labels = manifest.distinct_labels();
  FoldPlan plan = group_kfold(manifest, cfg.folds, "speaker", cfg.seed ^ fnv1a64("folds"));

  std::vector<int> sweep = cfg.sweep_n_per_class;
  if (sweep.empty()) sweep.push_back(0);

  std::vector<EvalReport> reports;
  for (int n : sweep) {
    for (int f = 0; f < cfg.folds; ++f) {
      FoldOutcome out = run_fold(cfg, manifest, store, upstream, labels, plan, f, n);
      const std::string name =
          cfg.task_name + "_fold" + std::to_string(f) + "_n" + std::to_string(n) + ".json";
      std::ofstream rf(std::filesystem::path(cfg.out_dir) / "reports" / name);
      rf << out.report.to_json().dump(2) << "\n";
      reports.push_back(std::move(out.report));
    }
  }
  emit_report(reports, (std::filesystem::path(cfg.out_dir) / "curves.csv").string());
  return reports;
}

}  // namespace speck
