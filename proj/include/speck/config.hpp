#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/rng.hpp"
#include "speck/synth.hpp"
#include "speck/toml.hpp"
#include "speck/train.hpp"
#include "speck/upstream.hpp"

namespace speck {

enum class MetricKind { kEer, kWeightedAccuracy };
enum class AveragingRecipe { kNone, kTopK, kBestPlusStep };

// Everything an experiment needs, fully defaulted. Unknown keys in a config
// file are hard errors.
struct ExperimentConfig {
  uint64_t seed = 42;
  std::string out_dir = "runs/default";

  // [task]
  std::string task_name = "synthetic";
  MetricKind metric = MetricKind::kWeightedAccuracy;
  std::string manifest_path;  // empty: synthesize a corpus
  bool macro_eer = false;

  // [synth]
  bool synth_enabled = true;
  SynthSpec synth;

  // [features]
  int n_mels = 40;
  int n_mfcc = 13;

  // [kmeans]
  int kmeans_k = 50;
  int kmeans_max_iters = 50;
  int64_t kmeans_max_frames = 20000;

  // [model]
  UpstreamConfig model;

  // [mask]
  MaskSpec mask;

  // [pretrain]
  PretrainConfig pretrain;

  // [train]
  TrainConfig train;

  // [eval]
  std::vector<double> durations = {3.0, 10.0, 30.0};
  int folds = 5;
  double dev_fraction = 0.12;

  // [average]
  AveragingRecipe recipe = AveragingRecipe::kNone;
  int average_top_k = 5;
  int64_t average_step = 10000;

  // [sweep]; 0 means "all training data"
  std::vector<int> sweep_n_per_class;

  bool operator==(const ExperimentConfig& o) const {
    return to_toml_string() == o.to_toml_string();
  }

  std::string to_toml_string() const;
  uint64_t fingerprint() const;
  void validate() const;
};

namespace config_detail {

class DocReader {
 public:
  explicit DocReader(const TomlDoc& doc) : doc_(doc) {
    for (const auto& [section, kv] : doc.sections)
      for (const auto& [key, value] : kv) pending_.insert(section + "/" + key);
  }

  const TomlValue* get(const std::string& section, const std::string& key) {
    auto s = doc_.sections.find(section);
    if (s == doc_.sections.end()) return nullptr;
    auto v = s->second.find(key);
    if (v == s->second.end()) return nullptr;
    pending_.erase(section + "/" + key);
    return &v->second;
  }

  void expect_sections(const std::set<std::string>& known) const {
    for (const auto& [section, kv] : doc_.sections) {
      if (!known.count(section))
        throw UnknownKeyError("[" + section + "]");
      (void)kv;
    }
  }

  void expect_all_consumed() const {
    if (!pending_.empty()) throw UnknownKeyError(*pending_.begin());
  }

 private:
  const TomlDoc& doc_;
  std::set<std::string> pending_;
};

inline void read_int(DocReader& r, const std::string& sec, const std::string& key,
                     int& out) {
  if (const TomlValue* v = r.get(sec, key)) out = static_cast<int>(v->as_int());
}
inline void read_i64(DocReader& r, const std::string& sec, const std::string& key,
                     int64_t& out) {
  if (const TomlValue* v = r.get(sec, key)) out = v->as_int();
}
inline void read_u64(DocReader& r, const std::string& sec, const std::string& key,
                     uint64_t& out) {
  if (const TomlValue* v = r.get(sec, key)) out = static_cast<uint64_t>(v->as_int());
}
inline void read_double(DocReader& r, const std::string& sec, const std::string& key,
                        double& out) {
  if (const TomlValue* v = r.get(sec, key)) out = v->as_float();
}
inline void read_bool(DocReader& r, const std::string& sec, const std::string& key,
                      bool& out) {
  if (const TomlValue* v = r.get(sec, key)) out = v->as_bool();
}
inline void read_string(DocReader& r, const std::string& sec, const std::string& key,
                        std::string& out) {
  if (const TomlValue* v = r.get(sec, key)) out = v->as_string();
}

inline std::string fmt_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  std::string s = os.str();
  // Keep floats recognizably float-typed through a round-trip.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace config_detail

inline ExperimentConfig config_from_doc(const TomlDoc& doc) {
  using namespace config_detail;
  ExperimentConfig c;
  DocReader r(doc);
  r.expect_sections({"", "task", "synth", "features", "kmeans", "model", "mask",
                     "pretrain", "train", "eval", "average", "sweep"});

  read_u64(r, "", "seed", c.seed);
  read_string(r, "", "out_dir", c.out_dir);

  read_string(r, "task", "name", c.task_name);
  if (const TomlValue* v = r.get("task", "metric")) {
    const std::string& m = v->as_string();
    if (m == "eer")
      c.metric = MetricKind::kEer;
    else if (m == "weighted_accuracy")
      c.metric = MetricKind::kWeightedAccuracy;
    else
      throw RangeError("task.metric must be \"eer\" or \"weighted_accuracy\"");
  }
  read_string(r, "task", "manifest", c.manifest_path);
  read_bool(r, "task", "macro_eer", c.macro_eer);

  read_bool(r, "synth", "enabled", c.synth_enabled);
  read_int(r, "synth", "classes", c.synth.num_classes);
  read_int(r, "synth", "speakers", c.synth.num_speakers);
  read_int(r, "synth", "utterances_per_speaker_per_class",
           c.synth.utterances_per_speaker_per_class);
  read_double(r, "synth", "duration_s", c.synth.duration_s);
  read_int(r, "synth", "sample_rate", c.synth.sample_rate);
  read_double(r, "synth", "noise_floor_min", c.synth.noise_floor_min);
  read_double(r, "synth", "noise_floor_max", c.synth.noise_floor_max);

  read_int(r, "features", "n_mels", c.n_mels);
  read_int(r, "features", "n_mfcc", c.n_mfcc);

  read_int(r, "kmeans", "k", c.kmeans_k);
  read_int(r, "kmeans", "max_iters", c.kmeans_max_iters);
  read_i64(r, "kmeans", "max_frames", c.kmeans_max_frames);

  read_i64(r, "model", "d_model", c.model.d_model);
  read_int(r, "model", "blocks", c.model.n_blocks);
  read_int(r, "model", "heads", c.model.heads);
  read_i64(r, "model", "ffn", c.model.ffn_dim);

  read_double(r, "mask", "start_prob", c.mask.start_prob);
  read_int(r, "mask", "span_len", c.mask.span_len);

  read_i64(r, "pretrain", "steps", c.pretrain.steps);
  read_int(r, "pretrain", "batch_size", c.pretrain.batch_size);
  read_double(r, "pretrain", "lr", c.pretrain.lr);
  read_double(r, "pretrain", "grad_clip", c.pretrain.grad_clip);

  if (const TomlValue* v = r.get("train", "mode")) {
    const std::string& m = v->as_string();
    if (m == "frozen")
      c.train.mode = TrainMode::kFrozen;
    else if (m == "finetune")
      c.train.mode = TrainMode::kFinetune;
    else
      throw RangeError("train.mode must be \"frozen\" or \"finetune\"");
  }
  read_double(r, "train", "head_lr", c.train.head_lr);
  read_double(r, "train", "upstream_lr", c.train.upstream_lr);
  read_int(r, "train", "batch_size", c.train.batch_size);
  read_i64(r, "train", "max_steps", c.train.max_steps);
  read_i64(r, "train", "eval_every", c.train.eval_every_steps);
  read_int(r, "train", "patience", c.train.patience);
  read_double(r, "train", "grad_clip", c.train.grad_clip);

  if (const TomlValue* v = r.get("eval", "durations")) {
    c.durations.clear();
    for (const auto& e : v->as_array()) c.durations.push_back(e.as_float());
  }
  read_int(r, "eval", "folds", c.folds);
  read_double(r, "eval", "dev_fraction", c.dev_fraction);

  if (const TomlValue* v = r.get("average", "recipe")) {
    const std::string& m = v->as_string();
    if (m == "none")
      c.recipe = AveragingRecipe::kNone;
    else if (m == "top_k")
      c.recipe = AveragingRecipe::kTopK;
    else if (m == "best_plus_step")
      c.recipe = AveragingRecipe::kBestPlusStep;
    else
      throw RangeError("average.recipe must be \"none\", \"top_k\", or \"best_plus_step\"");
  }
  read_int(r, "average", "k", c.average_top_k);
  read_i64(r, "average", "step", c.average_step);

  if (const TomlValue* v = r.get("sweep", "n_per_class")) {
    c.sweep_n_per_class.clear();
    for (const auto& e : v->as_array())
      c.sweep_n_per_class.push_back(static_cast<int>(e.as_int()));
  }

  r.expect_all_consumed();
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  return config_from_doc(toml_parse(text));
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_string(buf.str());
}

inline void ExperimentConfig::validate() const {
  if (dev_fraction < 0.0 || dev_fraction >= 1.0)
    throw RangeError("eval.dev_fraction must be in [0, 1)");
  if (mask.start_prob < 0.0 || mask.start_prob > 1.0)
    throw RangeError("mask.start_prob must be in [0, 1]");
  if (mask.span_len < 1) throw RangeError("mask.span_len must be >= 1");
  if (n_mels < 1 || n_mfcc < 1) throw RangeError("feature dims must be positive");
  if (n_mfcc > n_mels) throw RangeError("features.n_mfcc cannot exceed n_mels");
  if (kmeans_k < 1 || kmeans_max_iters < 1 || kmeans_max_frames < 1)
    throw RangeError("kmeans settings must be positive");
  if (model.d_model < 1 || model.n_blocks < 1 || model.heads < 1 || model.ffn_dim < 1)
    throw RangeError("model dims must be positive");
  if (model.d_model % model.heads != 0)
    throw RangeError("model.d_model must be divisible by model.heads");
  if (pretrain.steps < 1 || pretrain.batch_size < 1 || pretrain.lr <= 0.0)
    throw RangeError("pretrain settings must be positive");
  if (train.head_lr <= 0.0 || train.upstream_lr <= 0.0)
    throw RangeError("train learning rates must be positive");
  if (train.batch_size < 1 || train.max_steps < 1 || train.eval_every_steps < 1 ||
      train.patience < 1)
    throw RangeError("train counts must be positive");
  if (folds < 2) throw RangeError("eval.folds must be >= 2");
  if (durations.empty()) throw RangeError("eval.durations must be non-empty");
  for (double d : durations)
    if (d <= 0.0) throw RangeError("eval.durations entries must be positive");
  if (average_top_k < 1) throw RangeError("average.k must be >= 1");
  if (average_step < 1) throw RangeError("average.step must be >= 1");
  for (int n : sweep_n_per_class)
    if (n < 0) throw RangeError("sweep.n_per_class entries must be >= 0");
  if (synth_enabled) {
    if (synth.num_classes < 2 || synth.num_speakers < 1 ||
        synth.utterances_per_speaker_per_class < 1)
      throw RangeError("synth counts must be positive (>= 2 classes)");
    if (synth.duration_s <= 0.0 || synth.sample_rate <= 0)
      throw RangeError("synth duration and sample rate must be positive");
    if (synth.num_speakers < 2 * folds)
      throw RangeError("synth.speakers must be at least twice eval.folds");
  }
}

inline std::string ExperimentConfig::to_toml_string() const {
  using config_detail::fmt_double;
  std::ostringstream os;
  os << "seed = " << seed << "\n";
  os << "out_dir = \"" << out_dir << "\"\n";
  os << "\n[task]\n";
  os << "name = \"" << task_name << "\"\n";
  os << "metric = \"" << (metric == MetricKind::kEer ? "eer" : "weighted_accuracy")
     << "\"\n";
  os << "manifest = \"" << manifest_path << "\"\n";
  os << "macro_eer = " << (macro_eer ? "true" : "false") << "\n";
  os << "\n[synth]\n";
  os << "enabled = " << (synth_enabled ? "true" : "false") << "\n";
  os << "classes = " << synth.num_classes << "\n";
  os << "speakers = " << synth.num_speakers << "\n";
  os << "utterances_per_speaker_per_class = " << synth.utterances_per_speaker_per_class
     << "\n";
  os << "duration_s = " << fmt_double(synth.duration_s) << "\n";
  os << "sample_rate = " << synth.sample_rate << "\n";
  os << "noise_floor_min = " << fmt_double(synth.noise_floor_min) << "\n";
  os << "noise_floor_max = " << fmt_double(synth.noise_floor_max) << "\n";
  os << "\n[features]\n";
  os << "n_mels = " << n_mels << "\n";
  os << "n_mfcc = " << n_mfcc << "\n";
  os << "\n[kmeans]\n";
  os << "k = " << kmeans_k << "\n";
  os << "max_iters = " << kmeans_max_iters << "\n";
  os << "max_frames = " << kmeans_max_frames << "\n";
  os << "\n[model]\n";
  os << "d_model = " << model.d_model << "\n";
  os << "blocks = " << model.n_blocks << "\n";
  os << "heads = " << model.heads << "\n";
  os << "ffn = " << model.ffn_dim << "\n";
  os << "\n[mask]\n";
  os << "start_prob = " << fmt_double(mask.start_prob) << "\n";
  os << "span_len = " << mask.span_len << "\n";
  os << "\n[pretrain]\n";
  os << "steps = " << pretrain.steps << "\n";
  os << "batch_size = " << pretrain.batch_size << "\n";
  os << "lr = " << fmt_double(pretrain.lr) << "\n";
  os << "grad_clip = " << fmt_double(pretrain.grad_clip) << "\n";
  os << "\n[train]\n";
  os << "mode = \"" << (train.mode == TrainMode::kFrozen ? "frozen" : "finetune")
     << "\"\n";
  os << "head_lr = " << fmt_double(train.head_lr) << "\n";
  os << "upstream_lr = " << fmt_double(train.upstream_lr) << "\n";
  os << "batch_size = " << train.batch_size << "\n";
  os << "max_steps = " << train.max_steps << "\n";
  os << "eval_every = " << train.eval_every_steps << "\n";
  os << "patience = " << train.patience << "\n";
  os << "grad_clip = " << fmt_double(train.grad_clip) << "\n";
  os << "\n[eval]\n";
  os << "durations = [";
  for (size_t i = 0; i < durations.size(); ++i)
    os << (i ? ", " : "") << fmt_double(durations[i]);
  os << "]\n";
  os << "folds = " << folds << "\n";
  os << "dev_fraction = " << fmt_double(dev_fraction) << "\n";
  os << "\n[average]\n";
  os << "recipe = \""
     << (recipe == AveragingRecipe::kNone
             ? "none"
             : recipe == AveragingRecipe::kTopK ? "top_k" : "best_plus_step")
     << "\"\n";
  os << "k = " << average_top_k << "\n";
  os << "step = " << average_step << "\n";
  os << "\n[sweep]\n";
  os << "n_per_class = [";
  for (size_t i = 0; i < sweep_n_per_class.size(); ++i)
    os << (i ? ", " : "") << sweep_n_per_class[i];
  os << "]\n";
  return os.str();
}

// Hash of the model-compatibility slice of the config: everything that
// decides whether two checkpoints can be averaged or an artifact reused.
inline uint64_t ExperimentConfig::fingerprint() const {
  std::ostringstream os;
  os << task_name << "|" << static_cast<int>(metric) << "|" << manifest_path << "|"
     << synth_enabled << "|" << synth.num_classes << "|" << synth.num_speakers << "|"
     << synth.utterances_per_speaker_per_class << "|" << synth.duration_s << "|"
     << synth.sample_rate << "|" << synth.noise_floor_min << "|"
     << synth.noise_floor_max << "|" << n_mels << "|" << n_mfcc << "|" << kmeans_k
     << "|" << kmeans_max_iters << "|" << kmeans_max_frames << "|" << model.d_model
     << "|" << model.n_blocks << "|" << model.heads << "|" << model.ffn_dim << "|"
     << mask.start_prob << "|" << mask.span_len << "|" << pretrain.steps << "|"
     << pretrain.batch_size << "|" << pretrain.lr << "|"
     << static_cast<int>(train.mode) << "|" << train.head_lr << "|"
     << train.upstream_lr << "|" << train.batch_size << "|" << train.max_steps << "|"
     << train.eval_every_steps << "|" << train.patience << "|" << train.grad_clip
     << "|" << seed;
  return fnv1a64(os.str());
}

}  // namespace speck
