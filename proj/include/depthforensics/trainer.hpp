#pragma once

// Training, evaluation and the records they produce.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthforensics/dataset.hpp"
#include "depthforensics/detector.hpp"
#include "depthforensics/losses.hpp"

namespace dfx {

struct TrainConfig {
  std::string profile = "mini";
  double learning_rate = 3e-4;
  double weight_decay = 1e-4;
  int batch_size = 8;
  int epochs = 20;
  std::uint64_t seed = 0;
  loss::LossWeights weights;
  int lambda = gt::kDefaultLambda;
  int injection_index = -1;  // -1 keeps the profile default
  int fdmt_blocks = 0;       // 0 keeps the profile default
  bool use_fdmt = true;
  FusionMode fusion = FusionMode::Mda;
  // Epochs spent on the depth losses alone before joint training.
  int pretrain_epochs = 0;
  int workers = 1;
  int max_train_samples = 0;  // 0 uses the whole split
  std::string data_dir;
  std::string out_dir;

  void validate() const;
  DetectorConfig detector_config() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::filesystem::path& file);
  // CRC-32 of the canonical JSON, without paths or worker count.
  std::string hash() const;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double classification = 0;
  double ssim_loss = 0;
  double ssim = 0;
  double patch_mse_raw = 0;  // literal sum over the batch
  double patch_mse = 0;      // divided by the batch size
  double total = 0;
  bool operator==(const StepRecord&) const = default;
};

struct EpochRecord {
  int epoch = 0;
  bool pretrain = false;
  double train_accuracy = 0;
  double train_loss = 0;
  double val_accuracy = 0;
  double val_auc = 0;
  double wall_seconds = 0;  // not part of equality
  bool operator==(const EpochRecord& o) const {
    return epoch == o.epoch && pretrain == o.pretrain && train_accuracy == o.train_accuracy &&
           train_loss == o.train_loss && val_accuracy == o.val_accuracy && val_auc == o.val_auc;
  }
};

struct RunLog {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double wall_seconds = 0;

  bool operator==(const RunLog& o) const {
    return config_hash == o.config_hash && seed == o.seed && steps == o.steps && epochs == o.epochs &&
           best_epoch == o.best_epoch;
  }
  nlohmann::json to_json() const;
};

struct MetricsReport {
  std::string split;
  int count = 0;
  double accuracy = 0;
  double auc = 0;
  double classification = 0;
  double ssim_loss = 0;
  double ssim = 0;
  double patch_mse = 0;  // mean per sample
  double total = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<double> scores;  // fake probabilities in split order
  std::vector<int> labels;

  bool operator==(const MetricsReport&) const = default;
  nlohmann::json to_json(bool with_scores = false) const;
};

// Per-sample normalized patch depth targets derived from the composed ground truth.
std::vector<double> patch_targets(const synth::SampleRecord& r, int lambda, int patches_per_side);

struct TrainResult {
  Detector model;
  RunLog log;
};

using ProgressFn = void (*)(const EpochRecord&, void*);

TrainResult train(const TrainConfig& config, const data::Dataset& dataset, ProgressFn progress = nullptr,
                  void* progress_ctx = nullptr);

MetricsReport evaluate(const Detector& model, const TrainConfig& config, const data::Dataset& dataset,
                       data::Split split, int workers = 1);

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam(const ParamStore& store, double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(ParamStore& store, const std::vector<std::vector<double>>& grads);
  long steps() const { return t_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dfx
