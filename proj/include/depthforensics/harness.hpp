#pragma once

// Ablation runner and visual panels on top of train/evaluate.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthforensics/dataset.hpp"
#include "depthforensics/trainer.hpp"

namespace dfx {

// Known variant names:
//   baseline        plain backbone
//   concat_depth    predicted depth map concatenated at the injection point
//   self_attention  attention with RGB queries, no depth
//   mda             full model
//   mda_bypassed    depth transformer trained alongside, fusion disabled
//   inject_early / inject_middle / inject_late   full model at other injection points
std::vector<std::string> default_variants();
TrainConfig variant_config(const TrainConfig& base, const std::string& variant);

struct AblationConfig {
  TrainConfig base;
  std::vector<std::string> variants = default_variants();
  int seeds = 3;

  // Either {"base": {...}, "variants": [...], "seeds": n} or a flat train
  // config with optional "variants" and "seeds" keys.
  static AblationConfig from_json(const nlohmann::json& j);
};

struct AblationRow {
  std::string variant;
  std::vector<double> accuracy;  // one per seed, test split
  std::vector<double> auc;
  double accuracy_mean = 0, accuracy_std = 0;
  double auc_mean = 0, auc_std = 0;
  bool finite = true;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  const AblationRow* find(const std::string& variant) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

using AblationProgressFn = void (*)(const std::string& variant, int seed, const MetricsReport&, void*);

AblationTable ablate(const AblationConfig& config, const data::Dataset& dataset, AblationProgressFn progress = nullptr,
                     void* ctx = nullptr);

// Sample mean and (n-1) standard deviation; std is 0 for a single value.
void mean_std(const std::vector<double>& v, double& mean, double& std);

struct VisualStats {
  int panels = 0;
  int fake_samples = 0;
  int fake_depth_contrast = 0;  // fakes whose mean predicted depth inside the mask is below the outside mean
  std::vector<std::string> files;
  nlohmann::json to_json() const;
};

// Writes one PPM panel per sample: input | ground-truth depth | predicted
// patch depth | channel-mean |F_en| heatmap at the injection point.
VisualStats visualize(const Detector& model, const data::Dataset& dataset, data::Split split, int n,
                      const std::filesystem::path& out_dir, int lambda = gt::kDefaultLambda);

// Mean predicted depth inside and outside the fake mask, with the patch
// prediction spread over its pixels.
void masked_depth_means(const std::vector<double>& patch_depth, int per_side, const gt::FakeMask& mask,
                        double& inside, double& outside);

}  // namespace dfx
