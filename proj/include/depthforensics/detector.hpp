#pragma once

// The full detection model: backbone front -> fusion with depth features ->
// backbone rear, with the depth transformer running alongside.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthforensics/autograd.hpp"
#include "depthforensics/backbone.hpp"
#include "depthforensics/fdmt.hpp"
#include "depthforensics/mda.hpp"
#include "depthforensics/params.hpp"
#include "depthforensics/synth.hpp"

namespace dfx {

enum class FusionMode {
  None,           // plain backbone
  Mda,            // multi-head depth attention
  Concat,         // concat predicted depth map + 1x1 conv
  SelfAttention,  // multi-head attention with RGB queries, no depth
};

FusionMode parse_fusion(const std::string& name);
const char* fusion_name(FusionMode m);

struct DetectorConfig {
  BackboneConfig backbone;
  FdmtConfig fdmt;
  bool use_fdmt = true;
  FusionMode fusion = FusionMode::Mda;
  int mda_heads = 4;
  int mda_head_dim = 8;
  AttentionScale mda_scale = AttentionScale::PerHeadWidth;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& j);
};

// 32x32 images, 8x8 patches; trains in minutes on one core.
DetectorConfig mini_profile();
// 224x224 images, 14x14 patches, 12 blocks of width 192 with 8 heads.
DetectorConfig paper_profile();
DetectorConfig profile_by_name(const std::string& name);

struct DetectorOutput {
  ag::Var logits;           // 1 x 2
  ag::Var depth;            // P x 1, invalid without the depth transformer
  ag::Var depth_features;   // P x E
  ag::Var rgb_features;     // C x (H*W) at the injection point
  ag::Var fused_features;   // C x (H*W) fed to the rear
  std::vector<ag::Var> fusion_attention;
};

class Detector {
 public:
  explicit Detector(const DetectorConfig& config);

  const DetectorConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const Backbone& backbone() const { return backbone_; }
  const Fdmt* fdmt() const { return fdmt_ ? &*fdmt_ : nullptr; }
  const Mda* mda() const { return mda_ ? &*mda_ : nullptr; }

  // Image tensors for both branches; HWC for the transformer, CHW for the CNN.
  ag::Var image_hwc(ag::Tape& t, const synth::Image& img, bool requires_grad = false) const;
  ag::Var image_chw(ag::Tape& t, const synth::Image& img) const;

  DetectorOutput forward(ag::Tape& t, const synth::Image& img) const;
  // Forward with caller-provided input nodes (used by gradient checks).
  DetectorOutput forward(ag::Tape& t, ag::Var hwc, ag::Var chw) const;

  // Softmax probability of the fake class.
  double classify(const synth::Image& img) const;

 private:
  DetectorConfig config_;
  ParamStore params_;
  Backbone backbone_;
  std::optional<Fdmt> fdmt_;
  std::optional<Mda> mda_;
  int concat_w_ = -1, concat_b_ = -1;
};

double fake_probability(const ag::Tape& t, ag::Var logits);

}  // namespace dfx
