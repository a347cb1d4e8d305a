#pragma once

// Small convolutional classifier split at an injection point:
//   image -> blocks[0, k) -> F_rgb | F_en -> blocks[k, n) -> GAP -> FC -> ReLU -> FC -> logits
// Each block is a 3x3 convolution followed by ReLU.

#include <string>
#include <vector>

#include "depthforensics/autograd.hpp"
#include "depthforensics/params.hpp"

namespace dfx {

class Rng;

struct ConvBlockSpec {
  int channels = 16;
  int stride = 1;
};

struct BackboneConfig {
  int image_size = 32;
  int in_channels = 3;
  std::vector<ConvBlockSpec> blocks;
  int injection_index = 3;  // F_rgb is the output of this many blocks
  int head_width = 32;
  int classes = 2;

  void validate() const;
};

struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  int positions() const { return height * width; }
  bool operator==(const FeatureShape&) const = default;
};

class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParamStore& store, Rng& rng, const std::string& prefix = "backbone");

  const BackboneConfig& config() const { return config_; }

  FeatureShape block_output_shape(int block) const;  // block in [0, n]
  FeatureShape injection_shape() const { return block_output_shape(config_.injection_index); }

  // image_chw: C x (H*W). Returns F_rgb as C x (H*W).
  ag::Var forward_front(ag::Tape& t, const ParamStore& store, ag::Var image_chw) const;
  // 1 x classes logits.
  ag::Var forward_rear(ag::Tape& t, const ParamStore& store, ag::Var features) const;

 private:
  ag::Var run_block(ag::Tape& t, const ParamStore& store, int block, ag::Var x) const;

  BackboneConfig config_;
  std::vector<int> conv_w_, conv_b_;
  int fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace dfx
