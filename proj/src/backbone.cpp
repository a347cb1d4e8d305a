#include "depthforensics/backbone.hpp"

#include <cmath>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"

namespace dfx {

void BackboneConfig::validate() const {
  require(!blocks.empty(), "backbone: no blocks configured");
  require(image_size > 0 && in_channels > 0, "backbone: image geometry must be positive");
  require(injection_index > 0 && injection_index < static_cast<int>(blocks.size()),
          "backbone: injection index must lie strictly inside (0, " + std::to_string(blocks.size()) + ")");
  require(head_width > 0 && classes >= 2, "backbone: invalid classifier head");
  int side = image_size;
  for (const auto& b : blocks) {
    require(b.channels > 0 && b.stride >= 1, "backbone: invalid block spec");
    side = (side + 2 - 3) / b.stride + 1;
    require(side > 0, "backbone: feature map collapses to zero size");
  }
}

Backbone::Backbone(const BackboneConfig& config, ParamStore& s, Rng& rng, const std::string& prefix)
    : config_(config) {
  config_.validate();
  int cin = config_.in_channels;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const int cout = config_.blocks[i].channels;
    const int fan_in = cin * 9;
    // He initialisation keeps ReLU activations from vanishing without normalisation layers.
    conv_w_.push_back(s.add_normal(prefix + ".conv" + std::to_string(i) + ".w", cout, fan_in,
                                   std::sqrt(2.0 / fan_in), rng));
    conv_b_.push_back(s.add_zeros(prefix + ".conv" + std::to_string(i) + ".b", 1, cout));
    cin = cout;
  }
  fc1_w_ = s.add_normal(prefix + ".fc1.w", cin, config_.head_width, std::sqrt(2.0 / cin), rng);
  fc1_b_ = s.add_zeros(prefix + ".fc1.b", 1, config_.head_width);
  fc2_w_ = s.add_trunc_normal(prefix + ".fc2.w", config_.head_width, config_.classes, 0.02, rng);
  fc2_b_ = s.add_zeros(prefix + ".fc2.b", 1, config_.classes);
}

FeatureShape Backbone::block_output_shape(int block) const {
  require(block >= 0 && block <= static_cast<int>(config_.blocks.size()), "backbone: block index out of range");
  FeatureShape f{config_.in_channels, config_.image_size, config_.image_size};
  for (int i = 0; i < block; ++i) {
    const int st = config_.blocks[i].stride;
    f = {config_.blocks[i].channels, (f.height - 1) / st + 1, (f.width - 1) / st + 1};
  }
  return f;
}

ag::Var Backbone::run_block(ag::Tape& t, const ParamStore& s, int block, ag::Var x) const {
  const FeatureShape in = block_output_shape(block);
  ag::ConvGeometry g;
  g.in_channels = in.channels;
  g.height = in.height;
  g.width = in.width;
  g.kernel = 3;
  g.stride = config_.blocks[block].stride;
  g.pad = 1;
  auto y = ag::conv2d(t, x, t.param(s, conv_w_[block]), t.param(s, conv_b_[block]), g);
  return ag::relu(t, y);
}

ag::Var Backbone::forward_front(ag::Tape& t, const ParamStore& s, ag::Var image) const {
  require(t.rows(image) == config_.in_channels && t.cols(image) == config_.image_size * config_.image_size,
          "backbone: input image shape mismatch");
  ag::Var x = image;
  for (int b = 0; b < config_.injection_index; ++b) x = run_block(t, s, b, x);
  return x;
}

ag::Var Backbone::forward_rear(ag::Tape& t, const ParamStore& s, ag::Var features) const {
  const FeatureShape in = injection_shape();
  require(t.rows(features) == in.channels && t.cols(features) == in.positions(),
          "backbone: fused feature shape does not match the injection point");
  ag::Var x = features;
  for (int b = config_.injection_index; b < static_cast<int>(config_.blocks.size()); ++b) x = run_block(t, s, b, x);
  auto pooled = ag::global_avg_pool(t, x);
  auto h = ag::relu(t, ag::add_row_bias(t, ag::matmul(t, pooled, t.param(s, fc1_w_)), t.param(s, fc1_b_)));
  return ag::add_row_bias(t, ag::matmul(t, h, t.param(s, fc2_w_)), t.param(s, fc2_b_));
}

}  // namespace dfx
