#pragma once

// Multi-head depth attention: depth tokens form the queries, backbone RGB
// tokens form keys and values. The attended features are projected back to
// the RGB width and fused residually:
//
//   Q_h = F_d W^D_h,  K_h = F_rgb W^R_h,  V_h = F_rgb W^V_h
//   A_h = softmax(Q_h K_h^T / sqrt(d))           (row-wise)
//   F'  = Concat(A_1 V_1, ..., A_l V_l) W^O
//   F_en = F_rgb + MLP(F' + F_rgb)
//
// All token matrices are N x channels with N = H * W in raster order.

#include <string>
#include <vector>

#include "depthforensics/autograd.hpp"
#include "depthforensics/params.hpp"

namespace dfx {

class Rng;

enum class AttentionScale {
  PerHeadWidth,  // sqrt(head_dim)
  RgbChannels,   // sqrt(C), the literal reading
};

enum class QuerySource {
  Depth,  // depth attention
  Rgb,    // plain self-attention baseline, no depth input
};

struct MdaConfig {
  int heads = 8;
  int head_dim = 16;
  int rgb_channels = 0;
  int depth_channels = 0;
  int mlp_hidden = 0;  // 0 -> 4 * rgb_channels
  AttentionScale scale = AttentionScale::PerHeadWidth;
  QuerySource query = QuerySource::Depth;

  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * rgb_channels; }
  double scale_factor() const;
  void validate() const;
};

// Bilinear resize with corner alignment of a src_h x src_w token grid.
// Returns the input unchanged when the sizes already agree.
ag::Var align_depth_features(ag::Tape& t, ag::Var tokens, int src_h, int src_w, int dst_h, int dst_w);

// Single attention head; writes the attention matrix to attn when non-null.
ag::Var depth_attention_head(ag::Tape& t, ag::Var depth_tokens, ag::Var rgb_tokens, ag::Var w_depth,
                             ag::Var w_rgb, ag::Var w_value, double scale_factor, ag::Var* attn = nullptr);

class Mda {
 public:
  Mda(const MdaConfig& config, ParamStore& store, Rng& rng, const std::string& prefix = "mda");

  const MdaConfig& config() const { return config_; }

  // F_en = F_rgb + MLP(attended + F_rgb)
  ag::Var fuse(ag::Tape& t, const ParamStore& store, ag::Var rgb_tokens, ag::Var attended) const;

  // Concatenated head outputs projected by W^O, before fusion.
  ag::Var attend(ag::Tape& t, const ParamStore& store, ag::Var depth_tokens, ag::Var rgb_tokens,
                 std::vector<ag::Var>* attn = nullptr) const;

  ag::Var forward(ag::Tape& t, const ParamStore& store, ag::Var depth_tokens, ag::Var rgb_tokens,
                  std::vector<ag::Var>* attn = nullptr) const;

  int w_depth() const { return wd_; }
  int w_rgb() const { return wr_; }
  int w_value() const { return wv_; }
  int w_out() const { return wo_; }
  int mlp_fc2_w() const { return fc2_w_; }
  int mlp_fc2_b() const { return fc2_b_; }

 private:
  MdaConfig config_;
  int wd_, wr_, wv_, wo_;
  int fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace dfx
