#pragma once

// Patch-wise face depth regression with a ViT-style encoder. Every patch
// token is regressed to one depth value; the final-norm tokens double as the
// depth feature map consumed by the fusion stage.

#include <string>
#include <vector>

#include "depthforensics/autograd.hpp"
#include "depthforensics/params.hpp"

namespace dfx {

class Rng;

struct FdmtConfig {
  int image_size = 224;
  int channels = 3;
  int patches_per_side = 14;
  int embed_dim = 192;
  int blocks = 12;
  int heads = 8;
  int mlp_ratio = 4;
  bool position_embedding = true;

  int patch_count() const { return patches_per_side * patches_per_side; }
  int patch_dim() const {
    const int p = image_size / patches_per_side;
    return p * p * channels;
  }
  void validate() const;
};

class Fdmt {
 public:
  struct Output {
    ag::Var depth;     // P x 1, each in [0, 1]
    ag::Var features;  // P x E, raster patch order
  };

  Fdmt(const FdmtConfig& config, ParamStore& store, Rng& rng, const std::string& prefix = "fdmt");

  const FdmtConfig& config() const { return config_; }

  // image: H x (W*C), HWC order.
  ag::Var patchify(ag::Tape& t, ag::Var image) const;
  ag::Var embed_patches(ag::Tape& t, const ParamStore& store, ag::Var patches) const;
  // Pre-norm residual block. Attention probabilities of every head are
  // appended to attn when non-null.
  ag::Var transformer_block(ag::Tape& t, const ParamStore& store, int block, ag::Var tokens,
                            std::vector<ag::Var>* attn = nullptr) const;
  ag::Var encode(ag::Tape& t, const ParamStore& store, ag::Var image, std::vector<ag::Var>* attn = nullptr) const;
  ag::Var depth_head(ag::Tape& t, const ParamStore& store, ag::Var features) const;
  Output forward(ag::Tape& t, const ParamStore& store, ag::Var image, std::vector<ag::Var>* attn = nullptr) const;

  // Zeroes the attention and MLP output projections of one block.
  void zero_block_outputs(ParamStore& store, int block) const;
  void zero_position_embedding(ParamStore& store) const;

 private:
  struct BlockParams {
    int ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };

  FdmtConfig config_;
  int embed_w_, embed_b_, pos_;
  std::vector<BlockParams> blocks_;
  int norm_g_, norm_b_, head_w_, head_b_;
};

// Multi-head scaled dot-product self-attention over rows of x (N x E) with
// fused qkv weights (E x 3E). Shared by the encoder and the self-attention
// baseline fusion.
ag::Var multi_head_self_attention(ag::Tape& t, ag::Var x, ag::Var qkv_w, ag::Var qkv_b, ag::Var proj_w,
                                  ag::Var proj_b, int heads, std::vector<ag::Var>* attn);

}  // namespace dfx
