#include "depthforensics/fdmt.hpp"

#include <cmath>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"

namespace dfx {

namespace {
constexpr double kInitStd = 0.02;
}

void FdmtConfig::validate() const {
  require(blocks >= 1, "fdmt: at least one transformer block is required");
  require(heads >= 1 && embed_dim % heads == 0, "fdmt: embedding width must be divisible by the head count");
  require(patches_per_side >= 1 && image_size % patches_per_side == 0,
          "fdmt: image size " + std::to_string(image_size) + " is not divisible by " +
              std::to_string(patches_per_side) + " patches per side");
  require(channels >= 1 && mlp_ratio >= 1, "fdmt: channels and MLP ratio must be positive");
}

Fdmt::Fdmt(const FdmtConfig& config, ParamStore& s, Rng& rng, const std::string& prefix) : config_(config) {
  config_.validate();
  const int e = config_.embed_dim, h = e * config_.mlp_ratio;
  embed_w_ = s.add_trunc_normal(prefix + ".embed.w", config_.patch_dim(), e, kInitStd, rng);
  embed_b_ = s.add_zeros(prefix + ".embed.b", 1, e);
  pos_ = s.add_trunc_normal(prefix + ".pos", config_.patch_count(), e, kInitStd, rng);
  for (int b = 0; b < config_.blocks; ++b) {
    const std::string p = prefix + ".block" + std::to_string(b);
    BlockParams bp{};
    bp.ln1_g = s.add_constant(p + ".ln1.g", 1, e, 1.0);
    bp.ln1_b = s.add_zeros(p + ".ln1.b", 1, e);
    bp.qkv_w = s.add_trunc_normal(p + ".attn.qkv.w", e, 3 * e, kInitStd, rng);
    bp.qkv_b = s.add_zeros(p + ".attn.qkv.b", 1, 3 * e);
    bp.proj_w = s.add_trunc_normal(p + ".attn.proj.w", e, e, kInitStd, rng);
    bp.proj_b = s.add_zeros(p + ".attn.proj.b", 1, e);
    bp.ln2_g = s.add_constant(p + ".ln2.g", 1, e, 1.0);
    bp.ln2_b = s.add_zeros(p + ".ln2.b", 1, e);
    bp.fc1_w = s.add_trunc_normal(p + ".mlp.fc1.w", e, h, kInitStd, rng);
    bp.fc1_b = s.add_zeros(p + ".mlp.fc1.b", 1, h);
    bp.fc2_w = s.add_trunc_normal(p + ".mlp.fc2.w", h, e, kInitStd, rng);
    bp.fc2_b = s.add_zeros(p + ".mlp.fc2.b", 1, e);
    blocks_.push_back(bp);
  }
  norm_g_ = s.add_constant(prefix + ".norm.g", 1, e, 1.0);
  norm_b_ = s.add_zeros(prefix + ".norm.b", 1, e);
  head_w_ = s.add_trunc_normal(prefix + ".head.w", e, 1, kInitStd, rng);
  head_b_ = s.add_zeros(prefix + ".head.b", 1, 1);
  if (!config_.position_embedding) zero_position_embedding(s);
}

ag::Var Fdmt::patchify(ag::Tape& t, ag::Var image) const {
  return ag::patchify(t, image, config_.image_size, config_.image_size, config_.channels, config_.patches_per_side);
}

ag::Var Fdmt::embed_patches(ag::Tape& t, const ParamStore& s, ag::Var patches) const {
  auto x = ag::matmul(t, patches, t.param(s, embed_w_));
  x = ag::add_row_bias(t, x, t.param(s, embed_b_));
  if (!config_.position_embedding) return x;
  return ag::add(t, x, t.param(s, pos_));
}

ag::Var multi_head_self_attention(ag::Tape& t, ag::Var x, ag::Var qkv_w, ag::Var qkv_b, ag::Var proj_w,
                                  ag::Var proj_b, int heads, std::vector<ag::Var>* attn) {
  const int e = t.cols(qkv_w) / 3;
  const int hd = e / heads;
  auto qkv = ag::add_row_bias(t, ag::matmul(t, x, qkv_w), qkv_b);
  std::vector<ag::Var> outs;
  outs.reserve(heads);
  const double s = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int h = 0; h < heads; ++h) {
    auto q = ag::slice_cols(t, qkv, h * hd, hd);
    auto k = ag::slice_cols(t, qkv, e + h * hd, hd);
    auto v = ag::slice_cols(t, qkv, 2 * e + h * hd, hd);
    auto a = ag::softmax_rows(t, ag::matmul_nt(t, q, k), s);
    if (attn) attn->push_back(a);
    outs.push_back(ag::matmul(t, a, v));
  }
  auto cat = heads == 1 ? outs[0] : ag::concat_cols(t, outs);
  return ag::add_row_bias(t, ag::matmul(t, cat, proj_w), proj_b);
}

ag::Var Fdmt::transformer_block(ag::Tape& t, const ParamStore& s, int block, ag::Var x,
                                std::vector<ag::Var>* attn) const {
  require(block >= 0 && block < config_.blocks, "fdmt: block index out of range");
  require(t.rows(x) == config_.patch_count() && t.cols(x) == config_.embed_dim, "fdmt: token shape mismatch");
  const BlockParams& b = blocks_[block];
  auto n1 = ag::layernorm_rows(t, x, t.param(s, b.ln1_g), t.param(s, b.ln1_b));
  auto a = multi_head_self_attention(t, n1, t.param(s, b.qkv_w), t.param(s, b.qkv_b), t.param(s, b.proj_w),
                                     t.param(s, b.proj_b), config_.heads, attn);
  x = ag::add(t, x, a);
  auto n2 = ag::layernorm_rows(t, x, t.param(s, b.ln2_g), t.param(s, b.ln2_b));
  auto m = ag::add_row_bias(t, ag::matmul(t, n2, t.param(s, b.fc1_w)), t.param(s, b.fc1_b));
  m = ag::gelu(t, m);
  m = ag::add_row_bias(t, ag::matmul(t, m, t.param(s, b.fc2_w)), t.param(s, b.fc2_b));
  auto out = ag::add(t, x, m);
  for (double v : t.value(out))
    if (!std::isfinite(v))
      throw Error(ErrorCode::Numeric, "fdmt: non-finite activation after block " + std::to_string(block));
  return out;
}

ag::Var Fdmt::encode(ag::Tape& t, const ParamStore& s, ag::Var image, std::vector<ag::Var>* attn) const {
  auto x = embed_patches(t, s, patchify(t, image));
  for (int b = 0; b < config_.blocks; ++b) x = transformer_block(t, s, b, x, attn);
  return ag::layernorm_rows(t, x, t.param(s, norm_g_), t.param(s, norm_b_));
}

ag::Var Fdmt::depth_head(ag::Tape& t, const ParamStore& s, ag::Var features) const {
  auto z = ag::add_row_bias(t, ag::matmul(t, features, t.param(s, head_w_)), t.param(s, head_b_));
  return ag::sigmoid(t, z);
}

Fdmt::Output Fdmt::forward(ag::Tape& t, const ParamStore& s, ag::Var image, std::vector<ag::Var>* attn) const {
  auto f = encode(t, s, image, attn);
  return {depth_head(t, s, f), f};
}

void Fdmt::zero_block_outputs(ParamStore& s, int block) const {
  const BlockParams& b = blocks_.at(block);
  for (int id : {b.proj_w, b.proj_b, b.fc2_w, b.fc2_b})
    std::fill(s.at(id).value.begin(), s.at(id).value.end(), 0.0);
}

void Fdmt::zero_position_embedding(ParamStore& s) const {
  std::fill(s.at(pos_).value.begin(), s.at(pos_).value.end(), 0.0);
}

}  // namespace dfx
