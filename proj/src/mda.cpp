#include "depthforensics/mda.hpp"

#include <cmath>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"

namespace dfx {

namespace {
// Glorot scaling: with narrow tokens a fixed small std leaves the attention
// uniform and the fused branch near zero for a long time.
double glorot_std(int fan_in, int fan_out) { return std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)); }

// Sampling positions and weights along one axis, corners aligned.
void axis_weights(int src, int dst, int i, int& lo, int& hi, double& frac) {
  const double pos = dst == 1 ? 0.0 : static_cast<double>(i) * (src - 1) / (dst - 1);
  lo = static_cast<int>(std::floor(pos));
  if (lo >= src - 1) {
    lo = hi = src - 1;
    frac = 0.0;
    return;
  }
  hi = lo + 1;
  frac = pos - lo;
}
}  // namespace

double MdaConfig::scale_factor() const {
  const int d = scale == AttentionScale::PerHeadWidth ? head_dim : rgb_channels;
  return 1.0 / std::sqrt(static_cast<double>(d));
}

void MdaConfig::validate() const {
  require(heads >= 1, "mda: head count must be at least 1");
  require(head_dim > 0, "mda: head width must be positive");
  require(rgb_channels > 0, "mda: RGB channel count must be positive");
  require(query == QuerySource::Rgb || depth_channels > 0, "mda: depth channel count must be positive");
}

ag::Var align_depth_features(ag::Tape& t, ag::Var tokens, int src_h, int src_w, int dst_h, int dst_w) {
  require(dst_h > 0 && dst_w > 0, "align_depth_features: target size must be positive");
  require(src_h > 0 && src_w > 0 && t.rows(tokens) == src_h * src_w,
          "align_depth_features: token count does not match the source grid");
  if (src_h == dst_h && src_w == dst_w) return tokens;
  const int n_out = dst_h * dst_w, n_in = src_h * src_w;
  std::vector<double> r(static_cast<std::size_t>(n_out) * n_in, 0.0);
  for (int y = 0; y < dst_h; ++y) {
    int y0, y1;
    double fy;
    axis_weights(src_h, dst_h, y, y0, y1, fy);
    for (int x = 0; x < dst_w; ++x) {
      int x0, x1;
      double fx;
      axis_weights(src_w, dst_w, x, x0, x1, fx);
      double* row = r.data() + static_cast<std::size_t>(y * dst_w + x) * n_in;
      row[y0 * src_w + x0] += (1 - fy) * (1 - fx);
      row[y0 * src_w + x1] += (1 - fy) * fx;
      row[y1 * src_w + x0] += fy * (1 - fx);
      row[y1 * src_w + x1] += fy * fx;
    }
  }
  return ag::matmul(t, t.constant(n_out, n_in, std::move(r)), tokens);
}

ag::Var depth_attention_head(ag::Tape& t, ag::Var depth_tokens, ag::Var rgb_tokens, ag::Var w_depth,
                             ag::Var w_rgb, ag::Var w_value, double scale_factor, ag::Var* attn) {
  require(t.rows(depth_tokens) == t.rows(rgb_tokens), "depth_attention_head: depth and RGB token counts differ");
  require(t.cols(w_depth) == t.cols(w_rgb), "depth_attention_head: query and key widths differ");
  auto q = ag::matmul(t, depth_tokens, w_depth);
  auto k = ag::matmul(t, rgb_tokens, w_rgb);
  auto v = ag::matmul(t, rgb_tokens, w_value);
  auto a = ag::softmax_rows(t, ag::matmul_nt(t, q, k), scale_factor);
  if (attn) *attn = a;
  // Matrix product: the attention (N x N) weights the value rows (N x d).
  return ag::matmul(t, a, v);
}

Mda::Mda(const MdaConfig& config, ParamStore& s, Rng& rng, const std::string& prefix) : config_(config) {
  config_.validate();
  const int ld = config_.heads * config_.head_dim, c = config_.rgb_channels;
  const int cq = config_.query == QuerySource::Depth ? config_.depth_channels : c;
  // Per-head projections occupy disjoint column blocks, so no head shares weights.
  const int hid = config_.hidden();
  wd_ = s.add_trunc_normal(prefix + ".w_depth", cq, ld, glorot_std(cq, ld), rng);
  wr_ = s.add_trunc_normal(prefix + ".w_rgb", c, ld, glorot_std(c, ld), rng);
  wv_ = s.add_trunc_normal(prefix + ".w_value", c, ld, glorot_std(c, ld), rng);
  wo_ = s.add_trunc_normal(prefix + ".w_out", ld, c, glorot_std(ld, c), rng);
  fc1_w_ = s.add_trunc_normal(prefix + ".mlp.fc1.w", c, hid, glorot_std(c, hid), rng);
  fc1_b_ = s.add_zeros(prefix + ".mlp.fc1.b", 1, hid);
  fc2_w_ = s.add_trunc_normal(prefix + ".mlp.fc2.w", hid, c, glorot_std(hid, c), rng);
  fc2_b_ = s.add_zeros(prefix + ".mlp.fc2.b", 1, c);
}

ag::Var Mda::fuse(ag::Tape& t, const ParamStore& s, ag::Var rgb, ag::Var attended) const {
  require(t.rows(rgb) == t.rows(attended) && t.cols(rgb) == t.cols(attended), "mda fuse: shape mismatch");
  auto x = ag::add(t, attended, rgb);
  auto h = ag::gelu(t, ag::add_row_bias(t, ag::matmul(t, x, t.param(s, fc1_w_)), t.param(s, fc1_b_)));
  auto m = ag::add_row_bias(t, ag::matmul(t, h, t.param(s, fc2_w_)), t.param(s, fc2_b_));
  return ag::add(t, rgb, m);
}

ag::Var Mda::attend(ag::Tape& t, const ParamStore& s, ag::Var depth_tokens, ag::Var rgb_tokens,
                    std::vector<ag::Var>* attn) const {
  require(t.cols(rgb_tokens) == config_.rgb_channels, "mda: RGB channel count mismatch");
  const ag::Var query_tokens = config_.query == QuerySource::Depth ? depth_tokens : rgb_tokens;
  require(query_tokens.valid(), "mda: depth features are required for depth attention");
  require(t.cols(query_tokens) == s.at(wd_).rows, "mda: query channel count mismatch");
  const int d = config_.head_dim;
  auto wd = t.param(s, wd_), wr = t.param(s, wr_), wv = t.param(s, wv_);
  std::vector<ag::Var> heads;
  heads.reserve(config_.heads);
  for (int h = 0; h < config_.heads; ++h) {
    ag::Var a;
    heads.push_back(depth_attention_head(t, query_tokens, rgb_tokens,
                                         config_.heads == 1 ? wd : ag::slice_cols(t, wd, h * d, d),
                                         config_.heads == 1 ? wr : ag::slice_cols(t, wr, h * d, d),
                                         config_.heads == 1 ? wv : ag::slice_cols(t, wv, h * d, d),
                                         config_.scale_factor(), &a));
    if (attn) attn->push_back(a);
  }
  auto cat = config_.heads == 1 ? heads[0] : ag::concat_cols(t, heads);
  return ag::matmul(t, cat, t.param(s, wo_));
}

ag::Var Mda::forward(ag::Tape& t, const ParamStore& s, ag::Var depth_tokens, ag::Var rgb_tokens,
                     std::vector<ag::Var>* attn) const {
  return fuse(t, s, rgb_tokens, attend(t, s, depth_tokens, rgb_tokens, attn));
}

}  // namespace dfx
