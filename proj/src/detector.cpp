#include "depthforensics/detector.hpp"

#include <cmath>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"

namespace dfx {

using nlohmann::json;

namespace {
// Independent init streams so that enabling a branch never perturbs the
// initial weights of another.
enum StreamTag : std::uint64_t { kBackboneStream = 1, kFdmtStream = 2, kFusionStream = 3, kConcatStream = 4 };
}  // namespace

FusionMode parse_fusion(const std::string& name) {
  if (name == "none") return FusionMode::None;
  if (name == "mda") return FusionMode::Mda;
  if (name == "concat") return FusionMode::Concat;
  if (name == "self_attention") return FusionMode::SelfAttention;
  throw Error(ErrorCode::InvalidArgument, "unknown fusion mode '" + name + "'");
}

const char* fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::None: return "none";
    case FusionMode::Mda: return "mda";
    case FusionMode::Concat: return "concat";
    case FusionMode::SelfAttention: return "self_attention";
  }
  return "none";
}

void DetectorConfig::validate() const {
  backbone.validate();
  if (use_fdmt) {
    fdmt.validate();
    require(fdmt.image_size == backbone.image_size, "detector: depth transformer and backbone image sizes differ");
    require(fdmt.channels == backbone.in_channels, "detector: channel counts differ between branches");
  }
  require(!(fusion == FusionMode::Mda || fusion == FusionMode::Concat) || use_fdmt,
          std::string("detector: fusion '") + fusion_name(fusion) + "' requires the depth transformer");
  require(mda_heads >= 1 && mda_head_dim >= 1, "detector: invalid attention head configuration");
}

json DetectorConfig::to_json() const {
  json blocks = json::array();
  for (const auto& b : backbone.blocks) blocks.push_back({{"channels", b.channels}, {"stride", b.stride}});
  return {{"backbone",
           {{"image_size", backbone.image_size},
            {"in_channels", backbone.in_channels},
            {"blocks", blocks},
            {"injection_index", backbone.injection_index},
            {"head_width", backbone.head_width},
            {"classes", backbone.classes}}},
          {"fdmt",
           {{"image_size", fdmt.image_size},
            {"channels", fdmt.channels},
            {"patches_per_side", fdmt.patches_per_side},
            {"embed_dim", fdmt.embed_dim},
            {"blocks", fdmt.blocks},
            {"heads", fdmt.heads},
            {"mlp_ratio", fdmt.mlp_ratio},
            {"position_embedding", fdmt.position_embedding}}},
          {"use_fdmt", use_fdmt},
          {"fusion", fusion_name(fusion)},
          {"mda_heads", mda_heads},
          {"mda_head_dim", mda_head_dim},
          {"mda_scale", mda_scale == AttentionScale::PerHeadWidth ? "per_head_width" : "rgb_channels"},
          {"seed", seed}};
}

DetectorConfig DetectorConfig::from_json(const json& j) {
  DetectorConfig c;
  const auto& b = j.at("backbone");
  c.backbone.image_size = b.at("image_size").get<int>();
  c.backbone.in_channels = b.at("in_channels").get<int>();
  for (const auto& blk : b.at("blocks")) c.backbone.blocks.push_back({blk.at("channels").get<int>(), blk.at("stride").get<int>()});
  c.backbone.injection_index = b.at("injection_index").get<int>();
  c.backbone.head_width = b.at("head_width").get<int>();
  c.backbone.classes = b.at("classes").get<int>();
  const auto& f = j.at("fdmt");
  c.fdmt.image_size = f.at("image_size").get<int>();
  c.fdmt.channels = f.at("channels").get<int>();
  c.fdmt.patches_per_side = f.at("patches_per_side").get<int>();
  c.fdmt.embed_dim = f.at("embed_dim").get<int>();
  c.fdmt.blocks = f.at("blocks").get<int>();
  c.fdmt.heads = f.at("heads").get<int>();
  c.fdmt.mlp_ratio = f.at("mlp_ratio").get<int>();
  c.fdmt.position_embedding = f.at("position_embedding").get<bool>();
  c.use_fdmt = j.at("use_fdmt").get<bool>();
  c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  c.mda_heads = j.at("mda_heads").get<int>();
  c.mda_head_dim = j.at("mda_head_dim").get<int>();
  const auto scale = j.at("mda_scale").get<std::string>();
  require(scale == "per_head_width" || scale == "rgb_channels", "detector: unknown attention scale '" + scale + "'");
  c.mda_scale = scale == "per_head_width" ? AttentionScale::PerHeadWidth : AttentionScale::RgbChannels;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

DetectorConfig mini_profile() {
  DetectorConfig c;
  c.backbone.image_size = 32;
  c.backbone.blocks = {{16, 2}, {16, 1}, {32, 2}, {32, 1}, {48, 2}, {48, 1}};
  c.backbone.injection_index = 3;
  c.backbone.head_width = 32;
  c.fdmt.image_size = 32;
  c.fdmt.patches_per_side = 8;
  c.fdmt.embed_dim = 32;
  c.fdmt.blocks = 4;
  c.fdmt.heads = 4;
  c.mda_heads = 4;
  c.mda_head_dim = 8;
  return c;
}

DetectorConfig paper_profile() {
  DetectorConfig c;
  c.backbone.image_size = 224;
  c.backbone.blocks = {{32, 2}, {64, 2}, {128, 2}, {128, 1}, {256, 2}, {256, 1}};
  c.backbone.injection_index = 3;
  c.backbone.head_width = 128;
  c.fdmt = FdmtConfig{};
  c.mda_heads = 8;
  c.mda_head_dim = 16;
  return c;
}

DetectorConfig profile_by_name(const std::string& name) {
  if (name == "mini") return mini_profile();
  if (name == "paper") return paper_profile();
  throw Error(ErrorCode::InvalidArgument, "unknown profile '" + name + "' (expected mini or paper)");
}

Detector::Detector(const DetectorConfig& config)
    : config_(config),
      backbone_([&]() -> Backbone {
        config.validate();
        Rng rng = make_stream(config.seed, kBackboneStream);
        return Backbone(config.backbone, params_, rng);
      }()) {
  if (config_.use_fdmt) {
    Rng rng = make_stream(config_.seed, kFdmtStream);
    fdmt_.emplace(config_.fdmt, params_, rng);
  }
  const FeatureShape inj = backbone_.injection_shape();
  if (config_.fusion == FusionMode::Mda || config_.fusion == FusionMode::SelfAttention) {
    MdaConfig m;
    m.heads = config_.mda_heads;
    m.head_dim = config_.mda_head_dim;
    m.rgb_channels = inj.channels;
    m.depth_channels = config_.use_fdmt ? config_.fdmt.embed_dim : 0;
    m.scale = config_.mda_scale;
    m.query = config_.fusion == FusionMode::Mda ? QuerySource::Depth : QuerySource::Rgb;
    Rng rng = make_stream(config_.seed, kFusionStream);
    mda_.emplace(m, params_, rng);
  } else if (config_.fusion == FusionMode::Concat) {
    // 1x1 convolution over [F_rgb; depth]; starts as identity on F_rgb plus noise.
    Rng rng = make_stream(config_.seed, kConcatStream);
    const int c = inj.channels;
    concat_w_ = params_.add_trunc_normal("concat.w", c, c + 1, 0.02, rng);
    for (int i = 0; i < c; ++i) params_.at(concat_w_).value[static_cast<std::size_t>(i) * (c + 1) + i] += 1.0;
    concat_b_ = params_.add_zeros("concat.b", 1, c);
  }
}

ag::Var Detector::image_hwc(ag::Tape& t, const synth::Image& img, bool requires_grad) const {
  require(img.height == config_.backbone.image_size && img.width == config_.backbone.image_size,
          "detector: image is " + std::to_string(img.height) + "x" + std::to_string(img.width) + ", expected " +
              std::to_string(config_.backbone.image_size));
  std::vector<double> v(img.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(img.data[i]) - 0.5;
  const int rows = img.height, cols = img.width * synth::Image::kChannels;
  return requires_grad ? t.leaf(rows, cols, std::move(v)) : t.constant(rows, cols, std::move(v));
}

ag::Var Detector::image_chw(ag::Tape& t, const synth::Image& img) const {
  require(img.height == config_.backbone.image_size && img.width == config_.backbone.image_size,
          "detector: image size mismatch");
  const int hw = img.height * img.width;
  std::vector<double> v(img.data.size());
  for (int p = 0; p < hw; ++p)
    for (int c = 0; c < synth::Image::kChannels; ++c)
      v[static_cast<std::size_t>(c) * hw + p] = static_cast<double>(img.data[static_cast<std::size_t>(p) * 3 + c]) - 0.5;
  return t.constant(synth::Image::kChannels, hw, std::move(v));
}

DetectorOutput Detector::forward(ag::Tape& t, const synth::Image& img) const {
  const ag::Var hwc = fdmt_ ? image_hwc(t, img) : ag::Var{};
  return forward(t, hwc, image_chw(t, img));
}

DetectorOutput Detector::forward(ag::Tape& t, ag::Var hwc, ag::Var chw) const {
  DetectorOutput out;
  out.rgb_features = backbone_.forward_front(t, params_, chw);
  if (fdmt_) {
    auto f = fdmt_->forward(t, params_, hwc);
    out.depth = f.depth;
    out.depth_features = f.features;
  }
  const FeatureShape inj = backbone_.injection_shape();
  const int g = config_.fdmt.patches_per_side;
  switch (config_.fusion) {
    case FusionMode::None:
      out.fused_features = out.rgb_features;
      break;
    case FusionMode::Mda:
    case FusionMode::SelfAttention: {
      auto rgb = ag::transpose(t, out.rgb_features);
      ag::Var depth_tokens;
      if (config_.fusion == FusionMode::Mda)
        depth_tokens = align_depth_features(t, out.depth_features, g, g, inj.height, inj.width);
      auto en = mda_->forward(t, params_, depth_tokens, rgb, &out.fusion_attention);
      out.fused_features = ag::transpose(t, en);
      break;
    }
    case FusionMode::Concat: {
      auto dmap = align_depth_features(t, out.depth, g, g, inj.height, inj.width);
      dmap = ag::reshape(t, dmap, 1, inj.positions());
      const ag::Var parts[] = {out.rgb_features, dmap};
      auto cat = ag::concat_rows(t, parts);
      out.fused_features =
          ag::add_col_bias(t, ag::matmul(t, t.param(params_, concat_w_), cat), t.param(params_, concat_b_));
      break;
    }
  }
  out.logits = backbone_.forward_rear(t, params_, out.fused_features);
  return out;
}

double fake_probability(const ag::Tape& t, ag::Var logits) {
  const auto z = t.value(logits);
  require(z.size() == 2, "fake_probability: expected two logits");
  // softmax(z)[1] in a numerically stable form
  return 1.0 / (1.0 + std::exp(z[0] - z[1]));
}

double Detector::classify(const synth::Image& img) const {
  ag::Tape t;
  auto out = forward(t, img);
  return fake_probability(t, out.logits);
}

}  // namespace dfx
