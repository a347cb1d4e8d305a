#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "depthforensics/backbone.hpp"
#include "depthforensics/detector.hpp"
#include "depthforensics/error.hpp"
#include "depthforensics/losses.hpp"
#include "depthforensics/rng.hpp"
#include "depthforensics/synth.hpp"
#include "depthforensics/trainer.hpp"
#include "oracles.hpp"

using namespace dfx;
namespace ag = dfx::ag;

namespace {

synth::Image random_image(Rng& rng, int size) {
  synth::Image img;
  img.height = img.width = size;
  img.data.resize(static_cast<std::size_t>(size) * size * 3);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

std::vector<double> chw(const synth::Image& img) {
  std::vector<double> out(img.data.size());
  const int hw = img.height * img.width;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c) * hw + y * img.width + x] = img.at(y, x, c);
  return out;
}

}  // namespace

TEST(Backbone, MiniShapes) {
  const auto cfg = mini_profile().backbone;
  ParamStore s;
  Rng rng(1);
  Backbone b(cfg, s, rng);
  EXPECT_EQ(b.block_output_shape(0), (FeatureShape{3, 32, 32}));
  EXPECT_EQ(b.block_output_shape(1), (FeatureShape{16, 16, 16}));
  EXPECT_EQ(b.injection_shape(), (FeatureShape{32, 8, 8}));
  EXPECT_EQ(b.block_output_shape(6), (FeatureShape{48, 4, 4}));
  Rng data(2);
  ag::Tape t;
  auto f = b.forward_front(t, s, t.constant(3, 32 * 32, chw(random_image(data, 32))));
  EXPECT_EQ(t.rows(f), 32);
  EXPECT_EQ(t.cols(f), 64);
  auto logits = b.forward_rear(t, s, f);
  EXPECT_EQ(t.rows(logits), 1);
  EXPECT_EQ(t.cols(logits), 2);
  EXPECT_THROW(b.forward_rear(t, s, t.constant(32, 63, std::vector<double>(32 * 63, 0.0))), Error);
}

TEST(Backbone, PaperProfileShapes) {
  const auto cfg = paper_profile().backbone;
  ParamStore s;
  Rng rng(1);
  Backbone b(cfg, s, rng);
  EXPECT_EQ(b.injection_shape(), (FeatureShape{128, 28, 28}));
}

TEST(Backbone, ZeroImageZeroBiasGivesZeroFeatures) {
  ParamStore s;
  Rng rng(3);
  Backbone b(mini_profile().backbone, s, rng);
  ag::Tape t;
  auto f = b.forward_front(t, s, t.constant(3, 1024, std::vector<double>(3 * 1024, 0.0)));
  for (double v : t.value(f)) EXPECT_EQ(v, 0.0);
}

TEST(Backbone, ConfigErrors) {
  auto cfg = mini_profile().backbone;
  cfg.injection_index = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.injection_index = 6;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = mini_profile().backbone;
  cfg.blocks.clear();
  EXPECT_THROW(cfg.validate(), Error);
  cfg = mini_profile().backbone;
  cfg.blocks[0].stride = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Detector, ProbabilitiesAndDeterminism) {
  Rng rng(4);
  for (auto mode : {FusionMode::None, FusionMode::Mda, FusionMode::Concat, FusionMode::SelfAttention}) {
    auto cfg = mini_profile();
    cfg.fusion = mode;
    cfg.use_fdmt = mode == FusionMode::Mda || mode == FusionMode::Concat;
    Detector d(cfg);
    const auto img = random_image(rng, 32);
    ag::Tape t;
    auto out = d.forward(t, img);
    const auto z = t.value(out.logits);
    ASSERT_EQ(z.size(), 2u);
    const double e0 = std::exp(z[0]), e1 = std::exp(z[1]);
    const double p = d.classify(img);
    EXPECT_NEAR(e0 / (e0 + e1) + p, 1.0, 1e-12);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_EQ(p, d.classify(img));
    EXPECT_EQ(t.rows(out.fused_features), t.rows(out.rgb_features));
    EXPECT_EQ(t.cols(out.fused_features), t.cols(out.rgb_features));
  }
}

TEST(Detector, BypassedFusionIsBitIdenticalToBaseline) {
  auto base = mini_profile();
  base.use_fdmt = false;
  base.fusion = FusionMode::None;
  auto bypass = base;
  bypass.use_fdmt = true;
  Detector a(base), b(bypass);
  for (int id = 0; id < a.params().size(); ++id) {
    const int other = b.params().find(a.params().at(id).name);
    ASSERT_GE(other, 0);
    ASSERT_EQ(a.params().at(id).value, b.params().at(other).value);
  }
  Rng rng(5);
  for (int i = 0; i < 5; ++i) {
    const auto img = random_image(rng, 32);
    EXPECT_EQ(a.classify(img), b.classify(img));
  }
}

TEST(Detector, ConfigValidation) {
  auto c = mini_profile();
  c.use_fdmt = false;
  EXPECT_THROW(c.validate(), Error);  // MDA needs depth features
  c.fusion = FusionMode::Concat;
  EXPECT_THROW(c.validate(), Error);
  c.fusion = FusionMode::SelfAttention;
  EXPECT_NO_THROW(c.validate());
  c = mini_profile();
  c.fdmt.image_size = 64;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(parse_fusion("fancy"), Error);
  EXPECT_EQ(parse_fusion(fusion_name(FusionMode::SelfAttention)), FusionMode::SelfAttention);
  EXPECT_THROW(profile_by_name("huge"), Error);
}

TEST(Detector, JsonRoundTrip) {
  auto c = paper_profile();
  c.fusion = FusionMode::Concat;
  c.mda_scale = AttentionScale::RgbChannels;
  c.seed = 99;
  const auto back = DetectorConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Detector, InjectionIndexFuzz) {
  Rng rng(6);
  for (int k = 1; k < 6; ++k) {
    auto c = mini_profile();
    c.backbone.injection_index = k;
    Detector d(c);
    const double p = d.classify(random_image(rng, 32));
    EXPECT_TRUE(std::isfinite(p)) << "injection " << k;
  }
}

TEST(Detector, BatchInvariance) {
  // Scores from a parallel batched evaluation equal single-image classification.
  data::DatasetSpec spec;
  spec.seed = 3;
  spec.count = 40;
  const auto ds = data::generate_dataset(spec);
  TrainConfig tc;
  Detector d(tc.detector_config());
  const auto serial = evaluate(d, tc, ds, data::Split::Train, 1);
  const auto parallel = evaluate(d, tc, ds, data::Split::Train, 3);
  EXPECT_EQ(serial, parallel);
  const auto idx = ds.indices(data::Split::Train);
  ASSERT_EQ(serial.scores.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(serial.scores[i], d.classify(ds.records[idx[i]].image));
}

TEST(Detector, GradientsOfTotalLossMatchFiniteDifferences) {
  for (auto mode : {FusionMode::Mda, FusionMode::Concat}) {
    Detector d(oracle::reduced_config(mode));
    Rng rng(7);
    // Lift parameters off their init so no gradient is trivially small.
    for (int id = 0; id < d.params().size(); ++id)
      for (auto& v : d.params().at(id).value) v += 0.2 * rng.normal();
    const auto img = random_image(rng, 8);
    const std::vector<double> target = {0.2, 0.9, 0.0, 0.6};
    auto build = [&](ag::Tape& t) {
      auto out = d.forward(t, img);
      auto ce = ag::cross_entropy(t, out.logits, 1);
      auto tv = t.constant(4, 1, target);
      return loss::total_loss(t, ce, loss::ssim_loss(t, out.depth, tv), loss::patch_mse(t, out.depth, tv));
    };
    std::vector<int> ids(static_cast<std::size_t>(d.params().size()));
    std::iota(ids.begin(), ids.end(), 0);
    const auto r = oracle::check_param_grads(d.params(), build, ids, 4);
    EXPECT_LT(r.max_rel, 1e-4) << fusion_name(mode);
  }
}

TEST(Detector, LossDecreasesOnSeparableBatch) {
  auto cfg = mini_profile();
  cfg.use_fdmt = false;
  cfg.fusion = FusionMode::None;
  Detector d(cfg);
  Rng rng(8);
  std::vector<synth::Image> imgs;
  std::vector<int> labels;
  for (int i = 0; i < 8; ++i) {
    auto img = random_image(rng, 32);
    const int label = i % 2;
    // Class 1 has a bright square in the centre.
    if (label)
      for (int y = 10; y < 22; ++y)
        for (int x = 10; x < 22; ++x)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = 1.0f;
    imgs.push_back(img);
    labels.push_back(label);
  }
  Adam opt(d.params(), 1e-3, 0.0);
  double first = 0, last = 0;
  for (int step = 0; step < 50; ++step) {
    auto grads = d.params().zeros_like();
    double total = 0;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      ag::Tape t;
      auto l = ag::scale(t, ag::cross_entropy(t, d.forward(t, imgs[i]).logits, labels[i]), 1.0 / 8);
      total += t.scalar(l);
      t.backward(l);
      t.accumulate_param_grads(grads);
    }
    if (step == 0) first = total;
    last = total;
    opt.step(d.params(), grads);
  }
  EXPECT_NEAR(first, std::log(2.0), 0.05);
  EXPECT_LT(last, 0.5 * first);
}
