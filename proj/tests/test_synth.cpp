#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "depthforensics/dataset.hpp"
#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"
#include "depthforensics/synth.hpp"

using namespace dfx;
using namespace dfx::synth;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dfx_test_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int mask_sum(const gt::FakeMask& m) {
  int s = 0;
  for (auto v : m.values) s += v;
  return s;
}

}  // namespace

TEST(Synth, RealAndFakeLabelsAgreeWithMasks) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto r = generate_real_sample(seed);
    EXPECT_EQ(r.label, Label::Real);
    EXPECT_EQ(mask_sum(r.mask), 0);
    EXPECT_EQ(r.ground_truth, gt::compose_gt_depth(r.depth, r.mask, r.lambda));
    const auto f = generate_fake_sample(seed);
    EXPECT_EQ(f.label, Label::Fake);
    EXPECT_GT(mask_sum(f.mask), 0);
    for (std::size_t i = 0; i < f.mask.values.size(); ++i)
      if (f.mask.values[i]) EXPECT_EQ(f.ground_truth.values[i], 0);
    EXPECT_EQ(f.ground_truth, gt::compose_gt_depth(f.depth, f.mask, f.lambda));
    for (float v : f.image.data) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Synth, Deterministic) {
  EXPECT_EQ(generate_fake_sample(17), generate_fake_sample(17));
  EXPECT_EQ(generate_real_sample(17), generate_real_sample(17));
  EXPECT_NE(generate_real_sample(17).image, generate_real_sample(18).image);
}

TEST(Synth, HighQualityIsNearIdentity) {
  double worst = 1e9;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    GeneratorConfig cfg;
    cfg.image_size = 64;
    const auto r = generate_fake_sample(seed, cfg);
    worst = std::min(worst, psnr(r.image, degrade_quality(r.image, Quality::High)));
  }
  EXPECT_GT(worst, 40.0);
}

TEST(Synth, QuantizationIdempotentAndDegradeLeavesLabelsAlone) {
  const auto r = generate_fake_sample(5);
  for (auto q : {Quality::High, Quality::Low}) {
    const int levels = quantization_levels(q);
    const auto once = quantize(r.image, levels);
    EXPECT_EQ(quantize(once, levels), once);
  }
  GeneratorConfig low;
  low.quality = Quality::Low;
  const auto l = generate_fake_sample(5, low);
  EXPECT_EQ(l.mask, r.mask);
  EXPECT_EQ(l.depth, r.depth);
  EXPECT_EQ(l.ground_truth, r.ground_truth);
  EXPECT_NE(l.image, r.image);
  EXPECT_EQ(parse_quality("low"), Quality::Low);
  EXPECT_EQ(parse_quality("c40"), Quality::Low);
  EXPECT_THROW(parse_quality("medium"), Error);
  EXPECT_THROW(quantize(r.image, 1), Error);
}

TEST(Synth, GeneratorConfigErrors) {
  GeneratorConfig c;
  c.image_size = 8;
  EXPECT_THROW(generate_real_sample(1, c), Error);
  c = GeneratorConfig{};
  c.min_fake_fraction = 0.3;
  c.max_fake_fraction = 0.2;
  EXPECT_THROW(c.validate(), Error);
  c = GeneratorConfig{};
  c.artifact_strength = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Synth, PlantedSignalSeparableByLinearProbe) {
  // Logistic regression on per-patch (mean GT depth, zero-depth fraction)
  // features of 500 samples.
  const int n = 500, per_side = 8, cells = per_side * per_side, dim = 2 * cells + 1;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < n; ++i) {
    const bool fake = i % 2;
    const auto r = fake ? generate_fake_sample(1000 + i) : generate_real_sample(1000 + i);
    std::vector<double> f(dim, 0.0);
    const int ps = r.ground_truth.width / per_side;
    for (int yy = 0; yy < r.ground_truth.height; ++yy)
      for (int xx = 0; xx < r.ground_truth.width; ++xx) {
        const int c = (yy / ps) * per_side + xx / ps;
        const double v = r.ground_truth.at(yy, xx);
        f[c] += v / 255.0 / (ps * ps);
        f[cells + c] += (v == 0 ? 1.0 : 0.0) / (ps * ps);
      }
    f[dim - 1] = 1.0;
    x.push_back(f);
    y.push_back(fake);
  }
  std::vector<double> w(dim, 0.0);
  for (int it = 0; it < 300; ++it) {
    std::vector<double> g(dim, 0.0);
    for (int i = 0; i < n; ++i) {
      double z = 0;
      for (int k = 0; k < dim; ++k) z += w[k] * x[i][k];
      const double p = 1.0 / (1.0 + std::exp(-z));
      for (int k = 0; k < dim; ++k) g[k] += (p - y[i]) * x[i][k] / n;
    }
    for (int k = 0; k < dim; ++k) w[k] -= 5.0 * g[k];
  }
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    double z = 0;
    for (int k = 0; k < dim; ++k) z += w[k] * x[i][k];
    correct += (z > 0) == (y[i] == 1);
  }
  EXPECT_GT(correct, 0.9 * n);
}

TEST(Dataset, SplitsBalanceAndDeterminism) {
  data::DatasetSpec spec;
  spec.seed = 4;
  spec.count = 400;
  const auto ds = data::generate_dataset(spec);
  const auto& m = ds.manifest;
  EXPECT_EQ(m.count(data::Split::Train) + m.count(data::Split::Val) + m.count(data::Split::Test), 400);
  EXPECT_EQ(m.count(data::Split::Train), 280);
  EXPECT_EQ(m.count(data::Split::Val), 60);
  int fakes = 0;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    EXPECT_EQ(ds.records[i].id, i);
    EXPECT_EQ(ds.records[i].label, m.entries[i].label);
    EXPECT_EQ(ds.records[i].label == Label::Fake, mask_sum(ds.records[i].mask) > 0);
    fakes += ds.records[i].label == Label::Fake;
  }
  EXPECT_NEAR(fakes / 400.0, 0.5, 0.01);
  for (auto s : {data::Split::Train, data::Split::Val, data::Split::Test}) {
    int f = 0;
    for (auto i : ds.indices(s)) f += ds.records[i].label == Label::Fake;
    EXPECT_NEAR(static_cast<double>(f) / m.count(s), 0.5, 0.02) << data::split_name(s);
  }
  const auto again = data::generate_dataset(spec);
  EXPECT_EQ(again.records, ds.records);
  EXPECT_EQ(again.manifest.entries, ds.manifest.entries);
}

TEST(Dataset, WriteReadRoundTripAndCorruption) {
  data::DatasetSpec spec;
  spec.seed = 9;
  spec.count = 40;
  spec.generator.quality = Quality::Low;
  const auto ds = data::generate_dataset(spec);
  const auto dir = fresh_dir("roundtrip");
  data::write_dataset(ds, dir);
  const auto back = data::read_dataset(dir);
  EXPECT_EQ(back.records, ds.records);
  EXPECT_EQ(back.manifest.entries, ds.manifest.entries);
  EXPECT_EQ(back.manifest.spec.generator.quality, Quality::Low);

  // Flip one image byte.
  const auto victim = data::record_path(dir, ds.manifest.entries[3]);
  {
    std::fstream f(victim, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(60);
    char c;
    f.read(&c, 1);
    c ^= 0x5a;
    f.seekp(60);
    f.write(&c, 1);
  }
  try {
    data::read_dataset(dir);
    FAIL() << "corruption went unnoticed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
  }
  fs::remove_all(dir);
}

TEST(Dataset, VersionMismatchAndMissingFiles) {
  data::DatasetSpec spec;
  spec.count = 20;
  const auto ds = data::generate_dataset(spec);
  const auto dir = fresh_dir("version");
  data::write_dataset(ds, dir);
  nlohmann::json m;
  std::ifstream(dir / "manifest.json") >> m;
  m["format_version"] = 99;
  std::ofstream(dir / "manifest.json") << m.dump();
  try {
    data::read_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Format);
  }
  fs::remove_all(dir);
  try {
    data::read_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Dataset, RecordCodecRejectsGarbage) {
  auto bytes = data::encode_record(generate_fake_sample(3));
  EXPECT_EQ(data::decode_record(bytes), generate_fake_sample(3));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 7);
  EXPECT_THROW(data::decode_record(truncated), Error);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(data::decode_record(bad), Error);
}

TEST(GroundTruthFile, RoundTripAndContents) {
  data::DatasetSpec spec;
  spec.count = 30;
  const auto ds = data::generate_dataset(spec);
  const auto recs = data::make_ground_truth(ds, data::Split::Train, 50, 8);
  ASSERT_EQ(static_cast<int>(recs.size()), ds.manifest.count(data::Split::Train));
  for (const auto& r : recs) {
    EXPECT_EQ(r.rows * r.cols, 64);
    for (float v : r.values) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  const auto dir = fresh_dir("gt");
  data::write_ground_truth(ds, dir, 50, 8);
  EXPECT_TRUE(fs::exists(dir / "ground_truth.json"));
  EXPECT_EQ(data::read_ground_truth_file(dir / "train.gtb"), recs);
  EXPECT_THROW(data::make_ground_truth(ds, data::Split::Train, 50, 7), Error);
  EXPECT_THROW(data::read_ground_truth_file(dir / "nope.gtb"), Error);
  fs::remove_all(dir);
}
