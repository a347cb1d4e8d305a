#pragma once

// Procedural face-like samples. A real sample is a shaded dome on a noisy
// background whose shading agrees with its depth; a fake sample is the same
// render with an interior region re-rendered under an inconsistent light,
// tint and texture, marked by the fake mask.

#include <cstdint>
#include <string_view>
#include <vector>

#include "depthforensics/ground_truth.hpp"

namespace dfx::synth {

enum class Label : std::uint8_t { Real = 0, Fake = 1 };
enum class Quality : std::uint8_t { High = 0, Low = 1 };

Quality parse_quality(std::string_view name);
const char* quality_name(Quality q);

struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // HWC, 3 channels, values in [0, 1]

  static constexpr int kChannels = 3;
  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * kChannels + c]; }
  bool operator==(const Image&) const = default;
};

struct SampleRecord {
  std::uint32_t id = 0;
  Image image;
  gt::FakeMask mask;
  gt::DepthMap depth;                // oracle depth before composition
  gt::GroundTruthDepth ground_truth;  // composed with `lambda`
  int lambda = gt::kDefaultLambda;
  Label label = Label::Real;
  std::uint64_t seed = 0;
  Quality quality = Quality::High;

  bool operator==(const SampleRecord&) const = default;
};

struct GeneratorConfig {
  int image_size = 32;
  int lambda = gt::kDefaultLambda;
  Quality quality = Quality::High;
  double min_fake_fraction = 0.05;  // of the face area
  double max_fake_fraction = 0.25;
  double texture_noise = 0.03;
  double artifact_strength = 1.5;

  void validate() const;
};

SampleRecord generate_real_sample(std::uint64_t seed, const GeneratorConfig& config = {});
SampleRecord generate_fake_sample(std::uint64_t seed, const GeneratorConfig& config = {});

// Blur followed by uniform quantization; both strengths depend on the level.
Image degrade_quality(const Image& image, Quality level);
Image quantize(const Image& image, int levels);
int quantization_levels(Quality level);
double psnr(const Image& a, const Image& b);

}  // namespace dfx::synth
