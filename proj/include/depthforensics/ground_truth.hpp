#pragma once

// Ground-truth depth supervision: per-pixel composition of an oracle depth
// map with a fake-region mask, reduction to per-patch targets, and the
// procedural dome oracle that stands in for a learned face depth estimator.

#include <cstdint>
#include <span>
#include <vector>

namespace dfx::gt {

template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> values;

  T& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }
  bool operator==(const Grid&) const = default;
};

// Oracle depth in [0, 255]; background is exactly 0.
struct DepthMap : Grid<std::uint8_t> {};
// Strictly binary; all-zero for real samples.
struct FakeMask : Grid<std::uint8_t> {};
// 0 on the fake region, >= lambda elsewhere.
struct GroundTruthDepth : Grid<std::uint8_t> {};

struct PatchDepthVector {
  std::vector<double> values;
  bool operator==(const PatchDepthVector&) const = default;
};

class PatchGrid {
 public:
  PatchGrid(int image_height, int image_width, int patches_per_side);

  int image_height() const { return image_height_; }
  int image_width() const { return image_width_; }
  int patches_per_side() const { return per_side_; }
  int patch_height() const { return image_height_ / per_side_; }
  int patch_width() const { return image_width_ / per_side_; }
  int patch_count() const { return per_side_ * per_side_; }

  struct Bounds {
    int y0, x0, y1, x1;  // half-open
  };
  // Raster order: p = row * patches_per_side + col.
  Bounds bounds(int p) const;

 private:
  int image_height_;
  int image_width_;
  int per_side_;
};

inline constexpr int kDefaultLambda = 50;
inline constexpr int kMaxDepthValue = 255;

int clamp_overflow(int v);

GroundTruthDepth compose_gt_depth(const DepthMap& depth, const FakeMask& mask, int lambda);

// Unnormalized per-patch means in [0, 255].
PatchDepthVector patch_average(const GroundTruthDepth& gt, const PatchGrid& grid);

PatchDepthVector normalize_patch_depth(const PatchDepthVector& v);
PatchDepthVector denormalize_patch_depth(const PatchDepthVector& v);

// Soft masks are binarized at 0.5 on ingestion.
FakeMask threshold_mask(std::span<const float> soft, int height, int width);
FakeMask empty_mask(int height, int width);

struct FaceGeometry {
  double center_x = 0.0;
  double center_y = 0.0;
  double axis_x = 0.0;
  double axis_y = 0.0;
  int peak = 200;
};

// Smooth dome inside the ellipse, >= 1 on the face and exactly 0 outside.
// max_lambda bounds the peak so that peak + lambda never overflows.
DepthMap synthetic_face_depth(int height, int width, const FaceGeometry& face, int max_lambda = kDefaultLambda);

}  // namespace dfx::gt
