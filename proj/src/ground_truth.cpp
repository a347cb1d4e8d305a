#include "depthforensics/ground_truth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "depthforensics/error.hpp"

namespace dfx::gt {

PatchGrid::PatchGrid(int image_height, int image_width, int patches_per_side)
    : image_height_(image_height), image_width_(image_width), per_side_(patches_per_side) {
  require(image_height > 0 && image_width > 0, "patch grid: image dimensions must be positive");
  require(patches_per_side > 0, "patch grid: patches per side must be positive");
  require(image_height % patches_per_side == 0 && image_width % patches_per_side == 0,
          "patch grid: image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
              " is not divisible by " + std::to_string(patches_per_side) + " patches per side");
}

PatchGrid::Bounds PatchGrid::bounds(int p) const {
  require(p >= 0 && p < patch_count(), "patch grid: patch index out of range");
  const int r = p / per_side_, c = p % per_side_;
  return {r * patch_height(), c * patch_width(), (r + 1) * patch_height(), (c + 1) * patch_width()};
}

int clamp_overflow(int v) {
  require(v >= 0, "clamp_overflow: negative depth " + std::to_string(v));
  return std::min(v, kMaxDepthValue);
}

GroundTruthDepth compose_gt_depth(const DepthMap& depth, const FakeMask& mask, int lambda) {
  require(lambda > 0, "compose_gt_depth: lambda must be positive");
  require(depth.height == mask.height && depth.width == mask.width && depth.size() == mask.size(),
          "compose_gt_depth: depth and mask dimensions differ");
  GroundTruthDepth out;
  out.height = depth.height;
  out.width = depth.width;
  out.values.resize(depth.size());
  for (auto m : mask.values) require(m <= 1, "compose_gt_depth: mask must be binary");
  for (std::size_t i = 0; i < depth.size(); ++i)
    out.values[i] = mask.values[i] ? 0 : static_cast<std::uint8_t>(clamp_overflow(depth.values[i] + lambda));
  return out;
}

PatchDepthVector patch_average(const GroundTruthDepth& gt, const PatchGrid& grid) {
  require(gt.height == grid.image_height() && gt.width == grid.image_width(),
          "patch_average: grid does not match the depth map");
  PatchDepthVector out;
  out.values.resize(grid.patch_count());
  const double area = static_cast<double>(grid.patch_height()) * grid.patch_width();
  for (int p = 0; p < grid.patch_count(); ++p) {
    const auto b = grid.bounds(p);
    long sum = 0;
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) sum += gt.at(y, x);
    out.values[p] = static_cast<double>(sum) / area;
  }
  return out;
}

PatchDepthVector normalize_patch_depth(const PatchDepthVector& v) {
  PatchDepthVector out;
  out.values.reserve(v.values.size());
  for (double x : v.values) {
    require(x >= 0.0 && x <= kMaxDepthValue, "normalize_patch_depth: entry outside [0, 255]");
    out.values.push_back(x / kMaxDepthValue);
  }
  return out;
}

PatchDepthVector denormalize_patch_depth(const PatchDepthVector& v) {
  PatchDepthVector out;
  out.values.reserve(v.values.size());
  for (double x : v.values) {
    require(x >= 0.0 && x <= 1.0, "denormalize_patch_depth: entry outside [0, 1]");
    out.values.push_back(x * kMaxDepthValue);
  }
  return out;
}

FakeMask threshold_mask(std::span<const float> soft, int height, int width) {
  require(soft.size() == static_cast<std::size_t>(height) * width, "threshold_mask: size mismatch");
  FakeMask m;
  m.height = height;
  m.width = width;
  m.values.resize(soft.size());
  for (std::size_t i = 0; i < soft.size(); ++i) m.values[i] = soft[i] >= 0.5f ? 1 : 0;
  return m;
}

FakeMask empty_mask(int height, int width) {
  FakeMask m;
  m.height = height;
  m.width = width;
  m.values.assign(static_cast<std::size_t>(height) * width, 0);
  return m;
}

DepthMap synthetic_face_depth(int height, int width, const FaceGeometry& f, int max_lambda) {
  require(height > 0 && width > 0, "synthetic_face_depth: image dimensions must be positive");
  require(f.axis_x > 0.0 && f.axis_y > 0.0, "synthetic_face_depth: degenerate ellipse axes");
  require(f.peak >= 1 && f.peak <= kMaxDepthValue - max_lambda,
          "synthetic_face_depth: peak must lie in [1, " + std::to_string(kMaxDepthValue - max_lambda) + "]");
  require(f.center_x - f.axis_x >= 0.0 && f.center_x + f.axis_x <= width - 1 && f.center_y - f.axis_y >= 0.0 &&
              f.center_y + f.axis_y <= height - 1,
          "synthetic_face_depth: ellipse does not fit inside the image");
  DepthMap d;
  d.height = height;
  d.width = width;
  d.values.assign(static_cast<std::size_t>(height) * width, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = (x - f.center_x) / f.axis_x, v = (y - f.center_y) / f.axis_y;
      const double r2 = u * u + v * v;
      if (r2 >= 1.0) continue;
      const long z = std::lround(f.peak * std::sqrt(1.0 - r2));
      d.at(y, x) = static_cast<std::uint8_t>(std::max(1L, z));
    }
  return d;
}

}  // namespace dfx::gt
