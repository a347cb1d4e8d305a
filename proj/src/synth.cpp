#include "depthforensics/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"

namespace dfx::synth {

namespace {

struct Rgb {
  double r, g, b;
};

struct Scene {
  gt::FaceGeometry face;
  double light_x, light_y;
  Rgb skin;
  Rgb background;
  double bg_gradient_x, bg_gradient_y;
  double relief;  // dome height in pixels for shading
};

Scene sample_scene(Rng& rng, int size, int lambda) {
  Scene s{};
  const double n = size;
  s.face.center_x = n * rng.uniform(0.45, 0.55);
  s.face.center_y = n * rng.uniform(0.45, 0.55);
  s.face.axis_x = n * rng.uniform(0.28, 0.38);
  s.face.axis_y = n * rng.uniform(0.32, 0.40);
  s.face.peak = rng.uniform_int(150, gt::kMaxDepthValue - lambda);
  s.light_x = rng.uniform(-0.7, 0.7);
  s.light_y = rng.uniform(-0.7, 0.7);
  const double r = rng.uniform(0.55, 0.9);
  s.skin = {r, r * rng.uniform(0.65, 0.85), r * rng.uniform(0.5, 0.75)};
  s.background = {rng.uniform(0.05, 0.6), rng.uniform(0.05, 0.6), rng.uniform(0.05, 0.6)};
  s.bg_gradient_x = rng.uniform(-0.15, 0.15);
  s.bg_gradient_y = rng.uniform(-0.15, 0.15);
  s.relief = 0.8 * std::min(s.face.axis_x, s.face.axis_y);
  return s;
}

// Lambertian shading of the continuous dome at pixel (x, y).
double dome_shading(const Scene& s, double x, double y, double lx, double ly) {
  const double u = (x - s.face.center_x) / s.face.axis_x, v = (y - s.face.center_y) / s.face.axis_y;
  const double root = std::sqrt(std::max(1.0 - u * u - v * v, 0.0025));
  const double nx = s.relief * u / (s.face.axis_x * root), ny = s.relief * v / (s.face.axis_y * root);
  const double nn = std::sqrt(nx * nx + ny * ny + 1.0), ln = std::sqrt(lx * lx + ly * ly + 1.0);
  const double lambert = (nx * lx + ny * ly + 1.0) / (nn * ln);
  return 0.3 + 0.7 * std::max(0.0, lambert);
}

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

void render(const Scene& s, const gt::DepthMap& depth, double noise, Rng& rng, Image& img) {
  const int n = img.height;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      double c[3];
      if (depth.at(y, x) > 0) {
        const double sh = dome_shading(s, x, y, s.light_x, s.light_y);
        c[0] = s.skin.r * sh;
        c[1] = s.skin.g * sh;
        c[2] = s.skin.b * sh;
      } else {
        const double gx = s.bg_gradient_x * (x - n / 2.0) / n, gy = s.bg_gradient_y * (y - n / 2.0) / n;
        c[0] = s.background.r + gx + gy;
        c[1] = s.background.g + gx + gy;
        c[2] = s.background.b + gx + gy;
      }
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = clamp01(c[ch] + noise * rng.normal());
    }
}

struct Base {
  Scene scene;
  SampleRecord record;
};

Base make_real(std::uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  Base b;
  b.scene = sample_scene(rng, cfg.image_size, cfg.lambda);
  SampleRecord& r = b.record;
  r.seed = seed;
  r.lambda = cfg.lambda;
  r.quality = cfg.quality;
  r.label = Label::Real;
  r.depth = gt::synthetic_face_depth(cfg.image_size, cfg.image_size, b.scene.face, cfg.lambda);
  r.mask = gt::empty_mask(cfg.image_size, cfg.image_size);
  r.image.height = r.image.width = cfg.image_size;
  r.image.data.assign(static_cast<std::size_t>(cfg.image_size) * cfg.image_size * Image::kChannels, 0.0f);
  render(b.scene, r.depth, cfg.texture_noise, rng, r.image);
  return b;
}

void finish(SampleRecord& r) {
  r.image = degrade_quality(r.image, r.quality);
  r.ground_truth = gt::compose_gt_depth(r.depth, r.mask, r.lambda);
}

}  // namespace

Quality parse_quality(std::string_view name) {
  if (name == "high" || name == "c23") return Quality::High;
  if (name == "low" || name == "c40") return Quality::Low;
  throw Error(ErrorCode::InvalidArgument, "unknown quality level '" + std::string(name) + "' (expected high or low)");
}

const char* quality_name(Quality q) { return q == Quality::High ? "high" : "low"; }

void GeneratorConfig::validate() const {
  require(image_size >= 16, "generator: image size must be at least 16");
  require(lambda > 0 && lambda <= gt::kMaxDepthValue - 150, "generator: lambda must lie in [1, 105]");
  require(min_fake_fraction > 0.0 && min_fake_fraction <= max_fake_fraction && max_fake_fraction < 0.5,
          "generator: invalid fake-region fraction range");
  require(texture_noise >= 0.0 && artifact_strength >= 0.0, "generator: noise and strength must be non-negative");
}

SampleRecord generate_real_sample(std::uint64_t seed, const GeneratorConfig& cfg) {
  Base b = make_real(seed, cfg);
  finish(b.record);
  return std::move(b.record);
}

SampleRecord generate_fake_sample(std::uint64_t seed, const GeneratorConfig& cfg) {
  Base b = make_real(seed, cfg);
  SampleRecord& r = b.record;
  const Scene& s = b.scene;
  Rng rng = Rng(seed).fork(0xFA4E);
  r.label = Label::Fake;

  // Region in face-normalised coordinates (u, v), fully inside the unit disk.
  const bool ellipse = rng.uniform() < 0.5;
  const double frac = rng.uniform(cfg.min_fake_fraction, cfg.max_fake_fraction);
  const double aspect = rng.uniform(0.7, 1.4);
  double ru, rv, reach;
  if (ellipse) {
    ru = std::sqrt(frac * aspect);
    rv = std::sqrt(frac / aspect);
    reach = std::max(ru, rv);
  } else {
    // Rectangle with half-sides (ru, rv) and area frac * pi.
    ru = std::sqrt(frac * std::numbers::pi / 4.0 * aspect);
    rv = std::sqrt(frac * std::numbers::pi / 4.0 / aspect);
    reach = std::hypot(ru, rv);
  }
  const double rho = rng.uniform() * std::max(0.0, 0.95 - reach);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double u0 = rho * std::cos(theta), v0 = rho * std::sin(theta);

  const int n = cfg.image_size;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (r.depth.at(y, x) == 0) continue;
      const double du = (x - s.face.center_x) / s.face.axis_x - u0, dv = (y - s.face.center_y) / s.face.axis_y - v0;
      const bool inside = ellipse ? (du * du) / (ru * ru) + (dv * dv) / (rv * rv) < 1.0
                                  : std::abs(du) < ru && std::abs(dv) < rv;
      if (inside) r.mask.at(y, x) = 1;
    }
  bool any = std::any_of(r.mask.values.begin(), r.mask.values.end(), [](auto v) { return v != 0; });
  if (!any) {
    const int cx = static_cast<int>(std::lround(s.face.center_x + u0 * s.face.axis_x));
    const int cy = static_cast<int>(std::lround(s.face.center_y + v0 * s.face.axis_y));
    r.mask.at(cy, cx) = 1;
  }

  // Inconsistent re-render: mirrored light, shifted tint, smoother texture.
  const double k = cfg.artifact_strength;
  const double lx = -s.light_x + rng.uniform(-0.3, 0.3), ly = -s.light_y + rng.uniform(-0.3, 0.3);
  const Rgb tint{1.0 + k * rng.uniform(-0.08, 0.08), 1.0 + k * rng.uniform(-0.08, 0.08),
                 1.0 + k * rng.uniform(-0.08, 0.08)};
  const double noise = cfg.texture_noise * (1.0 - k * rng.uniform(0.5, 0.8));
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (!r.mask.at(y, x)) continue;
      const double sh_true = dome_shading(s, x, y, s.light_x, s.light_y);
      const double sh_fake = dome_shading(s, x, y, lx, ly);
      const double sh = sh_true + k * (sh_fake - sh_true);
      const double c[3] = {s.skin.r * tint.r * sh, s.skin.g * tint.g * sh, s.skin.b * tint.b * sh};
      for (int ch = 0; ch < 3; ++ch) r.image.at(y, x, ch) = clamp01(c[ch] + std::max(0.0, noise) * rng.normal());
    }
  finish(r);
  return std::move(b.record);
}

int quantization_levels(Quality level) { return level == Quality::High ? 256 : 64; }

Image quantize(const Image& image, int levels) {
  require(levels >= 2, "quantize: at least two levels are required");
  Image out = image;
  const double k = levels - 1;
  for (float& v : out.data) v = static_cast<float>(std::round(std::clamp<double>(v, 0.0, 1.0) * k) / k);
  return out;
}

Image degrade_quality(const Image& image, Quality level) {
  require(level == Quality::High || level == Quality::Low, "degrade_quality: unknown level");
  require(image.data.size() == static_cast<std::size_t>(image.height) * image.width * Image::kChannels,
          "degrade_quality: malformed image");
  const double mix = level == Quality::High ? 0.1 : 0.6;
  Image blurred = image;
  static constexpr double kw[3] = {0.25, 0.5, 0.25};
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < Image::kChannels; ++c) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, image.height - 1), xx = std::clamp(x + dx, 0, image.width - 1);
            acc += kw[dy + 1] * kw[dx + 1] * image.at(yy, xx, c);
          }
        blurred.at(y, x, c) = static_cast<float>((1.0 - mix) * image.at(y, x, c) + mix * acc);
      }
  return quantize(blurred, quantization_levels(level));
}

double psnr(const Image& a, const Image& b) {
  require(a.height == b.height && a.width == b.width && a.data.size() == b.data.size(), "psnr: size mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) se += (double(a.data[i]) - b.data[i]) * (double(a.data[i]) - b.data[i]);
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace dfx::synth
