#include "depthforensics/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "depthforensics/error.hpp"

namespace dfx {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string> default_variants() {
  return {"baseline", "concat_depth", "self_attention", "mda", "mda_bypassed", "inject_early", "inject_middle",
          "inject_late"};
}

TrainConfig variant_config(const TrainConfig& base, const std::string& variant) {
  TrainConfig c = base;
  const int blocks = static_cast<int>(profile_by_name(base.profile).backbone.blocks.size());
  auto full = [&] {
    c.use_fdmt = true;
    c.fusion = FusionMode::Mda;
  };
  if (variant == "baseline") {
    c.use_fdmt = false;
    c.fusion = FusionMode::None;
    c.pretrain_epochs = 0;
  } else if (variant == "concat_depth") {
    c.use_fdmt = true;
    c.fusion = FusionMode::Concat;
  } else if (variant == "self_attention") {
    c.use_fdmt = false;
    c.fusion = FusionMode::SelfAttention;
    c.pretrain_epochs = 0;
  } else if (variant == "mda") {
    full();
  } else if (variant == "mda_bypassed") {
    c.use_fdmt = true;
    c.fusion = FusionMode::None;
  } else if (variant == "inject_early") {
    full();
    c.injection_index = 1;
  } else if (variant == "inject_middle") {
    full();
    c.injection_index = blocks / 2;
  } else if (variant == "inject_late") {
    full();
    c.injection_index = blocks - 1;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown ablation variant '" + variant + "'");
  }
  return c;
}

AblationConfig AblationConfig::from_json(const json& j) {
  require(j.is_object(), "ablation config: expected a JSON object");
  AblationConfig a;
  json base = j.contains("base") ? j.at("base") : j;
  if (!j.contains("base")) {
    base.erase("variants");
    base.erase("seeds");
  }
  a.base = TrainConfig::from_json(base);
  try {
    if (j.contains("variants")) a.variants = j.at("variants").get<std::vector<std::string>>();
    a.seeds = j.value("seeds", a.seeds);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("ablation config: ") + e.what());
  }
  require(!a.variants.empty(), "ablation config: no variants");
  require(a.seeds >= 1, "ablation config: seeds must be positive");
  for (const auto& v : a.variants) variant_config(a.base, v).validate();
  return a;
}

void mean_std(const std::vector<double>& v, double& mean, double& std) {
  mean = std = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return;
  for (double x : v) std += (x - mean) * (x - mean);
  std = std::sqrt(std / static_cast<double>(v.size() - 1));
}

const AblationRow* AblationTable::find(const std::string& variant) const {
  for (const auto& r : rows)
    if (r.variant == variant) return &r;
  return nullptr;
}

json AblationTable::to_json() const {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"variant", r.variant},
                   {"ACC", {{"mean", r.accuracy_mean}, {"std", r.accuracy_std}, {"seeds", r.accuracy}}},
                   {"AUC", {{"mean", r.auc_mean}, {"std", r.auc_std}, {"seeds", r.auc}}},
                   {"finite", r.finite}});
  return out;
}

std::string AblationTable::to_text() const {
  std::ostringstream o;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %18s %18s\n", "variant", "ACC", "AUC");
  o << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %8.4f +- %6.4f %8.4f +- %6.4f\n", r.variant.c_str(), r.accuracy_mean,
                  r.accuracy_std, r.auc_mean, r.auc_std);
    o << line;
  }
  return o.str();
}

AblationTable ablate(const AblationConfig& config, const data::Dataset& dataset, AblationProgressFn progress,
                     void* ctx) {
  AblationTable table;
  // Variants that resolve to the same configuration share their runs.
  std::map<std::string, MetricsReport> cache;
  for (const auto& variant : config.variants) {
    AblationRow row;
    row.variant = variant;
    for (int s = 0; s < config.seeds; ++s) {
      TrainConfig c = variant_config(config.base, variant);
      c.seed = config.base.seed + static_cast<std::uint64_t>(s);
      const std::string key = c.hash();
      auto it = cache.find(key);
      if (it == cache.end()) {
        MetricsReport rep;
        try {
          auto res = train(c, dataset);
          rep = evaluate(res.model, c, dataset, data::Split::Test, c.workers);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::Numeric) throw;
          rep.accuracy = rep.auc = std::nan("");
        }
        it = cache.emplace(key, rep).first;
      }
      const auto& rep = it->second;
      if (progress) progress(variant, s, rep, ctx);
      row.finite = row.finite && std::isfinite(rep.accuracy) && std::isfinite(rep.auc);
      row.accuracy.push_back(rep.accuracy);
      row.auc.push_back(rep.auc);
    }
    mean_std(row.accuracy, row.accuracy_mean, row.accuracy_std);
    mean_std(row.auc, row.auc_mean, row.auc_std);
    table.rows.push_back(row);
  }
  return table;
}

// ---- visualization -------------------------------------------------------

json VisualStats::to_json() const {
  return {{"panels", panels},
          {"fake_samples", fake_samples},
          {"fake_depth_contrast", fake_depth_contrast},
          {"fake_depth_contrast_rate",
           fake_samples > 0 ? static_cast<double>(fake_depth_contrast) / fake_samples : 0.0},
          {"files", files}};
}

void masked_depth_means(const std::vector<double>& patch_depth, int per_side, const gt::FakeMask& mask,
                        double& inside, double& outside) {
  const gt::PatchGrid grid(mask.height, mask.width, per_side);
  require(patch_depth.size() == static_cast<std::size_t>(grid.patch_count()), "masked_depth_means: size mismatch");
  double sum_in = 0, sum_out = 0;
  long n_in = 0, n_out = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const double d = patch_depth[static_cast<std::size_t>((y / grid.patch_height()) * per_side + x / grid.patch_width())];
      if (mask.at(y, x)) {
        sum_in += d;
        ++n_in;
      } else {
        sum_out += d;
        ++n_out;
      }
    }
  inside = n_in ? sum_in / static_cast<double>(n_in) : 0.0;
  outside = n_out ? sum_out / static_cast<double>(n_out) : 0.0;
}

namespace {

struct Rgb8 {
  unsigned char r, g, b;
};

Rgb8 gray(double v) {
  const auto c = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  return {c, c, c};
}

// Blue -> cyan -> yellow -> red.
Rgb8 heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const double r = std::clamp(2.0 * v - 0.5, 0.0, 1.0), g = std::clamp(v < 0.5 ? 2.0 * v : 2.0 - 2.0 * v + 0.5, 0.0, 1.0),
               b = std::clamp(1.0 - 2.0 * v, 0.0, 1.0);
  return {static_cast<unsigned char>(r * 255), static_cast<unsigned char>(g * 255), static_cast<unsigned char>(b * 255)};
}

void write_ppm(const fs::path& file, int width, int height, const std::vector<Rgb8>& px) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot create '" + file.string() + "'");
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size() * 3));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + file.string() + "'");
}

}  // namespace

VisualStats visualize(const Detector& model, const data::Dataset& dataset, data::Split split, int n,
                      const fs::path& out_dir, int lambda) {
  require(n >= 1, "visualize: n must be positive");
  require(model.fdmt() != nullptr, "visualize: the model has no depth transformer");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create '" + out_dir.string() + "': " + ec.message());

  const auto idx = dataset.indices(split);
  require(!idx.empty(), std::string("visualize: split '") + data::split_name(split) + "' is empty");
  const int per_side = model.config().fdmt.patches_per_side;
  const auto inj = model.backbone().injection_shape();
  VisualStats stats;
  const int count = std::min<int>(n, static_cast<int>(idx.size()));
  for (int k = 0; k < count; ++k) {
    const auto& r = dataset.records[idx[static_cast<std::size_t>(k)]];
    ag::Tape t;
    const auto out = model.forward(t, r.image);
    const auto depth_span = t.value(out.depth);
    const std::vector<double> depth(depth_span.begin(), depth_span.end());

    // Channel-mean magnitude of the fused features, scaled to its maximum.
    const auto feat = t.value(out.fused_features);
    std::vector<double> act(static_cast<std::size_t>(inj.positions()), 0.0);
    for (int c = 0; c < inj.channels; ++c)
      for (int p = 0; p < inj.positions(); ++p)
        act[static_cast<std::size_t>(p)] += std::abs(feat[static_cast<std::size_t>(c) * inj.positions() + p]) / inj.channels;
    const double amax = std::max(1e-12, *std::max_element(act.begin(), act.end()));

    const auto gt_depth = lambda == r.lambda ? r.ground_truth : gt::compose_gt_depth(r.depth, r.mask, lambda);
    const int s = r.image.height, gap = 2, width = 4 * s + 3 * gap;
    std::vector<Rgb8> px(static_cast<std::size_t>(width) * s, Rgb8{255, 255, 255});
    const int ph = s / per_side, pw = r.image.width / per_side;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        auto at = [&](int tile) -> Rgb8& { return px[static_cast<std::size_t>(y) * width + tile * (s + gap) + x]; };
        at(0) = {static_cast<unsigned char>(std::lround(r.image.at(y, x, 0) * 255.0f)),
                 static_cast<unsigned char>(std::lround(r.image.at(y, x, 1) * 255.0f)),
                 static_cast<unsigned char>(std::lround(r.image.at(y, x, 2) * 255.0f))};
        at(1) = gray(gt_depth.at(y, x) / 255.0);
        at(2) = gray(depth[static_cast<std::size_t>((y / ph) * per_side + x / pw)]);
        const int fy = y * inj.height / s, fx = x * inj.width / s;
        at(3) = heat(act[static_cast<std::size_t>(fy) * inj.width + fx] / amax);
      }
    char name[64];
    std::snprintf(name, sizeof name, "sample_%06u_%s.ppm", r.id, r.label == synth::Label::Fake ? "fake" : "real");
    write_ppm(out_dir / name, width, s, px);
    stats.files.push_back((out_dir / name).string());
    ++stats.panels;

    if (r.label == synth::Label::Fake) {
      double in = 0, outside = 0;
      masked_depth_means(depth, per_side, r.mask, in, outside);
      ++stats.fake_samples;
      stats.fake_depth_contrast += in < outside;
    }
  }
  return stats;
}

}  // namespace dfx
