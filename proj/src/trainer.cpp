#include "depthforensics/trainer.hpp"

#include <zlib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "depthforensics/error.hpp"
#include "depthforensics/rng.hpp"

namespace dfx {

using nlohmann::json;

namespace {
constexpr std::uint64_t kShuffleStream = 0x5EED0DA7A;
}

void TrainConfig::validate() const {
  require(learning_rate > 0 && std::isfinite(learning_rate), "train: learning_rate must be positive");
  require(weight_decay >= 0 && std::isfinite(weight_decay), "train: weight_decay must be non-negative");
  require(batch_size >= 1, "train: batch_size must be positive");
  require(epochs >= 1, "train: epochs must be positive");
  require(weights.alpha >= 0 && weights.beta >= 0, "train: loss weights must be non-negative");
  require(lambda > 0 && lambda < gt::kMaxDepthValue, "train: lambda must lie in (0, 255)");
  require(pretrain_epochs >= 0, "train: pretrain_epochs must be non-negative");
  require(pretrain_epochs == 0 || use_fdmt, "train: pretraining needs the depth transformer");
  require(workers >= 1, "train: workers must be positive");
  require(max_train_samples >= 0, "train: max_train_samples must be non-negative");
  require(fdmt_blocks >= 0, "train: fdmt_blocks must be non-negative");
  detector_config().validate();
}

DetectorConfig TrainConfig::detector_config() const {
  DetectorConfig c = profile_by_name(profile);
  if (injection_index >= 0) c.backbone.injection_index = injection_index;
  if (fdmt_blocks > 0) c.fdmt.blocks = fdmt_blocks;
  c.use_fdmt = use_fdmt;
  c.fusion = fusion;
  c.seed = seed;
  return c;
}

json TrainConfig::to_json() const {
  return {{"profile", profile},
          {"learning_rate", learning_rate},
          {"weight_decay", weight_decay},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"seed", seed},
          {"alpha", weights.alpha},
          {"beta", weights.beta},
          {"lambda", lambda},
          {"injection_index", injection_index},
          {"fdmt_blocks", fdmt_blocks},
          {"use_fdmt", use_fdmt},
          {"fusion", fusion_name(fusion)},
          {"pretrain_epochs", pretrain_epochs},
          {"workers", workers},
          {"max_train_samples", max_train_samples},
          {"data_dir", data_dir},
          {"out_dir", out_dir}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  require(j.is_object(), "config: expected a JSON object");
  static const char* known[] = {"profile", "learning_rate", "weight_decay", "batch_size", "epochs",
                                "seed", "alpha", "beta", "lambda", "injection_index", "fdmt_blocks",
                                "use_fdmt", "fusion", "pretrain_epochs", "workers", "max_train_samples",
                                "data_dir", "out_dir"};
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    require(ok, "config: unknown key '" + key + "'");
  }
  TrainConfig c;
  try {
    c.profile = j.value("profile", c.profile);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.weights.alpha = j.value("alpha", c.weights.alpha);
    c.weights.beta = j.value("beta", c.weights.beta);
    c.lambda = j.value("lambda", c.lambda);
    c.injection_index = j.value("injection_index", c.injection_index);
    c.fdmt_blocks = j.value("fdmt_blocks", c.fdmt_blocks);
    c.use_fdmt = j.value("use_fdmt", c.use_fdmt);
    c.fusion = parse_fusion(j.value("fusion", std::string(fusion_name(c.fusion))));
    c.pretrain_epochs = j.value("pretrain_epochs", c.pretrain_epochs);
    c.workers = j.value("workers", c.workers);
    c.max_train_samples = j.value("max_train_samples", c.max_train_samples);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::Io, "cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Format, "config " + file.string() + ": " + e.what());
  }
  return from_json(j);
}

std::string TrainConfig::hash() const {
  json j = to_json();
  j.erase("data_dir");
  j.erase("out_dir");
  j.erase("workers");
  const std::string s = j.dump();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

json RunLog::to_json() const {
  json steps_j = json::array();
  for (const auto& s : steps)
    steps_j.push_back({{"epoch", s.epoch},
                       {"step", s.step},
                       {"classification", s.classification},
                       {"ssim_loss", s.ssim_loss},
                       {"ssim", s.ssim},
                       {"patch_mse_raw", s.patch_mse_raw},
                       {"patch_mse", s.patch_mse},
                       {"total", s.total}});
  json epochs_j = json::array();
  for (const auto& e : epochs)
    epochs_j.push_back({{"epoch", e.epoch},
                        {"pretrain", e.pretrain},
                        {"train_accuracy", e.train_accuracy},
                        {"train_loss", e.train_loss},
                        {"val_accuracy", e.val_accuracy},
                        {"val_auc", e.val_auc},
                        {"wall_seconds", e.wall_seconds}});
  return {{"config_hash", config_hash}, {"seed", seed},         {"best_epoch", best_epoch},
          {"wall_seconds", wall_seconds}, {"epochs", epochs_j}, {"steps", steps_j}};
}

json MetricsReport::to_json(bool with_scores) const {
  json j = {{"split", split},
            {"count", count},
            {"ACC", accuracy},
            {"AUC", auc},
            {"losses",
             {{"classification", classification},
              {"ssim_loss", ssim_loss},
              {"ssim", ssim},
              {"patch_mse", patch_mse},
              {"total", total}}},
            {"config_hash", config_hash},
            {"seed", seed}};
  if (with_scores) {
    j["scores"] = scores;
    j["labels"] = labels;
  }
  return j;
}

std::vector<double> patch_targets(const synth::SampleRecord& r, int lambda, int patches_per_side) {
  const auto composed = lambda == r.lambda ? r.ground_truth : gt::compose_gt_depth(r.depth, r.mask, lambda);
  const gt::PatchGrid grid(composed.height, composed.width, patches_per_side);
  return gt::normalize_patch_depth(gt::patch_average(composed, grid)).values;
}

Adam::Adam(const ParamStore& store, double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps), m_(store.zeros_like()), v_(store.zeros_like()) {}

void Adam::step(ParamStore& store, const std::vector<std::vector<double>>& grads) {
  require(grads.size() == static_cast<std::size_t>(store.size()), "adam: gradient count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (int p = 0; p < store.size(); ++p) {
    auto& w = store.at(p).value;
    auto& m = m_[p];
    auto& v = v_[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + wd_ * w[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

namespace {

struct SampleStats {
  double classification = 0;
  double ssim = 0;
  double ssim_loss = 0;
  double patch_mse = 0;
  double fake_prob = 0.5;
};

// One forward (and optionally backward) pass. The loss is divided by
// `batch` so that summed per-sample gradients equal the batch gradient.
SampleStats run_sample(const Detector& model, const TrainConfig& cfg, const synth::SampleRecord& r,
                       const std::vector<double>& target, bool depth_only, double batch,
                       std::vector<std::vector<double>>* grads) {
  ag::Tape t;
  SampleStats s;
  ag::Var cls, depth;
  if (depth_only) {
    depth = model.fdmt()->forward(t, model.params(), model.image_hwc(t, r.image)).depth;
  } else {
    auto out = model.forward(t, r.image);
    cls = ag::cross_entropy(t, out.logits, static_cast<int>(r.label));
    s.classification = t.scalar(cls);
    s.fake_prob = fake_probability(t, out.logits);
    depth = out.depth;
  }
  ag::Var lssim, lmse;
  if (depth.valid()) {
    auto tgt = t.constant(static_cast<int>(target.size()), 1, target);
    lssim = loss::ssim_loss(t, depth, tgt);
    lmse = loss::patch_mse(t, depth, tgt);
    s.ssim_loss = t.scalar(lssim);
    s.ssim = 1.0 - s.ssim_loss;
    s.patch_mse = t.scalar(lmse);
  }
  if (!grads) return s;

  ag::Var root;
  if (depth.valid()) {
    auto zero = t.constant(1, 1, {0.0});
    root = loss::total_loss(t, cls.valid() ? cls : zero, lssim, lmse, cfg.weights);
  } else {
    root = cls;
  }
  const double value = t.scalar(root);
  if (!std::isfinite(value))
    throw Error(ErrorCode::Numeric, "non-finite loss on sample " + std::to_string(r.id) +
                                        " (classification=" + std::to_string(s.classification) +
                                        ", ssim_loss=" + std::to_string(s.ssim_loss) +
                                        ", patch_mse=" + std::to_string(s.patch_mse) + ")");
  root = ag::scale(t, root, 1.0 / batch);
  t.backward(root);
  t.accumulate_param_grads(*grads);
  return s;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads; fn must only touch
// slot i of its outputs.
template <class Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int w = std::min(workers, n);
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
  for (int k = 0; k < w; ++k)
    threads.emplace_back([&, k] {
      try {
        for (int i = k; i < n; i += w) fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    });
  for (auto& th : threads) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

MetricsReport evaluate(const Detector& model, const TrainConfig& config, const data::Dataset& dataset,
                       data::Split split, int workers) {
  const auto idx = dataset.indices(split);
  if (idx.empty()) throw Error(ErrorCode::InvalidArgument, std::string("split '") + data::split_name(split) + "' is empty");
  const int per_side = model.config().fdmt.patches_per_side;
  const bool depth = model.fdmt() != nullptr;
  std::vector<SampleStats> stats(idx.size());
  parallel_for(static_cast<int>(idx.size()), workers, [&](int i) {
    const auto& r = dataset.records[idx[static_cast<std::size_t>(i)]];
    const auto target = depth ? patch_targets(r, config.lambda, per_side) : std::vector<double>{};
    stats[static_cast<std::size_t>(i)] = run_sample(model, config, r, target, false, 1.0, nullptr);
  });

  MetricsReport rep;
  rep.split = data::split_name(split);
  rep.count = static_cast<int>(idx.size());
  rep.config_hash = config.hash();
  rep.seed = config.seed;
  std::vector<int> pred;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = stats[i];
    rep.scores.push_back(s.fake_prob);
    rep.labels.push_back(static_cast<int>(dataset.records[idx[i]].label));
    pred.push_back(s.fake_prob >= 0.5 ? 1 : 0);
    rep.classification += s.classification;
    rep.ssim_loss += s.ssim_loss;
    rep.ssim += s.ssim;
    rep.patch_mse += s.patch_mse;
  }
  const double n = static_cast<double>(idx.size());
  rep.classification /= n;
  rep.ssim_loss /= n;
  rep.ssim /= n;
  rep.patch_mse /= n;
  rep.total = depth ? loss::total_loss(rep.classification, rep.ssim_loss, rep.patch_mse, config.weights)
                    : rep.classification;
  rep.accuracy = metrics::accuracy(pred, rep.labels);
  rep.auc = metrics::auc(rep.scores, rep.labels);
  return rep;
}

TrainResult train(const TrainConfig& config, const data::Dataset& dataset, ProgressFn progress, void* progress_ctx) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  TrainResult res{Detector(config.detector_config()), {}};
  Detector& model = res.model;
  RunLog& log = res.log;
  log.config_hash = config.hash();
  log.seed = config.seed;

  auto train_idx = dataset.indices(data::Split::Train);
  require(!train_idx.empty(), "train: training split is empty");
  if (config.max_train_samples > 0 && static_cast<int>(train_idx.size()) > config.max_train_samples)
    train_idx.resize(static_cast<std::size_t>(config.max_train_samples));
  const bool has_val = !dataset.indices(data::Split::Val).empty();

  const int per_side = model.config().fdmt.patches_per_side;
  std::vector<std::vector<double>> targets(dataset.records.size());
  if (config.use_fdmt)
    for (auto i : train_idx) targets[i] = patch_targets(dataset.records[i], config.lambda, per_side);

  Adam opt(model.params(), config.learning_rate, config.weight_decay);
  Rng order_rng = make_stream(config.seed, kShuffleStream);
  const int total_epochs = config.pretrain_epochs + config.epochs;
  double best_val = -1.0;
  std::vector<Param> best_params;
  int step = 0;

  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const bool depth_only = epoch < config.pretrain_epochs;
    // Fisher-Yates with our own stream so the order is platform independent.
    std::vector<std::size_t> order = train_idx;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<int>(i - 1)))]);

    int correct = 0;
    double loss_sum = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
      const int bn = static_cast<int>(std::min(order.size() - b0, static_cast<std::size_t>(config.batch_size)));
      std::vector<std::vector<std::vector<double>>> sample_grads(static_cast<std::size_t>(bn));
      std::vector<SampleStats> stats(static_cast<std::size_t>(bn));
      parallel_for(bn, config.workers, [&](int i) {
        const std::size_t rec = order[b0 + static_cast<std::size_t>(i)];
        auto& g = sample_grads[static_cast<std::size_t>(i)];
        g = model.params().zeros_like();
        stats[static_cast<std::size_t>(i)] =
            run_sample(model, config, dataset.records[rec], targets[rec], depth_only, bn, &g);
      });
      // Fixed summation order keeps results independent of the worker count.
      auto grads = std::move(sample_grads[0]);
      for (int i = 1; i < bn; ++i)
        for (std::size_t p = 0; p < grads.size(); ++p) {
          auto& dst = grads[p];
          const auto& src = sample_grads[static_cast<std::size_t>(i)][p];
          for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
      opt.step(model.params(), grads);

      StepRecord sr;
      sr.epoch = epoch;
      sr.step = step++;
      for (int i = 0; i < bn; ++i) {
        const auto& s = stats[static_cast<std::size_t>(i)];
        sr.classification += s.classification;
        sr.ssim_loss += s.ssim_loss;
        sr.ssim += s.ssim;
        sr.patch_mse_raw += s.patch_mse;
        const int label = static_cast<int>(dataset.records[order[b0 + static_cast<std::size_t>(i)]].label);
        correct += (s.fake_prob >= 0.5 ? 1 : 0) == label;
      }
      sr.classification /= bn;
      sr.ssim_loss /= bn;
      sr.ssim /= bn;
      sr.patch_mse = sr.patch_mse_raw / bn;
      sr.total = (depth_only ? 0.0 : sr.classification) + config.weights.alpha * sr.ssim_loss +
                 config.weights.beta * sr.patch_mse;
      if (!config.use_fdmt) sr.total = sr.classification;
      if (!std::isfinite(sr.total))
        throw Error(ErrorCode::Numeric, "non-finite loss at step " + std::to_string(sr.step));
      loss_sum += sr.total * bn;
      log.steps.push_back(sr);
    }

    EpochRecord er;
    er.epoch = epoch;
    er.pretrain = depth_only;
    er.train_accuracy = depth_only ? 0.0 : static_cast<double>(correct) / static_cast<double>(order.size());
    er.train_loss = loss_sum / static_cast<double>(order.size());
    if (!depth_only && has_val) {
      const auto val = evaluate(model, config, dataset, data::Split::Val, config.workers);
      er.val_accuracy = val.accuracy;
      er.val_auc = val.auc;
    }
    if (!depth_only && (!has_val || er.val_accuracy > best_val)) {
      best_val = er.val_accuracy;
      log.best_epoch = epoch;
      best_params = model.params().all();
    }
    er.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    log.epochs.push_back(er);
    if (progress) progress(er, progress_ctx);
  }
  if (!best_params.empty())
    for (std::size_t p = 0; p < best_params.size(); ++p)
      model.params().at(static_cast<int>(p)).value = best_params[p].value;
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

}  // namespace dfx
