#include "depthforensics/depthforensics.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include <json.hpp>

#include "depthforensics/checkpoint.hpp"
#include "depthforensics/dataset.hpp"
#include "depthforensics/error.hpp"
#include "depthforensics/harness.hpp"
#include "depthforensics/trainer.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct dfx_model {
  dfx::Checkpoint ck;
};

struct dfx_dataset {
  dfx::data::Dataset ds;
};

namespace {

thread_local std::string g_last_error;

dfx_status fail(dfx_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class Fn>
dfx_status guarded(Fn&& fn) {
  try {
    fn();
    return DFX_OK;
  } catch (const dfx::Error& e) {
    return fail(static_cast<dfx_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(DFX_ERR_FORMAT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DFX_ERR_INTERNAL, "out of memory");
  } catch (const fs::filesystem_error& e) {
    return fail(DFX_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(DFX_ERR_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void set_out(char** out, const json& j) {
  if (out) *out = dup_string(j.dump(2));
}

void need(const void* p, const char* what) {
  if (!p) throw dfx::Error(dfx::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

dfx::data::Split to_split(dfx_split s) {
  if (s < DFX_SPLIT_TRAIN || s > DFX_SPLIT_TEST) throw dfx::Error(dfx::ErrorCode::InvalidArgument, "invalid split");
  return static_cast<dfx::data::Split>(s);
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw dfx::Error(dfx::ErrorCode::Io, "cannot create '" + file.string() + "'");
  out << text << "\n";
  if (!out) throw dfx::Error(dfx::ErrorCode::Io, "write failed for '" + file.string() + "'");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw dfx::Error(dfx::ErrorCode::Io, "cannot create '" + dir.string() + "': " + ec.message());
}

json parse_json(const char* text, const char* what) {
  need(text, what);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw dfx::Error(dfx::ErrorCode::Format, std::string(what) + ": " + e.what());
  }
}

const dfx::data::Dataset& dataset_for(const dfx_model* m, const char* data_dir, std::optional<dfx::data::Dataset>& holder) {
  const std::string dir = data_dir ? data_dir : m->ck.train.data_dir;
  if (dir.empty()) throw dfx::Error(dfx::ErrorCode::InvalidArgument, "no dataset directory given or recorded");
  holder = dfx::data::read_dataset(dir);
  return *holder;
}

}  // namespace

extern "C" {

const char* dfx_version(void) { return "0.1.0"; }

const char* dfx_status_name(dfx_status status) {
  if (status == DFX_OK) return "OK";
  if (status < DFX_OK || status > DFX_ERR_INTERNAL) return "UNKNOWN";
  return dfx::error_code_name(static_cast<dfx::ErrorCode>(status));
}

const char* dfx_last_error(void) { return g_last_error.c_str(); }

void dfx_string_free(char* s) { std::free(s); }

dfx_gen_options dfx_gen_options_default(void) {
  const dfx::data::DatasetSpec spec;
  dfx_gen_options o;
  o.seed = spec.seed;
  o.count = spec.count;
  o.image_size = spec.generator.image_size;
  o.quality = static_cast<int>(spec.generator.quality);
  o.fake_ratio = spec.fake_ratio;
  o.artifact_strength = spec.generator.artifact_strength;
  return o;
}

dfx_status dfx_quality_parse(const char* name, int* quality) {
  return guarded([&] {
    need(name, "name");
    need(quality, "quality");
    *quality = static_cast<int>(dfx::synth::parse_quality(name));
  });
}

dfx_status dfx_generate_dataset(const dfx_gen_options* options, const char* out_dir) {
  return guarded([&] {
    need(options, "options");
    need(out_dir, "out_dir");
    if (options->quality != 0 && options->quality != 1)
      throw dfx::Error(dfx::ErrorCode::InvalidArgument, "quality must be 0 (high) or 1 (low)");
    dfx::data::DatasetSpec spec;
    spec.seed = options->seed;
    spec.count = options->count;
    spec.fake_ratio = options->fake_ratio;
    spec.generator.image_size = options->image_size;
    spec.generator.quality = static_cast<dfx::synth::Quality>(options->quality);
    spec.generator.artifact_strength = options->artifact_strength;
    spec.validate();
    dfx::data::write_dataset(dfx::data::generate_dataset(spec), out_dir);
  });
}

dfx_status dfx_dataset_open(const char* dir, dfx_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    *out = nullptr;
    auto h = std::make_unique<dfx_dataset>();
    h->ds = dfx::data::read_dataset(dir);
    *out = h.release();
  });
}

void dfx_dataset_free(dfx_dataset* ds) { delete ds; }

dfx_status dfx_dataset_count(const dfx_dataset* ds, dfx_split split, int* count) {
  return guarded([&] {
    need(ds, "dataset");
    need(count, "count");
    *count = ds->ds.manifest.count(to_split(split));
  });
}

dfx_status dfx_dataset_manifest(const dfx_dataset* ds, char** out) {
  return guarded([&] {
    need(ds, "dataset");
    need(out, "json");
    const auto& m = ds->ds.manifest;
    json j = {{"format_version", m.format_version},
              {"generator_version", m.generator_version},
              {"global_seed", m.spec.seed},
              {"count", m.entries.size()},
              {"splits",
               {{"train", m.count(dfx::data::Split::Train)},
                {"val", m.count(dfx::data::Split::Val)},
                {"test", m.count(dfx::data::Split::Test)}}}};
    set_out(out, j);
  });
}

dfx_status dfx_make_ground_truth(const char* data_dir, const char* out_dir, int lambda, int patches_per_side) {
  return guarded([&] {
    need(data_dir, "data_dir");
    need(out_dir, "out_dir");
    dfx::data::write_ground_truth(dfx::data::read_dataset(data_dir), out_dir, lambda, patches_per_side);
  });
}

dfx_status dfx_train(const char* config_json, const char* out_dir, char** summary_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    auto cfg = dfx::TrainConfig::from_json(parse_json(config_json, "config"));
    cfg.out_dir = out_dir;
    cfg.validate();
    if (cfg.data_dir.empty()) throw dfx::Error(dfx::ErrorCode::InvalidArgument, "config: data_dir is required");
    const auto ds = dfx::data::read_dataset(cfg.data_dir);
    make_dirs(out_dir);
    auto res = dfx::train(cfg, ds);
    const fs::path out(out_dir);
    const auto val = ds.indices(dfx::data::Split::Val).empty()
                         ? json(nullptr)
                         : dfx::evaluate(res.model, cfg, ds, dfx::data::Split::Val, cfg.workers).to_json();
    const auto test = ds.indices(dfx::data::Split::Test).empty()
                          ? json(nullptr)
                          : dfx::evaluate(res.model, cfg, ds, dfx::data::Split::Test, cfg.workers).to_json();
    dfx::save_checkpoint(out / "checkpoint.dfx", res.model, cfg,
                         {{"best_epoch", res.log.best_epoch}, {"config_hash", res.log.config_hash}});
    write_text(out / "run_log.json", res.log.to_json().dump(2));
    const json metrics = {{"val", val}, {"test", test}};
    write_text(out / "metrics.json", metrics.dump(2));
    set_out(summary_json, {{"checkpoint", (out / "checkpoint.dfx").string()},
                           {"config_hash", res.log.config_hash},
                           {"best_epoch", res.log.best_epoch},
                           {"wall_seconds", res.log.wall_seconds},
                           {"metrics", metrics}});
  });
}

dfx_status dfx_ablate(const char* config_json, int seeds, const char* out_dir, char** table_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    auto cfg = dfx::AblationConfig::from_json(parse_json(config_json, "config"));
    if (seeds > 0) cfg.seeds = seeds;
    if (cfg.base.data_dir.empty()) throw dfx::Error(dfx::ErrorCode::InvalidArgument, "config: data_dir is required");
    const auto ds = dfx::data::read_dataset(cfg.base.data_dir);
    make_dirs(out_dir);
    const auto table = dfx::ablate(cfg, ds);
    const fs::path out(out_dir);
    write_text(out / "ablation.json", table.to_json().dump(2));
    write_text(out / "ablation.txt", table.to_text());
    set_out(table_json, table.to_json());
  });
}

dfx_status dfx_model_load(const char* checkpoint, dfx_model** out) {
  return guarded([&] {
    need(checkpoint, "checkpoint");
    need(out, "out");
    *out = nullptr;
    *out = new dfx_model{dfx::load_checkpoint(checkpoint)};
  });
}

void dfx_model_free(dfx_model* model) { delete model; }

dfx_status dfx_model_save(const dfx_model* model, const char* checkpoint) {
  return guarded([&] {
    need(model, "model");
    need(checkpoint, "checkpoint");
    dfx::save_checkpoint(checkpoint, model->ck.model, model->ck.train, model->ck.meta);
  });
}

dfx_status dfx_model_config(const dfx_model* model, char** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "json");
    set_out(out, {{"model", model->ck.model.config().to_json()},
                  {"train", model->ck.train.to_json()},
                  {"meta", model->ck.meta}});
  });
}

dfx_status dfx_model_evaluate(const dfx_model* model, const char* data_dir, dfx_split split, char** report_json) {
  return guarded([&] {
    need(model, "model");
    need(report_json, "report_json");
    std::optional<dfx::data::Dataset> holder;
    const auto& ds = dataset_for(model, data_dir, holder);
    set_out(report_json,
            dfx::evaluate(model->ck.model, model->ck.train, ds, to_split(split), model->ck.train.workers).to_json());
  });
}

dfx_status dfx_model_classify(const dfx_model* model, const float* image, int height, int width,
                              double* fake_probability) {
  return guarded([&] {
    need(model, "model");
    need(image, "image");
    need(fake_probability, "fake_probability");
    if (height <= 0 || width <= 0) throw dfx::Error(dfx::ErrorCode::InvalidArgument, "image dimensions must be positive");
    dfx::synth::Image img;
    img.height = height;
    img.width = width;
    img.data.assign(image, image + static_cast<std::size_t>(height) * width * dfx::synth::Image::kChannels);
    *fake_probability = model->ck.model.classify(img);
  });
}

dfx_status dfx_model_visualize(const dfx_model* model, const char* data_dir, dfx_split split, int n,
                               const char* out_dir, char** stats_json) {
  return guarded([&] {
    need(model, "model");
    need(out_dir, "out_dir");
    std::optional<dfx::data::Dataset> holder;
    const auto& ds = dataset_for(model, data_dir, holder);
    const auto stats = dfx::visualize(model->ck.model, ds, to_split(split), n, out_dir, model->ck.train.lambda);
    set_out(stats_json, stats.to_json());
  });
}

}  // extern "C"
