// Command-line front end. Talks to the library only through the C API.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "depthforensics/depthforensics.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 64;

// One machine-parsable line on stderr.
int report(int code, const char* name, const std::string& msg) {
  std::string flat = msg;
  for (char& c : flat)
    if (c == '\n' || c == '\r') c = ' ';
  std::fprintf(stderr, "error: code=%s status=%d msg=\"%s\"\n", name, code, flat.c_str());
  return code;
}

int check(dfx_status s) {
  if (s == DFX_OK) return 0;
  return report(static_cast<int>(s), dfx_status_name(s), dfx_last_error());
}

// Relative output paths land under $DFX_OUTPUT_ROOT when it is set.
std::string output_path(const std::string& p) {
  const char* root = std::getenv("DFX_OUTPUT_ROOT");
  if (!root || !*root || fs::path(p).is_absolute()) return p;
  return (fs::path(root) / p).string();
}

bool read_text(const std::string& file, std::string& out) {
  std::ifstream in(file);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

void print_and_free(char* s) {
  if (!s) return;
  std::cout << s << "\n";
  dfx_string_free(s);
}

dfx_split split_of(const std::string& s) {
  if (s == "train") return DFX_SPLIT_TRAIN;
  if (s == "val") return DFX_SPLIT_VAL;
  return DFX_SPLIT_TEST;
}

struct ModelGuard {
  dfx_model* m = nullptr;
  ~ModelGuard() { dfx_model_free(m); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-assisted face manipulation detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dfx_version()));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  dfx_gen_options gopt = dfx_gen_options_default();
  std::string quality = "high", gen_out = "data";
  gen->add_option("--seed", gopt.seed, "Global seed")->required();
  gen->add_option("--count", gopt.count, "Number of samples")->capture_default_str();
  gen->add_option("--quality", quality, "high|low (c23|c40)")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_option("--image-size", gopt.image_size, "Image side in pixels")->capture_default_str();
  gen->add_option("--fake-ratio", gopt.fake_ratio, "Fraction of fake samples")->capture_default_str();
  gen->add_option("--artifact-strength", gopt.artifact_strength, "Strength of the planted inconsistency")
      ->capture_default_str();

  // make-gt
  auto* mgt = app.add_subcommand("make-gt", "Write per-patch ground-truth depth files");
  std::string gt_data = "data", gt_out;
  int lambda = 50, patches = 14;
  mgt->add_option("--data", gt_data, "Dataset directory")->capture_default_str();
  mgt->add_option("--lambda", lambda, "Depth offset")->capture_default_str();
  mgt->add_option("--patches", patches, "Patches per side")->capture_default_str();
  mgt->add_option("--out", gt_out, "Output directory (default <data>/gt)");

  // train
  auto* tr = app.add_subcommand("train", "Train a model from a JSON config");
  std::string train_config, train_out;
  tr->add_option("--config", train_config, "Config file")->required();
  tr->add_option("--out", train_out, "Run directory (overrides out_dir)");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_split = "test", ev_data, ev_out;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--split", ev_split, "train|val|test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  ev->add_option("--data", ev_data, "Dataset directory (default: the one recorded at training)");
  ev->add_option("--out", ev_out, "Also write the report to this file");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Run the ablation table");
  std::string ab_config, ab_out = "ablation";
  int seeds = 3;
  ab->add_option("--config", ab_config, "Config file")->required();
  ab->add_option("--seeds", seeds, "Seeds per variant")->capture_default_str();
  ab->add_option("--out", ab_out, "Output directory")->capture_default_str();

  // viz
  auto* vz = app.add_subcommand("viz", "Write visual panels for a checkpoint");
  std::string vz_ckpt, vz_split = "test", vz_data, vz_out = "viz";
  int vz_n = 8;
  vz->add_option("--ckpt", vz_ckpt, "Checkpoint file")->required();
  vz->add_option("--n", vz_n, "Number of samples")->capture_default_str();
  vz->add_option("--split", vz_split, "train|val|test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  vz->add_option("--data", vz_data, "Dataset directory");
  vz->add_option("--out", vz_out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kExitUsage, "USAGE", e.what());
  }

  if (*gen) {
    if (int rc = check(dfx_quality_parse(quality.c_str(), &gopt.quality))) return rc;
    const std::string out = output_path(gen_out);
    if (int rc = check(dfx_generate_dataset(&gopt, out.c_str()))) return rc;
    std::printf("wrote %d samples to %s\n", gopt.count, out.c_str());
    return 0;
  }
  if (*mgt) {
    const std::string out = gt_out.empty() ? (fs::path(gt_data) / "gt").string() : output_path(gt_out);
    if (int rc = check(dfx_make_ground_truth(gt_data.c_str(), out.c_str(), lambda, patches))) return rc;
    std::printf("wrote ground truth to %s\n", out.c_str());
    return 0;
  }
  if (*tr) {
    std::string text;
    if (!read_text(train_config, text)) return report(DFX_ERR_IO, "IO_ERROR", "cannot read config " + train_config);
    std::string out = train_out;
    if (out.empty()) {
      const auto j = nlohmann::json::parse(text, nullptr, false);
      out = j.is_object() ? j.value("out_dir", std::string()) : std::string();
      if (out.empty()) out = "run";
    }
    out = output_path(out);
    char* summary = nullptr;
    if (int rc = check(dfx_train(text.c_str(), out.c_str(), &summary))) return rc;
    print_and_free(summary);
    return 0;
  }
  if (*ev) {
    ModelGuard g;
    if (int rc = check(dfx_model_load(ev_ckpt.c_str(), &g.m))) return rc;
    char* report_json = nullptr;
    if (int rc = check(dfx_model_evaluate(g.m, ev_data.empty() ? nullptr : ev_data.c_str(), split_of(ev_split),
                                          &report_json)))
      return rc;
    if (!ev_out.empty()) {
      const std::string out = output_path(ev_out);
      std::ofstream f(out);
      if (!f || !(f << report_json << "\n")) {
        dfx_string_free(report_json);
        return report(DFX_ERR_IO, "IO_ERROR", "cannot write " + out);
      }
    }
    print_and_free(report_json);
    return 0;
  }
  if (*ab) {
    std::string text;
    if (!read_text(ab_config, text)) return report(DFX_ERR_IO, "IO_ERROR", "cannot read config " + ab_config);
    if (seeds < 1) return report(DFX_ERR_INVALID_ARGUMENT, "INVALID_ARGUMENT", "--seeds must be positive");
    const std::string out = output_path(ab_out);
    char* table = nullptr;
    if (int rc = check(dfx_ablate(text.c_str(), seeds, out.c_str(), &table))) return rc;
    dfx_string_free(table);
    std::string txt;
    if (read_text((fs::path(out) / "ablation.txt").string(), txt)) std::cout << txt;
    return 0;
  }
  if (*vz) {
    ModelGuard g;
    if (int rc = check(dfx_model_load(vz_ckpt.c_str(), &g.m))) return rc;
    const std::string out = output_path(vz_out);
    char* stats = nullptr;
    if (int rc = check(dfx_model_visualize(g.m, vz_data.empty() ? nullptr : vz_data.c_str(), split_of(vz_split), vz_n,
                                           out.c_str(), &stats)))
      return rc;
    print_and_free(stats);
    return 0;
  }
  return report(kExitUsage, "USAGE", "no command given");
}
