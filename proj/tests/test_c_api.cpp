#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "depthforensics/depthforensics.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  dfx_string_free(s);
  return out;
}

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dfx_capi_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(CApi, StatusNamesAndVersion) {
  EXPECT_STREQ(dfx_status_name(DFX_OK), "OK");
  EXPECT_STREQ(dfx_status_name(DFX_ERR_FORMAT), "FORMAT_ERROR");
  EXPECT_STREQ(dfx_status_name(static_cast<dfx_status>(42)), "UNKNOWN");
  EXPECT_GT(std::strlen(dfx_version()), 0u);
}

TEST(CApi, ErrorsAreReportedNotThrown) {
  dfx_dataset* ds = nullptr;
  EXPECT_EQ(dfx_dataset_open("/nonexistent/dfx", &ds), DFX_ERR_IO);
  EXPECT_EQ(ds, nullptr);
  EXPECT_NE(std::string(dfx_last_error()).find("nonexistent"), std::string::npos);
  EXPECT_EQ(std::string(dfx_last_error()).find('\n'), std::string::npos);
  EXPECT_EQ(dfx_dataset_open(nullptr, &ds), DFX_ERR_INVALID_ARGUMENT);
  int q = -1;
  EXPECT_EQ(dfx_quality_parse("medium", &q), DFX_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(dfx_quality_parse("low", &q), DFX_OK);
  EXPECT_EQ(q, 1);
  EXPECT_EQ(dfx_train("{not json", "/tmp/x", nullptr), DFX_ERR_FORMAT);
  EXPECT_EQ(dfx_train("{\"epochs\": 1}", "/tmp/x", nullptr), DFX_ERR_INVALID_ARGUMENT);  // no data_dir
  dfx_model* m = nullptr;
  EXPECT_EQ(dfx_model_load("/nonexistent.dfx", &m), DFX_ERR_IO);
  auto opts = dfx_gen_options_default();
  opts.count = -3;
  EXPECT_EQ(dfx_generate_dataset(&opts, "/tmp/dfx_capi_never"), DFX_ERR_INVALID_ARGUMENT);
}

TEST(CApi, GenerateTrainEvaluateClassify) {
  const auto data = fresh_dir("data"), run = fresh_dir("run");
  auto opts = dfx_gen_options_default();
  opts.seed = 2;
  opts.count = 40;
  ASSERT_EQ(dfx_generate_dataset(&opts, data.c_str()), DFX_OK) << dfx_last_error();

  dfx_dataset* ds = nullptr;
  ASSERT_EQ(dfx_dataset_open(data.c_str(), &ds), DFX_OK);
  int train = 0, test = 0;
  dfx_dataset_count(ds, DFX_SPLIT_TRAIN, &train);
  dfx_dataset_count(ds, DFX_SPLIT_TEST, &test);
  EXPECT_EQ(train, 28);
  EXPECT_EQ(test, 6);
  char* manifest = nullptr;
  ASSERT_EQ(dfx_dataset_manifest(ds, &manifest), DFX_OK);
  EXPECT_EQ(json::parse(take(manifest))["global_seed"], 2);
  dfx_dataset_free(ds);

  ASSERT_EQ(dfx_make_ground_truth(data.c_str(), (data / "gt").c_str(), 50, 8), DFX_OK) << dfx_last_error();
  EXPECT_TRUE(fs::exists(data / "gt" / "test.gtb"));
  EXPECT_EQ(dfx_make_ground_truth(data.c_str(), (data / "gt").c_str(), 50, 5), DFX_ERR_INVALID_ARGUMENT);

  const json cfg = {{"epochs", 1}, {"max_train_samples", 8}, {"data_dir", data.string()}};
  char* summary = nullptr;
  ASSERT_EQ(dfx_train(cfg.dump().c_str(), run.c_str(), &summary), DFX_OK) << dfx_last_error();
  const auto s = json::parse(take(summary));
  EXPECT_TRUE(s["metrics"]["test"].contains("ACC"));
  for (const char* f : {"checkpoint.dfx", "run_log.json", "metrics.json"}) EXPECT_TRUE(fs::exists(run / f)) << f;

  dfx_model* m = nullptr;
  ASSERT_EQ(dfx_model_load((run / "checkpoint.dfx").c_str(), &m), DFX_OK);
  char* r1 = nullptr;
  ASSERT_EQ(dfx_model_evaluate(m, nullptr, DFX_SPLIT_TEST, &r1), DFX_OK) << dfx_last_error();
  const auto rep = json::parse(take(r1));
  EXPECT_EQ(rep["ACC"], s["metrics"]["test"]["ACC"]);
  EXPECT_EQ(rep["config_hash"], s["config_hash"]);

  std::vector<float> img(32 * 32 * 3, 0.5f);
  double p = -1;
  EXPECT_EQ(dfx_model_classify(m, img.data(), 32, 32, &p), DFX_OK);
  EXPECT_GE(p, 0.0);
  EXPECT_LE(p, 1.0);
  EXPECT_EQ(dfx_model_classify(m, img.data(), 16, 16, &p), DFX_ERR_INVALID_ARGUMENT);

  char* stats = nullptr;
  ASSERT_EQ(dfx_model_visualize(m, nullptr, DFX_SPLIT_TEST, 3, (run / "viz").c_str(), &stats), DFX_OK)
      << dfx_last_error();
  EXPECT_EQ(json::parse(take(stats))["panels"], 3);
  dfx_model_free(m);
  fs::remove_all(data);
  fs::remove_all(run);
}
