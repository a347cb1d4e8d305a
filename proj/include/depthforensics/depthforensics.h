#ifndef DEPTHFORENSICS_H
#define DEPTHFORENSICS_H

/* C interface to the depth-assisted manipulation detector.
 *
 * Every call returns a dfx_status. On failure dfx_last_error() holds a
 * one-line message for the calling thread until its next failing call.
 * Strings returned through char** are owned by the caller and released with
 * dfx_string_free(). JSON is used for every structured result. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DFX_API __declspec(dllexport)
#else
#define DFX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dfx_status {
  DFX_OK = 0,
  DFX_ERR_INVALID_ARGUMENT = 1,
  DFX_ERR_IO = 2,
  DFX_ERR_FORMAT = 3,
  DFX_ERR_NUMERIC = 4,
  DFX_ERR_STATE = 5,
  DFX_ERR_INTERNAL = 6
} dfx_status;

typedef struct dfx_model dfx_model;
typedef struct dfx_dataset dfx_dataset;

typedef enum dfx_split { DFX_SPLIT_TRAIN = 0, DFX_SPLIT_VAL = 1, DFX_SPLIT_TEST = 2 } dfx_split;

DFX_API const char* dfx_version(void);
DFX_API const char* dfx_status_name(dfx_status status);
DFX_API const char* dfx_last_error(void);
DFX_API void dfx_string_free(char* s);

/* ---- data ---------------------------------------------------------------- */

typedef struct dfx_gen_options {
  uint64_t seed;
  int count;
  int image_size;
  int quality; /* 0 high, 1 low */
  double fake_ratio;
  double artifact_strength;
} dfx_gen_options;

DFX_API dfx_gen_options dfx_gen_options_default(void);
DFX_API dfx_status dfx_quality_parse(const char* name, int* quality);

/* Generates a dataset and writes it under out_dir. */
DFX_API dfx_status dfx_generate_dataset(const dfx_gen_options* options, const char* out_dir);

DFX_API dfx_status dfx_dataset_open(const char* dir, dfx_dataset** out);
DFX_API void dfx_dataset_free(dfx_dataset* ds);
DFX_API dfx_status dfx_dataset_count(const dfx_dataset* ds, dfx_split split, int* count);
/* Manifest as JSON. */
DFX_API dfx_status dfx_dataset_manifest(const dfx_dataset* ds, char** json);

/* Per-patch ground-truth files for every split of the dataset in data_dir. */
DFX_API dfx_status dfx_make_ground_truth(const char* data_dir, const char* out_dir, int lambda,
                                         int patches_per_side);

/* ---- training ------------------------------------------------------------ */

/* config_json is a training config object; out_dir receives checkpoint.dfx,
 * run_log.json and metrics.json. summary_json may be NULL. */
DFX_API dfx_status dfx_train(const char* config_json, const char* out_dir, char** summary_json);

/* Ablation table over the variants listed in config_json. */
DFX_API dfx_status dfx_ablate(const char* config_json, int seeds, const char* out_dir, char** table_json);

/* ---- models -------------------------------------------------------------- */

DFX_API dfx_status dfx_model_load(const char* checkpoint, dfx_model** out);
DFX_API void dfx_model_free(dfx_model* model);
DFX_API dfx_status dfx_model_save(const dfx_model* model, const char* checkpoint);
DFX_API dfx_status dfx_model_config(const dfx_model* model, char** json);
/* data_dir may be NULL to use the dataset recorded in the checkpoint. */
DFX_API dfx_status dfx_model_evaluate(const dfx_model* model, const char* data_dir, dfx_split split,
                                      char** report_json);
/* image: height x width x 3 floats in [0, 1], row-major HWC. */
DFX_API dfx_status dfx_model_classify(const dfx_model* model, const float* image, int height, int width,
                                      double* fake_probability);
/* Writes up to n panels for samples of split; stats_json may be NULL. */
DFX_API dfx_status dfx_model_visualize(const dfx_model* model, const char* data_dir, dfx_split split, int n,
                                       const char* out_dir, char** stats_json);

#ifdef __cplusplus
}
#endif

#endif
