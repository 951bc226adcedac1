/*
 * hsrnn — recurrent networks for hyperspectral image classification.
 *
 * C API over the core library: opaque handles, status codes, and JSON
 * text for structured inputs/outputs. Every function that can fail
 * returns an hsr_status; on failure hsr_last_error() holds a one-line
 * diagnostic for the calling thread.
 *
 * Strings returned through char** out-parameters are heap-allocated and
 * must be released with hsr_string_free().
 */
#ifndef HSRNN_H
#define HSRNN_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HSR_API __declspec(dllexport)
#else
#define HSR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hsr_status {
    HSR_OK = 0,
    HSR_ERROR_ARGUMENT = 1,  /* bad value passed by the caller */
    HSR_ERROR_DIMENSION = 2, /* tensor/shape disagreement */
    HSR_ERROR_FORMAT = 3,    /* malformed file or document */
    HSR_ERROR_DATA = 4,      /* dataset contents violate a precondition */
    HSR_ERROR_CONFIG = 5,    /* inconsistent model/train configuration */
    HSR_ERROR_STATE = 6,     /* operation called in the wrong order */
    HSR_ERROR_IO = 7,        /* filesystem failure */
    HSR_ERROR_INTERNAL = 8
} hsr_status;

typedef struct hsr_cube hsr_cube;     /* hyperspectral image cube */
typedef struct hsr_raster hsr_raster; /* per-pixel class labels */
typedef struct hsr_split hsr_split;   /* materialized train/test sample sets */
typedef struct hsr_model hsr_model;   /* built network (spec + parameters) */

HSR_API const char* hsr_version(void);
HSR_API const char* hsr_status_name(hsr_status status);
HSR_API const char* hsr_last_error(void);
HSR_API void hsr_string_free(char* s);

/* ---- data ----------------------------------------------------------- */

/* ENVI ingest: text header plus raw BSQ payload (little-endian). */
HSR_API hsr_status hsr_cube_load_envi(const char* header_path, const char* data_path,
                                      hsr_cube** out);
HSR_API hsr_status hsr_cube_save_envi(const hsr_cube* cube, const char* header_path,
                                      const char* data_path);
/* Per-band min-max scaling to [0,1] in place; constant bands map to 0. */
HSR_API hsr_status hsr_cube_normalize(hsr_cube* cube);
HSR_API size_t hsr_cube_rows(const hsr_cube* cube);
HSR_API size_t hsr_cube_cols(const hsr_cube* cube);
HSR_API size_t hsr_cube_bands(const hsr_cube* cube);
HSR_API void hsr_cube_free(hsr_cube* cube);

HSR_API hsr_status hsr_raster_load_envi(const char* header_path, const char* data_path,
                                        hsr_raster** out);
HSR_API hsr_status hsr_raster_save_envi(const hsr_raster* raster, const char* header_path,
                                        const char* data_path);
HSR_API size_t hsr_raster_rows(const hsr_raster* raster);
HSR_API size_t hsr_raster_cols(const hsr_raster* raster);
HSR_API int hsr_raster_classes(const hsr_raster* raster);
HSR_API void hsr_raster_free(hsr_raster* raster);

/* Seeded synthetic scene: `classes` contiguous regions with smooth
 * distinct spectral signatures plus i.i.d. Gaussian noise. */
HSR_API hsr_status hsr_synth_dataset(int classes, size_t bands, size_t rows, size_t cols,
                                     double noise, uint64_t seed, hsr_cube** cube_out,
                                     hsr_raster** gt_out);

/* ---- splits ---------------------------------------------------------- */

/* split_json: {"seed":0,"counts":{"1":548,...}}, {"seed":0,"per_class":50},
 * or the flat form {"1":548,...,"seed":0}. Draws the requested count per
 * class uniformly without replacement; remaining labeled pixels form the
 * test set. */
HSR_API hsr_status hsr_split_create(const hsr_raster* raster, const char* split_json,
                                    hsr_split** out);
HSR_API size_t hsr_split_train_count(const hsr_split* split);
HSR_API size_t hsr_split_test_count(const hsr_split* split);
HSR_API void hsr_split_free(hsr_split* split);

/* ---- models ---------------------------------------------------------- */

/* spec_json, e.g. {"variant":"st_ss_pgru","bands":103,"classes":9,
 * "patch":5,"spatial_filters":16,"shorten_filters":16,"timesteps":5,
 * "hidden":128,"units":2,"seed":0}. Allocation and seeded initialization
 * happen here; building twice from one spec gives bit-identical models. */
HSR_API hsr_status hsr_model_build(const char* spec_json, hsr_model** out);
HSR_API hsr_status hsr_model_save(const hsr_model* model, const char* path);
HSR_API hsr_status hsr_model_load(const char* path, hsr_model** out);
HSR_API hsr_status hsr_model_spec_json(const hsr_model* model, char** json_out);
HSR_API hsr_status hsr_model_parameter_count(const hsr_model* model, size_t* count_out);
HSR_API void hsr_model_free(hsr_model* model);

/* ---- training and evaluation ----------------------------------------- */

/* config_json, e.g. {"lr":1e-3,"batch":64,"epochs":100,"optimizer":"adam",
 * "seed":0,"shuffle":true}. Trains on the split's training pixels; on
 * success *loss_history_json is a JSON array of per-epoch mean losses. */
HSR_API hsr_status hsr_train(hsr_model* model, const hsr_cube* cube, const hsr_split* split,
                             const char* config_json, char** loss_history_json);

/* Evaluates on the split's test pixels (or training pixels when on_train
 * is nonzero). *metrics_json carries overall accuracy, per-class
 * accuracy and the confusion matrix. */
HSR_API hsr_status hsr_evaluate(const hsr_model* model, const hsr_cube* cube,
                                const hsr_split* split, int on_train, char** metrics_json);

/* n independent build+train+evaluate cycles with per-run seeds base+i
 * and a fresh split each run; *report_json carries mean/std overall
 * accuracy plus per-run metrics. */
HSR_API hsr_status hsr_repeat_runs(const char* spec_json, const hsr_cube* cube,
                                   const hsr_raster* raster, const char* split_json,
                                   const char* config_json, size_t n, char** report_json);

/* ---- classification maps and gradient checking ----------------------- */

/* Classifies every pixel and writes a cols x rows binary PPM (P6). */
HSR_API hsr_status hsr_classification_map(const hsr_model* model, const hsr_cube* cube,
                                          const char* ppm_path);

/* Colors a ground-truth raster with the same palette. */
HSR_API hsr_status hsr_ground_truth_map(const hsr_raster* raster, const char* ppm_path);

/* Checks analytic gradients of every layer type plus a full tiny model
 * against central finite differences; *report_json lists per-layer max
 * relative errors. */
HSR_API hsr_status hsr_gradcheck(uint64_t seed, char** report_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HSRNN_H */
