#ifndef GUSL_GUSL_H
#define GUSL_GUSL_H

#include <stddef.h>
#include <stdint.h>

#if defined(GUSL_BUILDING_LIBRARY)
#define GUSL_API __attribute__((visibility("default")))
#else
#define GUSL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Values are stable across releases. */
typedef enum gusl_status {
  GUSL_OK = 0,
  GUSL_ERR_INVALID_DIMENSION = 1,
  GUSL_ERR_INVALID_CONFIG = 2,
  GUSL_ERR_SHAPE = 3,
  GUSL_ERR_IDENTICAL_IMAGES = 4,
  GUSL_ERR_INSUFFICIENT_DATA = 5,
  GUSL_ERR_NUMERICAL_FAILURE = 6,
  GUSL_ERR_INVALID_INPUT = 7,
  GUSL_ERR_INVALID_MODEL = 8,
  GUSL_ERR_INCOMPATIBLE_MODEL = 9,
  GUSL_ERR_CORRUPTION = 10,
  GUSL_ERR_FORMAT = 11,
  GUSL_ERR_IO = 12,
  GUSL_ERR_NULL_ARGUMENT = 13,
  GUSL_ERR_INTERNAL = 14
} gusl_status;

typedef struct gusl_image gusl_image;
typedef struct gusl_model gusl_model;

/* Category name such as "invalid-config"; "ok" for GUSL_OK. */
GUSL_API const char* gusl_status_name(gusl_status status);
/* Message of the last failure on the calling thread ("" if none). */
GUSL_API const char* gusl_last_error(void);
GUSL_API const char* gusl_version(void);

/* Images: row-major doubles, normally within [0, 1]. */
GUSL_API gusl_status gusl_image_create(size_t height, size_t width, const double* data, gusl_image** out);
/* window != 0 maps [lo, hi] onto [0, 1]; otherwise the format's full range. */
GUSL_API gusl_status gusl_image_load(const char* path, int window, double lo, double hi, gusl_image** out);
/* .png and .pgm are written as 16-bit, anything else as raw float32. */
GUSL_API gusl_status gusl_image_save(const gusl_image* img, const char* path);
GUSL_API size_t gusl_image_height(const gusl_image* img);
GUSL_API size_t gusl_image_width(const gusl_image* img);
GUSL_API const double* gusl_image_data(const gusl_image* img);
GUSL_API void gusl_image_free(gusl_image* img);

GUSL_API gusl_status gusl_psnr(const gusl_image* a, const gusl_image* b, double peak, double* out);
GUSL_API gusl_status gusl_ssim(const gusl_image* a, const gusl_image* b, double* out);

GUSL_API gusl_status gusl_synth_degrade(const gusl_image* clean, double blur_sigma, double noise_sigma,
                                        uint64_t seed, gusl_image** out);
GUSL_API gusl_status gusl_make_phantom(size_t size, uint64_t seed, gusl_image** out);

/* config_json may be NULL for defaults. Training uses the manifest's train
 * entries, which must all have a reference image. */
GUSL_API gusl_status gusl_train_manifest(const char* manifest_path, const char* config_json, gusl_model** out);
GUSL_API gusl_status gusl_train_images(const gusl_image* const* ldct, const gusl_image* const* ndct, size_t count,
                                       const char* config_json, gusl_model** out);

GUSL_API gusl_status gusl_model_save(const gusl_model* model, const char* dir);
GUSL_API gusl_status gusl_model_load(const char* dir, gusl_model** out);
GUSL_API void gusl_model_free(gusl_model* model);
GUSL_API size_t gusl_model_level_count(const gusl_model* model);

/* A model is immutable; concurrent restore calls on one model are safe. */
GUSL_API gusl_status gusl_restore(const gusl_model* model, const gusl_image* ldct, gusl_image** out);
GUSL_API gusl_status gusl_complexity(const gusl_model* model, double* param_count, double* macs_per_pixel);

/* Per-image and mean PSNR/SSIM over the manifest's test entries (all entries
 * when there is no test split). csv_path may be NULL. */
GUSL_API gusl_status gusl_evaluate(const gusl_model* model, const char* manifest_path, const char* csv_path,
                                   double* mean_psnr, double* mean_ssim);
/* Diagnostics recorded during training; level 1 is the finest. */
GUSL_API gusl_status gusl_export_rft(const gusl_model* model, size_t level, const char* csv_path);
GUSL_API gusl_status gusl_export_lnt(const gusl_model* model, size_t level, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif
