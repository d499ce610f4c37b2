#include "gusl/gusl.h"

#include <exception>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "io.hpp"
#include "pipeline.hpp"

struct gusl_image {
  gusl::Image img;
};

struct gusl_model {
  gusl::GuslModel model;
};

namespace {

thread_local std::string last_error;

template <typename F>
gusl_status guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return GUSL_OK;
  } catch (const gusl::Error& e) {
    last_error = e.what();
    return static_cast<gusl_status>(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GUSL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GUSL_ERR_INTERNAL;
  }
}

gusl_status null_arg(const char* what) {
  last_error = std::string("null argument: ") + what;
  return GUSL_ERR_NULL_ARGUMENT;
}

gusl::TrainConfig parse_config(const char* json) {
  return json ? gusl::config_from_json(json) : gusl::TrainConfig{};
}

gusl_image* wrap(gusl::Image img) { return new gusl_image{std::move(img)}; }

}  // namespace

extern "C" {

const char* gusl_status_name(gusl_status status) {
  switch (status) {
    case GUSL_OK:
      return "ok";
    case GUSL_ERR_NULL_ARGUMENT:
      return "null-argument";
    case GUSL_ERR_INTERNAL:
      return "internal";
    default:
      if (status >= GUSL_ERR_INVALID_DIMENSION && status <= GUSL_ERR_IO)
        return gusl::error_kind_name(static_cast<gusl::ErrorKind>(status));
      return "unknown";
  }
}

const char* gusl_last_error(void) { return last_error.c_str(); }

const char* gusl_version(void) { return gusl::kModelVersion; }

gusl_status gusl_image_create(size_t height, size_t width, const double* data, gusl_image** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    if (height == 0 || width == 0) throw gusl::Error(gusl::ErrorKind::InvalidDimension, "image dimensions must be > 0");
    std::vector<double> v(height * width, 0.0);
    if (data) v.assign(data, data + height * width);
    *out = wrap(gusl::Image(height, width, std::move(v)));
  });
}

gusl_status gusl_image_load(const char* path, int window, double lo, double hi, gusl_image** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guarded([&] {
    std::optional<gusl::Normalization> norm;
    if (window) norm = gusl::Normalization{lo, hi};
    *out = wrap(gusl::load_image(path, norm));
  });
}

gusl_status gusl_image_save(const gusl_image* img, const char* path) {
  if (!img) return null_arg("img");
  if (!path) return null_arg("path");
  return guarded([&] { gusl::save_image(img->img, path); });
}

size_t gusl_image_height(const gusl_image* img) { return img ? img->img.height() : 0; }
size_t gusl_image_width(const gusl_image* img) { return img ? img->img.width() : 0; }
const double* gusl_image_data(const gusl_image* img) { return img ? img->img.data().data() : nullptr; }
void gusl_image_free(gusl_image* img) { delete img; }

gusl_status gusl_psnr(const gusl_image* a, const gusl_image* b, double peak, double* out) {
  if (!a || !b || !out) return null_arg("a, b or out");
  return guarded([&] { *out = gusl::psnr(a->img, b->img, peak); });
}

gusl_status gusl_ssim(const gusl_image* a, const gusl_image* b, double* out) {
  if (!a || !b || !out) return null_arg("a, b or out");
  return guarded([&] { *out = gusl::ssim(a->img, b->img); });
}

gusl_status gusl_synth_degrade(const gusl_image* clean, double blur_sigma, double noise_sigma, uint64_t seed,
                               gusl_image** out) {
  if (!clean || !out) return null_arg("clean or out");
  return guarded([&] { *out = wrap(gusl::synth_degrade(clean->img, {blur_sigma, noise_sigma, seed})); });
}

gusl_status gusl_make_phantom(size_t size, uint64_t seed, gusl_image** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    if (size == 0) throw gusl::Error(gusl::ErrorKind::InvalidDimension, "phantom size must be > 0");
    *out = wrap(gusl::make_phantom(size, seed));
  });
}

gusl_status gusl_train_manifest(const char* manifest_path, const char* config_json, gusl_model** out) {
  if (!manifest_path || !out) return null_arg("manifest_path or out");
  return guarded([&] {
    const gusl::TrainConfig cfg = parse_config(config_json);
    const gusl::Manifest manifest = gusl::load_manifest(manifest_path);
    const auto entries = manifest.with_split("train");
    if (entries.empty()) throw gusl::Error(gusl::ErrorKind::InsufficientData, "manifest has no train entries");
    std::vector<gusl::ImagePair> pairs;
    for (const auto& e : entries) {
      if (!e.ndct)
        throw gusl::Error(gusl::ErrorKind::InvalidInput, e.ldct.string() + ": train entry has no reference image");
      pairs.push_back({gusl::load_image(e.ldct, manifest.normalization),
                       gusl::load_image(*e.ndct, manifest.normalization)});
    }
    *out = new gusl_model{gusl::train(pairs, cfg).model};
  });
}

gusl_status gusl_train_images(const gusl_image* const* ldct, const gusl_image* const* ndct, size_t count,
                              const char* config_json, gusl_model** out) {
  if (!ldct || !ndct || !out) return null_arg("ldct, ndct or out");
  for (size_t i = 0; i < count; ++i)
    if (!ldct[i] || !ndct[i]) return null_arg("image");
  return guarded([&] {
    const gusl::TrainConfig cfg = parse_config(config_json);
    std::vector<gusl::ImagePair> pairs;
    for (size_t i = 0; i < count; ++i) pairs.push_back({ldct[i]->img, ndct[i]->img});
    *out = new gusl_model{gusl::train(pairs, cfg).model};
  });
}

gusl_status gusl_model_save(const gusl_model* model, const char* dir) {
  if (!model || !dir) return null_arg("model or dir");
  return guarded([&] { gusl::save_model(model->model, dir); });
}

gusl_status gusl_model_load(const char* dir, gusl_model** out) {
  if (!dir || !out) return null_arg("dir or out");
  return guarded([&] { *out = new gusl_model{gusl::load_model(dir)}; });
}

void gusl_model_free(gusl_model* model) { delete model; }

size_t gusl_model_level_count(const gusl_model* model) { return model ? model->model.levels.size() : 0; }

gusl_status gusl_restore(const gusl_model* model, const gusl_image* ldct, gusl_image** out) {
  if (!model || !ldct || !out) return null_arg("model, ldct or out");
  return guarded([&] { *out = wrap(gusl::restore(model->model, ldct->img)); });
}

gusl_status gusl_complexity(const gusl_model* model, double* param_count, double* macs_per_pixel) {
  if (!model || !param_count || !macs_per_pixel) return null_arg("model or outputs");
  return guarded([&] {
    const gusl::Complexity c = gusl::report_complexity(model->model);
    *param_count = c.param_count;
    *macs_per_pixel = c.macs_per_pixel;
  });
}

gusl_status gusl_evaluate(const gusl_model* model, const char* manifest_path, const char* csv_path, double* mean_psnr,
                          double* mean_ssim) {
  if (!model || !manifest_path) return null_arg("model or manifest_path");
  return guarded([&] {
    const gusl::EvalReport report = gusl::evaluate(model->model, gusl::load_manifest(manifest_path));
    if (csv_path) gusl::write_eval_csv(report, csv_path);
    if (mean_psnr) *mean_psnr = report.mean.psnr_restored;
    if (mean_ssim) *mean_ssim = report.mean.ssim_restored;
  });
}

gusl_status gusl_export_rft(const gusl_model* model, size_t level, const char* csv_path) {
  if (!model || !csv_path) return null_arg("model or csv_path");
  return guarded([&] { gusl::write_rft_csv(model->model, level, csv_path); });
}

gusl_status gusl_export_lnt(const gusl_model* model, size_t level, const char* csv_path) {
  if (!model || !csv_path) return null_arg("model or csv_path");
  return guarded([&] { gusl::write_lnt_csv(model->model, level, csv_path); });
}

}  // extern "C"
