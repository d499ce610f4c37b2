#include "pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <numeric>
#include <random>
#include <string>

#include "common.hpp"

namespace gusl {

namespace {

enum SeedPurpose : uint64_t {
  kSeedCodebook = 1,
  kSeedSaabLdct,
  kSeedSaabDiff,
  kSeedRows,
  kSeedSelect,
  kSeedSfg,
  kSeedRegressor,
};

// Pixels per regressor batch at inference, bounding the feature matrix size.
constexpr size_t kPredictBatch = 16384;

}  // namespace

uint64_t derive_seed(uint64_t base, uint64_t level, uint64_t purpose) {
  std::seed_seq seq{static_cast<uint32_t>(base), static_cast<uint32_t>(base >> 32), static_cast<uint32_t>(level),
                    static_cast<uint32_t>(purpose)};
  uint32_t out[2];
  seq.generate(out, out + 2);
  return static_cast<uint64_t>(out[1]) << 32 | out[0];
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, what); };
  if (level_count < 2) fail("level_count must be >= 2");
  if (bins < 2) fail("bins must be >= 2");
  if (!(split > 0.0 && split < 1.0)) fail("split must lie in (0, 1)");
  if (!(subsample_finest > 0.0 && subsample_finest <= 1.0)) fail("subsample_finest must lie in (0, 1]");
  if (!(subsample_coarse > 0.0 && subsample_coarse <= 1.0)) fail("subsample_coarse must lie in (0, 1]");
  if (codebook_k < 1) fail("codebook_k must be >= 1");
  if (codebook_iters < 1) fail("codebook_iters must be >= 1");
  for (int w : {ldct_window, diff_window, nc_window})
    if (w < 1 || w % 2 == 0) fail("windows must be odd and positive");
  if (saab_patch_cap == 0) fail("saab_patch_cap must be positive");
  residual.validate();
  sfg.aux.validate();
  if (sfg.aux.max_depth < 1) fail("sfg auxiliary depth must be >= 1");
}

LevelFeatures::LevelFeatures(const LevelModel& level, const TrainConfig& cfg, const Image& ldct,
                             const Image& upscaled)
    : LevelFeatures(level.saab_ldct, level.saab_diff, cfg, ldct, upscaled) {}

LevelFeatures::LevelFeatures(const SaabKernels& saab_ldct, const SaabKernels& saab_diff,
                             const TrainConfig& cfg, const Image& ldct, const Image& upscaled)
    : ldct_stack_(apply_saab(ldct, saab_ldct, FeatureSource::Ldct)),
      diff_stack_([&] {
        const Image diff = subtract(ldct, upscaled);
        FeatureStack s = apply_saab(diff, saab_diff, FeatureSource::Diff);
        if (cfg.raw_pixel_channel) append_raw_channel(s, diff);
        return s;
      }()),
      sampler_([&] {
        if (cfg.raw_pixel_channel) append_raw_channel(ldct_stack_, ldct);
        return NeighborhoodSampler({&ldct_stack_, &diff_stack_}, cfg.nc_window);
      }()) {}

FeatureMatrix level_inputs(const LevelModel& level, const NeighborhoodSampler& sampler,
                           std::span<const uint32_t> pixels) {
  FeatureMatrix x = sampler.gather(level.selected, pixels);
  if (!level.sfg.projections.empty()) x.append_columns(generate(x, level.sfg));
  return x;
}

namespace {

Image predict_level(const LevelModel& level, const TrainConfig& cfg, const Image& ldct, const Image& upscaled) {
  const LevelFeatures features(level, cfg, ldct, upscaled);
  Image residual(ldct.height(), ldct.width());
  std::vector<uint32_t> pixels;
  for (size_t start = 0; start < ldct.size(); start += kPredictBatch) {
    const size_t end = std::min(ldct.size(), start + kPredictBatch);
    pixels.resize(end - start);
    std::iota(pixels.begin(), pixels.end(), static_cast<uint32_t>(start));
    const FeatureMatrix x = level_inputs(level, features.sampler(), pixels);
    const auto r = level.regressor.predict(x);
    std::copy(r.begin(), r.end(), residual.pixels().begin() + static_cast<ptrdiff_t>(start));
  }
  return compose_prediction(upscaled, residual, cfg.clip);
}

Image seed_prediction(const GuslModel& model, const Image& coarsest) {
  return quantize_predict(coarsest, model.codebook);
}

}  // namespace

// Stage timings on stderr when GUSL_VERBOSE is set to a non-empty value other than 0.
class Progress {
 public:
  Progress() {
    const char* v = std::getenv("GUSL_VERBOSE");
    enabled_ = v && *v && std::string(v) != "0";
  }
  void mark(const char* stage, size_t level, size_t rows = 0, size_t cols = 0) {
    const auto now = std::chrono::steady_clock::now();
    if (enabled_) {
      const double s = std::chrono::duration<double>(now - last_).count();
      std::fprintf(stderr, "gusl: level %zu %-9s %8.2fs", level, stage, s);
      if (rows) std::fprintf(stderr, "  (%zu rows x %zu cols)", rows, cols);
      std::fprintf(stderr, "\n");
    }
    last_ = now;
  }

 private:
  bool enabled_ = false;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

TrainResult train(std::span<const ImagePair> pairs, const TrainConfig& cfg) {
  cfg.validate();
  Progress progress;
  if (pairs.empty()) throw Error(ErrorKind::InsufficientData, "train needs at least one image pair");
  for (const auto& p : pairs) {
    if (!p.ldct.same_shape(p.ndct)) throw Error(ErrorKind::Shape, "ldct/ndct pair differs in size");
    if (!p.ldct.same_shape(pairs[0].ldct)) throw Error(ErrorKind::Shape, "training pairs differ in size");
  }
  const size_t n_images = pairs.size();
  const size_t levels = cfg.level_count;

  std::vector<Pyramid> lp, np;
  for (const auto& p : pairs) {
    lp.push_back(build_pyramid(p.ldct, levels));
    np.push_back(build_pyramid(p.ndct, levels));
  }

  TrainResult result;
  GuslModel& model = result.model;
  model.config = cfg;

  std::vector<double> tiles;
  for (size_t i = 0; i < n_images; ++i) {
    const auto t = tile_patches(lp[i].levels.back());
    tiles.insert(tiles.end(), t.begin(), t.end());
  }
  KMeansTrace km;
  model.codebook = fit_codebook(tiles, cfg.codebook_k, derive_seed(cfg.seed, levels, kSeedCodebook),
                                cfg.codebook_iters, &km);
  result.codebook_reduced = km.k_reduced;
  progress.mark("codebook", levels);
  if (cfg.codebook_from_ndct) {
    std::vector<double> ndct_tiles;
    for (size_t i = 0; i < n_images; ++i) {
      const auto t = tile_patches(np[i].levels.back());
      ndct_tiles.insert(ndct_tiles.end(), t.begin(), t.end());
    }
    model.codebook.values = paired_centroids(model.codebook, tiles, ndct_tiles);
  }

  std::vector<Image> prev(n_images);
  result.predictions.assign(n_images, {});
  for (size_t i = 0; i < n_images; ++i) {
    result.seeds.push_back(seed_prediction(model, lp[i].levels.back()));
  }

  for (size_t li = levels; li-- > 0;) {
    const size_t level_no = li + 1;
    LevelModel lm;
    lm.level = level_no;

    std::vector<Image> ldct(n_images), upscaled(n_images), diff(n_images);
    for (size_t i = 0; i < n_images; ++i) {
      ldct[i] = lp[i].levels[li];
      upscaled[i] = li + 1 == levels ? result.seeds[i] : upscale(prev[i], ldct[i].height(), ldct[i].width());
      diff[i] = subtract(ldct[i], upscaled[i]);
    }
    lm.saab_ldct = fit_saab(sample_patches(ldct, cfg.ldct_window, cfg.saab_patch_cap,
                                           derive_seed(cfg.seed, level_no, kSeedSaabLdct)));
    lm.saab_diff = fit_saab(sample_patches(diff, cfg.diff_window, cfg.saab_patch_cap,
                                           derive_seed(cfg.seed, level_no, kSeedSaabDiff)));

    progress.mark("saab", level_no);
    std::vector<std::unique_ptr<LevelFeatures>> features;
    for (size_t i = 0; i < n_images; ++i)
      features.push_back(std::make_unique<LevelFeatures>(lm.saab_ldct, lm.saab_diff, cfg, ldct[i], upscaled[i]));

    // Training rows: a seeded Bernoulli sample of pixels per image, pooled.
    const double fraction = li == 0 ? cfg.subsample_finest : cfg.subsample_coarse;
    Rng row_rng(derive_seed(cfg.seed, level_no, kSeedRows));
    std::vector<std::vector<uint32_t>> rows(n_images);
    std::vector<size_t> offset(n_images + 1, 0);
    std::vector<double> target;
    for (size_t i = 0; i < n_images; ++i) {
      const Image& truth = np[i].levels[li];
      for (size_t p = 0; p < ldct[i].size(); ++p) {
        if (fraction < 1.0 && !(row_rng.uniform() < fraction)) continue;
        rows[i].push_back(static_cast<uint32_t>(p));
        target.push_back(truth.pixels()[p] - upscaled[i].pixels()[p]);
      }
      offset[i + 1] = offset[i] + rows[i].size();
    }

    const NeighborhoodSampler& first = features[0]->sampler();
    const ColumnFetcher fetch = [&](size_t col, std::span<double> out) {
      for (size_t i = 0; i < n_images; ++i)
        features[i]->sampler().fill_column(col, rows[i], out.subspan(offset[i], rows[i].size()));
    };
    JointSelection sel = joint_select_columns(first.cols(), fetch, target, cfg.bins, cfg.split,
                                              derive_seed(cfg.seed, level_no, kSeedSelect));
    lm.selected = sel.selected;
    progress.mark("select", level_no);

    std::vector<FeatureMatrix> parts;
    for (size_t i = 0; i < n_images; ++i) parts.push_back(features[i]->sampler().gather(lm.selected, rows[i]));
    FeatureMatrix x = FeatureMatrix::stack_rows(parts);
    parts.clear();

    const SfgFit sfg = fit_sfg(x, target, cfg.sfg, derive_seed(cfg.seed, level_no, kSeedSfg));
    lm.sfg = sfg.model;
    progress.mark("sfg", level_no);

    LevelDiagnostics& diag = lm.diagnostics;
    diag.candidates = first.meta();
    diag.train_loss = std::move(sel.train.losses);
    diag.val_loss = std::move(sel.validation.losses);
    diag.train_rank = std::move(sel.train.rank);
    diag.val_rank = std::move(sel.validation.rank);
    diag.joint_score = std::move(sel.joint_score);
    diag.radius = sel.radius;
    diag.selected = lm.selected;
    diag.sfg_degenerate = sfg.degenerate;
    for (size_t j = 0; j < x.cols(); ++j) diag.selected_loss.push_back(rft_loss(x.col(j), target, cfg.bins));

    if (!lm.sfg.projections.empty()) {
      const FeatureMatrix generated = generate(x, lm.sfg);
      for (size_t j = 0; j < generated.cols(); ++j) diag.lnt_loss.push_back(rft_loss(generated.col(j), target, cfg.bins));
      x.append_columns(generated);
    }
    lm.regressor = fit_gbrt(x, target, cfg.residual, derive_seed(cfg.seed, level_no, kSeedRegressor));
    progress.mark("regressor", level_no, x.rows(), x.cols());
    x = FeatureMatrix();
    features.clear();

    for (size_t i = 0; i < n_images; ++i) {
      prev[i] = predict_level(lm, cfg, ldct[i], upscaled[i]);
      result.predictions[i].push_back(prev[i]);
    }
    model.levels.push_back(std::move(lm));
  }
  return result;
}

Restoration restore_levels(const GuslModel& model, const Image& ldct) {
  if (model.version != kModelVersion)
    throw Error(ErrorKind::IncompatibleModel, "model version '" + model.version + "' is not " + kModelVersion);
  if (model.levels.size() != model.config.level_count)
    throw Error(ErrorKind::InvalidModel, "model level count does not match its configuration");
  const Pyramid pyr = build_pyramid(ldct, model.config.level_count);
  Restoration out;
  out.seed = seed_prediction(model, pyr.levels.back());
  Image prev;
  for (const LevelModel& lm : model.levels) {
    const Image& l = pyr.levels[lm.level - 1];
    const Image up = lm.level == model.config.level_count ? out.seed : upscale(prev, l.height(), l.width());
    prev = predict_level(lm, model.config, l, up);
    out.levels.push_back(prev);
  }
  return out;
}

Image restore(const GuslModel& model, const Image& ldct) { return restore_levels(model, ldct).levels.back(); }

Complexity report_complexity(const GuslModel& model) {
  Complexity c;
  const double k = static_cast<double>(model.codebook.k);
  c.param_count += k * kCodebookDim;
  const double coarsest_scale = std::pow(0.25, static_cast<double>(model.config.level_count - 1));
  c.macs_per_pixel += k * coarsest_scale;
  for (const LevelModel& lm : model.levels) {
    double params = 0, macs = 0;
    for (const SaabKernels* s : {&lm.saab_ldct, &lm.saab_diff}) {
      const double entries = static_cast<double>(s->count) * s->window * s->window;
      params += entries;
      macs += entries;
    }
    for (const LntProjection& p : lm.sfg.projections) {
      params += static_cast<double>(p.weights.size()) + 1.0;
      macs += static_cast<double>(p.weights.size());
    }
    for (const Tree& t : lm.regressor.trees) {
      params += 2.0 * static_cast<double>(t.internal_count()) + static_cast<double>(t.leaf_count());
      macs += static_cast<double>(t.depth());
    }
    c.param_count += params;
    c.macs_per_pixel += macs * std::pow(0.25, static_cast<double>(lm.level - 1));
  }
  return c;
}

}  // namespace gusl
