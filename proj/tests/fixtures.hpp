#pragma once
// Shared test models and scratch directories.

#include <filesystem>
#include <random>
#include <string>

#include "features.hpp"
#include "io.hpp"
#include "pipeline.hpp"

namespace fixture {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("gusl_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& s) const { return path / s; }
};

inline gusl::SaabKernels kernels(int window, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  gusl::PatchSet p;
  p.window = window;
  p.values.resize(static_cast<size_t>(4 * window * window * window * window));
  for (double& v : p.values) v = u(gen);
  return gusl::fit_saab(p);
}

// Two levels, a constant-zero codebook and no trees: every input restores to
// an all-zero image.
inline gusl::GuslModel zero_model() {
  gusl::GuslModel m;
  m.config.level_count = 2;
  m.codebook.k = 1;
  m.codebook.centroids.assign(gusl::kCodebookDim, 0.0);
  for (size_t level : {2, 1}) {
    gusl::LevelModel lm;
    lm.level = level;
    lm.saab_ldct = kernels(5, level);
    lm.saab_diff = kernels(7, level + 10);
    m.levels.push_back(lm);
  }
  return m;
}

inline std::vector<gusl::ImagePair> phantom_pairs(size_t n, size_t size, uint64_t seed) {
  std::vector<gusl::ImagePair> pairs;
  for (size_t i = 0; i < n; ++i) {
    gusl::Image clean = gusl::make_phantom(size, seed * 31 + i);
    pairs.push_back({gusl::synth_degrade(clean, {1.0, 0.04, seed + i}), clean});
  }
  return pairs;
}

inline gusl::TrainConfig tiny_config() {
  gusl::TrainConfig cfg;
  cfg.level_count = 2;
  cfg.seed = 3;
  cfg.residual.rounds = 3;
  cfg.residual.max_depth = 3;
  cfg.sfg.aux.rounds = 3;
  cfg.codebook_k = 8;
  return cfg;
}

inline gusl::GuslModel tiny_model() { return gusl::train(phantom_pairs(2, 32, 7), tiny_config()).model; }

}  // namespace fixture
