#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "image.hpp"
#include "pipeline.hpp"

namespace gusl {

// Intensity window [lo, hi] in file units, mapped affinely onto [0, 1].
struct Normalization {
  double lo = 0.0;
  double hi = 1.0;
};

// 8/16-bit grayscale PNG, binary PGM (P5), or raw float: an 8-byte header of
// two little-endian uint32 (height, width) followed by height*width
// little-endian float32 values. Without a window the format's full range is
// used ([0, maxval] for integer formats, [0, 1] for raw). Values are clamped.
Image load_image(const std::filesystem::path& path, std::optional<Normalization> window = std::nullopt);

// Format chosen by extension: .png (16-bit), .pgm (16-bit P5), anything else
// raw float32. Written atomically (temp file then rename).
void save_image(const Image& img, const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path ldct;
  std::optional<std::filesystem::path> ndct;
  std::string split = "train";
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::optional<Normalization> normalization;

  std::vector<ManifestEntry> with_split(const std::string& split) const;
};

// Relative paths resolve against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// JSON document mirroring the TrainConfig fields; absent keys keep defaults.
TrainConfig config_from_json(const std::string& text);
std::string config_to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::filesystem::path& path);

// Directory with model.json (config and shapes), tensors.bin (little-endian
// payload) and diagnostics.json (per-level RFT statistics).
void save_model(const GuslModel& model, const std::filesystem::path& dir);
GuslModel load_model(const std::filesystem::path& dir);

struct DegradeParams {
  double blur_sigma = 0.0;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
};

// Gaussian blur (kernel truncated at 3 sigma, reflect padding), additive
// Gaussian noise, clamp to [0, 1].
Image synth_degrade(const Image& clean, const DegradeParams& p);

// Procedural phantom: a body ellipse holding random ellipses and rectangles
// of varying intensity.
Image make_phantom(size_t size, uint64_t seed);

struct EvalRow {
  std::string name;
  double psnr_ldct = 0, ssim_ldct = 0;
  double psnr_restored = 0, ssim_restored = 0;
  bool identical = false;  // restored equals the reference; PSNR reported as inf
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;
  Normalization window;
};

// Restores every entry that has a reference (test split when present, else all).
EvalReport evaluate(const GuslModel& model, const Manifest& manifest);
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

// One row per candidate feature of the given level (1 = finest).
void write_rft_csv(const GuslModel& model, size_t level, const std::filesystem::path& path);
// One row per generated LNT feature of the given level.
void write_lnt_csv(const GuslModel& model, size_t level, const std::filesystem::path& path);

// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace gusl
