// Command-line front end. Everything goes through the public C API.
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gusl/gusl.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Failure {
  gusl_status status;
  std::string message;
};

void check(gusl_status s) {
  if (s != GUSL_OK) throw Failure{s, gusl_last_error()};
}

[[noreturn]] void fail(gusl_status s, const std::string& message) { throw Failure{s, message}; }

// Owning wrappers so failures mid-command do not leak handles.
struct ImageHandle {
  gusl_image* p = nullptr;
  ImageHandle() = default;
  ImageHandle(const ImageHandle&) = delete;
  ImageHandle(ImageHandle&& o) noexcept : p(o.p) { o.p = nullptr; }
  ~ImageHandle() { gusl_image_free(p); }
};

struct ModelHandle {
  gusl_model* p = nullptr;
  ~ModelHandle() { gusl_model_free(p); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(GUSL_ERR_IO, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) fail(GUSL_ERR_IO, "cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(GUSL_ERR_IO, "cannot rename " + tmp.string());
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(GUSL_ERR_IO, "cannot create " + dir.string() + ": " + ec.message());
}

bool is_image_file(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e == ".png" || e == ".pgm" || e == ".raw" || e == ".f32";
}

struct Options {
  std::string manifest, config, out, model, in, report;
  double blur = 0.0, noise = 0.0;
  uint64_t seed = 0;
  size_t level = 1;
  std::string lnt_out;
  bool window = false;
  double lo = 0.0, hi = 1.0;
  size_t phantoms = 0, phantom_size = 128, test_count = 0;
  std::string ext = ".pgm";
};

void run_train(const Options& o) {
  ModelHandle m;
  std::string cfg;
  if (!o.config.empty()) cfg = slurp(o.config);
  check(gusl_train_manifest(o.manifest.c_str(), o.config.empty() ? nullptr : cfg.c_str(), &m.p));
  check(gusl_model_save(m.p, o.out.c_str()));
}

void run_restore(const Options& o) {
  ModelHandle m;
  ImageHandle in, out;
  check(gusl_model_load(o.model.c_str(), &m.p));
  check(gusl_image_load(o.in.c_str(), o.window ? 1 : 0, o.lo, o.hi, &in.p));
  check(gusl_restore(m.p, in.p, &out.p));
  check(gusl_image_save(out.p, o.out.c_str()));
}

void run_eval(const Options& o) {
  ModelHandle m;
  check(gusl_model_load(o.model.c_str(), &m.p));
  double psnr = 0, ssim = 0;
  check(gusl_evaluate(m.p, o.manifest.c_str(), o.report.c_str(), &psnr, &ssim));
  std::printf("mean_psnr=%.6f\nmean_ssim=%.6f\n", psnr, ssim);
}

// Without --in, writes a phantom dataset: clean/, ldct/ and manifest.json.
void run_synth(const Options& o) {
  const fs::path out_dir = o.out;
  make_dirs(out_dir);
  if (!o.in.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(o.in))
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (size_t i = 0; i < files.size(); ++i) {
      ImageHandle clean, noisy;
      check(gusl_image_load(files[i].c_str(), o.window ? 1 : 0, o.lo, o.hi, &clean.p));
      check(gusl_synth_degrade(clean.p, o.blur, o.noise, o.seed + i, &noisy.p));
      check(gusl_image_save(noisy.p, (out_dir / files[i].filename()).c_str()));
    }
    std::printf("degraded=%zu\n", files.size());
    return;
  }
  if (o.phantoms == 0) fail(GUSL_ERR_INVALID_CONFIG, "synth needs --in or --phantoms");
  if (o.test_count >= o.phantoms) fail(GUSL_ERR_INVALID_CONFIG, "--test must leave at least one train image");
  make_dirs(out_dir / "clean");
  make_dirs(out_dir / "ldct");
  nlohmann::json manifest;
  manifest["entries"] = nlohmann::json::array();
  for (size_t i = 0; i < o.phantoms; ++i) {
    ImageHandle clean, noisy;
    check(gusl_make_phantom(o.phantom_size, o.seed * 1000003 + i, &clean.p));
    check(gusl_synth_degrade(clean.p, o.blur, o.noise, o.seed + i, &noisy.p));
    char name[32];
    std::snprintf(name, sizeof name, "phantom_%03zu%s", i, o.ext.c_str());
    check(gusl_image_save(clean.p, (out_dir / "clean" / name).c_str()));
    check(gusl_image_save(noisy.p, (out_dir / "ldct" / name).c_str()));
    manifest["entries"].push_back({{"ldct", std::string("ldct/") + name},
                                   {"ndct", std::string("clean/") + name},
                                   {"split", i + o.test_count >= o.phantoms ? "test" : "train"}});
  }
  write_text_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  std::printf("phantoms=%zu\n", o.phantoms);
}

void run_inspect(const Options& o) {
  ModelHandle m;
  check(gusl_model_load(o.model.c_str(), &m.p));
  check(gusl_export_rft(m.p, o.level, o.out.c_str()));
  if (!o.lnt_out.empty()) check(gusl_export_lnt(m.p, o.level, o.lnt_out.c_str()));
}

void run_complexity(const Options& o) {
  ModelHandle m;
  check(gusl_model_load(o.model.c_str(), &m.p));
  double params = 0, macs = 0;
  check(gusl_complexity(m.p, &params, &macs));
  std::printf("param_count=%.17g\nmacs_per_pixel=%.17g\n", params, macs);
}

void add_window(CLI::App* cmd, Options& o) {
  cmd->add_option("--lo", o.lo, "Intensity mapped to 0 (with --hi)");
  cmd->add_option("--hi", o.hi, "Intensity mapped to 1 (with --lo)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GUSL coarse-to-fine image restoration"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "Train a model from a manifest");
  train->add_option("--manifest", o.manifest)->required();
  train->add_option("--config", o.config, "JSON training configuration");
  train->add_option("--out", o.out, "Model directory")->required();

  auto* restore = app.add_subcommand("restore", "Restore one image");
  restore->add_option("--model", o.model)->required();
  restore->add_option("--in", o.in)->required();
  restore->add_option("--out", o.out)->required();
  add_window(restore, o);

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM report over a manifest");
  eval->add_option("--model", o.model)->required();
  eval->add_option("--manifest", o.manifest)->required();
  eval->add_option("--report", o.report, "CSV output")->required();

  auto* synth = app.add_subcommand("synth", "Degrade clean images, or generate a phantom dataset");
  synth->add_option("--in", o.in, "Directory of clean images");
  synth->add_option("--out", o.out)->required();
  synth->add_option("--blur", o.blur, "Gaussian blur sigma in pixels")->check(CLI::NonNegativeNumber);
  synth->add_option("--noise", o.noise, "Noise sigma in [0,1] units")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", o.seed);
  synth->add_option("--phantoms", o.phantoms, "Number of phantoms when --in is absent");
  synth->add_option("--size", o.phantom_size, "Phantom side length")->check(CLI::PositiveNumber);
  synth->add_option("--test", o.test_count, "Phantoms tagged as test split");
  synth->add_option("--format", o.ext, "Phantom file extension")->check(CLI::IsMember({".pgm", ".png", ".raw"}));
  add_window(synth, o);

  auto* inspect = app.add_subcommand("inspect", "Export RFT diagnostics of one level");
  inspect->add_option("--model", o.model)->required();
  inspect->add_option("--level", o.level, "1 = finest")->check(CLI::PositiveNumber);
  inspect->add_option("--out", o.out)->required();
  inspect->add_option("--lnt-out", o.lnt_out, "Also export generated-feature losses");

  auto* complexity = app.add_subcommand("complexity", "Parameter count and MACs per pixel");
  complexity->add_option("--model", o.model)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  o.window = restore->count("--lo") + restore->count("--hi") + synth->count("--lo") + synth->count("--hi") > 0;

  try {
    if (*train) run_train(o);
    else if (*restore) run_restore(o);
    else if (*eval) run_eval(o);
    else if (*synth) run_synth(o);
    else if (*inspect) run_inspect(o);
    else if (*complexity) run_complexity(o);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: category=%s message=%s\n", gusl_status_name(f.status), f.message.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: category=internal message=%s\n", e.what());
    return 1;
  }
  return 0;
}
