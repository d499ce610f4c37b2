#include "io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "common.hpp"
#include "json.hpp"

namespace gusl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

namespace {

// Little-endian encoding independent of host byte order.
class ByteWriter {
 public:
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) {
    const auto bits = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  void f64s(std::span<const double> v) {
    for (double d : v) f64(d);
  }
  void u32s(std::span<const uint32_t> v) {
    for (uint32_t x : v) u32(x);
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(const std::string& data, ErrorKind kind, std::string what)
      : data_(data), kind_(kind), what_(std::move(what)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::vector<double> f64s(size_t n) {
    need(n * 8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  std::vector<uint32_t> u32s(size_t n) {
    need(n * 4);
    std::vector<uint32_t> v(n);
    for (auto& x : v) x = u32();
    return v;
  }
  size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(size_t n) const {
    if (data_.size() - pos_ < n) throw Error(kind_, what_ + ": unexpected end of data");
  }
  const std::string& data_;
  size_t pos_ = 0;
  ErrorKind kind_;
  std::string what_;
};

std::string lower_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

Image normalize(size_t h, size_t w, const std::vector<double>& raw, const Normalization& win, const std::string& name) {
  if (!(win.hi > win.lo)) throw Error(ErrorKind::InvalidConfig, "normalization window needs lo < hi");
  std::vector<double> data(raw.size());
  const double span = win.hi - win.lo;
  for (size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i])) throw Error(ErrorKind::Format, name + ": non-finite pixel value");
    data[i] = std::clamp((raw[i] - win.lo) / span, 0.0, 1.0);
  }
  return Image(h, w, std::move(data));
}

struct RawPixels {
  size_t height = 0, width = 0;
  std::vector<double> values;
  double maxval = 1.0;
};

RawPixels read_pgm(const std::string& bytes, const std::string& name) {
  size_t pos = 2;
  auto token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw Error(ErrorKind::Format, name + ": corrupt PGM header");
    return std::stol(bytes.substr(start, pos - start));
  };
  RawPixels px;
  const long w = token(), h = token(), maxval = token();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) throw Error(ErrorKind::Format, name + ": corrupt PGM header");
  ++pos;  // single whitespace before the raster
  px.height = static_cast<size_t>(h);
  px.width = static_cast<size_t>(w);
  px.maxval = static_cast<double>(maxval);
  const size_t bpp = maxval > 255 ? 2 : 1;
  const size_t n = px.height * px.width;
  if (bytes.size() < pos + n * bpp) throw Error(ErrorKind::Format, name + ": truncated PGM raster");
  px.values.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bpp);
    px.values[i] = bpp == 2 ? static_cast<double>((p[0] << 8) | p[1]) : static_cast<double>(p[0]);
  }
  return px;
}

struct PngReadState {
  const std::string* bytes;
  size_t pos;
};

void png_read_from_string(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->bytes->size() - st->pos < n) png_error(png, "truncated");
  std::memcpy(out, st->bytes->data() + st->pos, n);
  st->pos += n;
}

RawPixels read_png(const std::string& bytes, const std::string& name) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorKind::Format, name + ": libpng init failed");
  png_infop info = png_create_info_struct(png);
  RawPixels px;
  PngReadState state{&bytes, 0};
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::Format, name + ": corrupt PNG");
  }
  png_set_read_fn(png, &state, png_read_from_string);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::Format, name + ": only grayscale PNG is supported");
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  px.width = png_get_image_width(png, info);
  px.height = png_get_image_height(png, info);
  const size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * px.height);
  rows.resize(px.height);
  for (size_t r = 0; r < px.height; ++r) rows[r] = buffer.data() + r * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const bool wide = depth == 16;
  px.maxval = wide ? 65535.0 : 255.0;
  px.values.resize(px.height * px.width);
  for (size_t r = 0; r < px.height; ++r)
    for (size_t c = 0; c < px.width; ++c) {
      const unsigned char* p = rows[r] + c * (wide ? 2 : 1);
      px.values[r * px.width + c] = wide ? static_cast<double>((p[0] << 8) | p[1]) : static_cast<double>(p[0]);
    }
  return px;
}

RawPixels read_raw(const std::string& bytes, const std::string& name) {
  ByteReader in(bytes, ErrorKind::Format, name);
  RawPixels px;
  px.height = in.u32();
  px.width = in.u32();
  if (px.height == 0 || px.width == 0) throw Error(ErrorKind::Format, name + ": zero image dimension");
  if (in.remaining() != px.height * px.width * 4)
    throw Error(ErrorKind::Format, name + ": raw payload does not match header dimensions");
  px.values.resize(px.height * px.width);
  for (auto& v : px.values) v = in.f32();
  return px;
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

std::string encode_png16(const Image& img) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  std::string out;
  std::vector<unsigned char> buffer(img.size() * 2);
  for (size_t i = 0; i < img.size(); ++i) {
    const auto v = static_cast<uint16_t>(std::lround(std::clamp(img.pixels()[i], 0.0, 1.0) * 65535.0));
    buffer[2 * i] = static_cast<unsigned char>(v >> 8);
    buffer[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  std::vector<png_bytep> rows(img.height());
  for (size_t r = 0; r < img.height(); ++r) rows[r] = buffer.data() + r * img.width() * 2;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::Io, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_string, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

Image load_image(const fs::path& path, std::optional<Normalization> window) {
  const std::string bytes = read_file(path);
  const std::string name = path.string();
  RawPixels px;
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), "\x89PNG", 4) == 0) {
    px = read_png(bytes, name);
  } else if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
    px = read_pgm(bytes, name);
  } else if (lower_ext(path) == ".png" || lower_ext(path) == ".pgm") {
    throw Error(ErrorKind::Format, name + ": bad signature for " + lower_ext(path));
  } else {
    px = read_raw(bytes, name);
  }
  return normalize(px.height, px.width, px.values, window.value_or(Normalization{0.0, px.maxval}), name);
}

void save_image(const Image& img, const fs::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    write_file_atomic(path, encode_png16(img));
  } else if (ext == ".pgm") {
    std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n65535\n";
    for (double v : img.pixels()) {
      const auto q = static_cast<uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
      out.push_back(static_cast<char>(q >> 8));
      out.push_back(static_cast<char>(q & 0xff));
    }
    write_file_atomic(path, out);
  } else {
    ByteWriter w;
    w.u32(static_cast<uint32_t>(img.height()));
    w.u32(static_cast<uint32_t>(img.width()));
    for (double v : img.pixels()) w.f32(static_cast<float>(v));
    write_file_atomic(path, w.str());
  }
}

std::vector<ManifestEntry> Manifest::with_split(const std::string& split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

Manifest load_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  Manifest m;
  try {
    if (doc.contains("normalization")) {
      const auto& n = doc.at("normalization");
      m.normalization = Normalization{n.at("lo").get<double>(), n.at("hi").get<double>()};
      if (!(m.normalization->hi > m.normalization->lo))
        throw Error(ErrorKind::InvalidConfig, path.string() + ": normalization needs lo < hi");
    }
    for (const auto& e : doc.at("entries")) {
      ManifestEntry entry;
      entry.ldct = base / e.at("ldct").get<std::string>();
      if (e.contains("ndct") && !e.at("ndct").is_null()) entry.ndct = base / e.at("ndct").get<std::string>();
      entry.split = e.value("split", std::string("train"));
      if (entry.split != "train" && entry.split != "test")
        throw Error(ErrorKind::Format, path.string() + ": split must be 'train' or 'test'");
      m.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
  return m;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  json doc;
  if (manifest.normalization)
    doc["normalization"] = {{"lo", manifest.normalization->lo}, {"hi", manifest.normalization->hi}};
  const fs::path base = path.parent_path();
  doc["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    json j;
    j["ldct"] = fs::relative(e.ldct, base).generic_string();
    if (e.ndct) j["ndct"] = fs::relative(*e.ndct, base).generic_string();
    j["split"] = e.split;
    doc["entries"].push_back(j);
  }
  write_file_atomic(path, doc.dump(2) + "\n");
}

namespace {

json gbrt_to_json(const GbrtParams& p) {
  return {{"max_depth", p.max_depth},           {"rounds", p.rounds},   {"learning_rate", p.learning_rate},
          {"lambda", p.lambda},                 {"gamma", p.gamma},     {"min_child_weight", p.min_child_weight},
          {"subsample", p.subsample},           {"hist_bins", p.hist_bins},
          {"exact_max_rows", p.exact_max_rows}};
}

template <typename T>
void take(const json& j, const char* key, T& out, std::vector<std::string>& seen) {
  if (j.contains(key)) {
    out = j.at(key).get<T>();
    seen.emplace_back(key);
  }
}

void reject_unknown(const json& j, const std::vector<std::string>& seen, const std::string& where) {
  for (const auto& [key, _] : j.items())
    if (std::find(seen.begin(), seen.end(), key) == seen.end())
      throw Error(ErrorKind::InvalidConfig, "unknown config key '" + where + key + "'");
}

GbrtParams gbrt_from_json(const json& j, GbrtParams p, const std::string& where) {
  std::vector<std::string> seen;
  take(j, "max_depth", p.max_depth, seen);
  take(j, "rounds", p.rounds, seen);
  take(j, "learning_rate", p.learning_rate, seen);
  take(j, "lambda", p.lambda, seen);
  take(j, "gamma", p.gamma, seen);
  take(j, "min_child_weight", p.min_child_weight, seen);
  take(j, "subsample", p.subsample, seen);
  take(j, "hist_bins", p.hist_bins, seen);
  take(j, "exact_max_rows", p.exact_max_rows, seen);
  reject_unknown(j, seen, where);
  return p;
}

json config_json(const TrainConfig& c) {
  return {{"level_count", c.level_count},
          {"bins", c.bins},
          {"split", c.split},
          {"seed", c.seed},
          {"subsample_finest", c.subsample_finest},
          {"subsample_coarse", c.subsample_coarse},
          {"residual", gbrt_to_json(c.residual)},
          {"sfg", {{"aux", gbrt_to_json(c.sfg.aux)}, {"leaf_rows_only", c.sfg.leaf_rows_only}}},
          {"codebook_k", c.codebook_k},
          {"codebook_iters", c.codebook_iters},
          {"codebook_from_ndct", c.codebook_from_ndct},
          {"clip", c.clip},
          {"ldct_window", c.ldct_window},
          {"diff_window", c.diff_window},
          {"nc_window", c.nc_window},
          {"raw_pixel_channel", c.raw_pixel_channel},
          {"saab_patch_cap", c.saab_patch_cap}};
}

TrainConfig config_from(const json& j) {
  TrainConfig c;
  std::vector<std::string> seen;
  take(j, "level_count", c.level_count, seen);
  take(j, "bins", c.bins, seen);
  take(j, "split", c.split, seen);
  take(j, "seed", c.seed, seen);
  take(j, "subsample_finest", c.subsample_finest, seen);
  take(j, "subsample_coarse", c.subsample_coarse, seen);
  if (j.contains("residual")) {
    c.residual = gbrt_from_json(j.at("residual"), c.residual, "residual.");
    seen.emplace_back("residual");
  }
  if (j.contains("sfg")) {
    const json& s = j.at("sfg");
    std::vector<std::string> sfg_seen;
    if (s.contains("aux")) {
      c.sfg.aux = gbrt_from_json(s.at("aux"), c.sfg.aux, "sfg.aux.");
      sfg_seen.emplace_back("aux");
    }
    take(s, "leaf_rows_only", c.sfg.leaf_rows_only, sfg_seen);
    reject_unknown(s, sfg_seen, "sfg.");
    seen.emplace_back("sfg");
  }
  take(j, "codebook_k", c.codebook_k, seen);
  take(j, "codebook_iters", c.codebook_iters, seen);
  take(j, "codebook_from_ndct", c.codebook_from_ndct, seen);
  take(j, "clip", c.clip, seen);
  take(j, "ldct_window", c.ldct_window, seen);
  take(j, "diff_window", c.diff_window, seen);
  take(j, "nc_window", c.nc_window, seen);
  take(j, "raw_pixel_channel", c.raw_pixel_channel, seen);
  take(j, "saab_patch_cap", c.saab_patch_cap, seen);
  reject_unknown(j, seen, "");
  c.validate();
  return c;
}

}  // namespace

TrainConfig config_from_json(const std::string& text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config: ") + e.what());
  }
}

std::string config_to_json(const TrainConfig& cfg) { return config_json(cfg).dump(2); }

TrainConfig load_config(const fs::path& path) { return config_from_json(read_file(path)); }

// tensors.bin layout, all little-endian, in this order:
//   codebook centroids            k*16 f64
//   codebook output tiles         k*16 f64 (only when has_values)
//   per level, coarsest first:
//     ldct Saab kernels, energies C*W^2 f64, C f64
//     diff Saab kernels, energies C*W^2 f64, C f64
//     selected candidate indices  n u32
//     per LNT projection          m u32 subset, m f64 weights, f64 intercept
//     per regressor tree, nodes in preorder:
//                                 u32 feature (0xffffffff = leaf), f64 threshold or weight
namespace {

constexpr uint32_t kLeafMark = 0xffffffffu;

void write_saab(ByteWriter& w, const SaabKernels& k) {
  w.f64s(k.kernels);
  w.f64s(k.energies);
}

SaabKernels read_saab(ByteReader& r, const json& meta) {
  SaabKernels k;
  k.window = meta.at("window").get<int>();
  k.count = meta.at("count").get<size_t>();
  k.degenerate = meta.at("degenerate").get<bool>();
  k.kernels = r.f64s(k.count * static_cast<size_t>(k.window) * k.window);
  k.energies = r.f64s(k.count);
  return k;
}

json saab_meta(const SaabKernels& k) {
  return {{"window", k.window}, {"count", k.count}, {"degenerate", k.degenerate}};
}

void write_tree(ByteWriter& w, const Tree& t) {
  for (const TreeNode& n : t.nodes) {
    w.u32(n.is_leaf() ? kLeafMark : static_cast<uint32_t>(n.feature));
    w.f64(n.value);
  }
}

Tree read_tree(ByteReader& r, size_t count) {
  Tree t;
  t.nodes.resize(count);
  for (auto& n : t.nodes) {
    const uint32_t f = r.u32();
    n.feature = f == kLeafMark ? -1 : static_cast<int32_t>(f);
    n.value = r.f64();
  }
  // Rebuild child links from preorder.
  size_t next = 0;
  std::function<int32_t()> link = [&]() -> int32_t {
    if (next >= t.nodes.size()) throw Error(ErrorKind::Corruption, "tree node list is truncated");
    const auto at = static_cast<int32_t>(next++);
    if (!t.nodes[at].is_leaf()) {
      t.nodes[at].left = link();
      t.nodes[at].right = link();
    }
    return at;
  };
  link();
  if (next != t.nodes.size()) throw Error(ErrorKind::Corruption, "tree node list has trailing nodes");
  return t;
}

json diagnostics_json(const GuslModel& model) {
  json levels = json::array();
  for (const LevelModel& lm : model.levels) {
    const LevelDiagnostics& d = lm.diagnostics;
    json meta = json::array();
    for (const ColumnMeta& m : d.candidates)
      meta.push_back({static_cast<int>(m.source), m.channel, m.dy, m.dx});
    levels.push_back({{"level", lm.level},
                      {"candidates", meta},
                      {"train_loss", d.train_loss},
                      {"val_loss", d.val_loss},
                      {"train_rank", d.train_rank},
                      {"val_rank", d.val_rank},
                      {"joint_score", d.joint_score},
                      {"radius", d.radius},
                      {"selected", d.selected},
                      {"lnt_loss", d.lnt_loss},
                      {"selected_loss", d.selected_loss},
                      {"sfg_degenerate", d.sfg_degenerate}});
  }
  return {{"levels", levels}};
}

void read_diagnostics(const json& doc, GuslModel& model) {
  const auto& levels = doc.at("levels");
  if (levels.size() != model.levels.size()) throw Error(ErrorKind::Corruption, "diagnostics level count mismatch");
  for (size_t i = 0; i < levels.size(); ++i) {
    const json& j = levels[i];
    LevelDiagnostics& d = model.levels[i].diagnostics;
    for (const auto& m : j.at("candidates"))
      d.candidates.push_back({static_cast<FeatureSource>(m.at(0).get<int>()), m.at(1).get<int>(), m.at(2).get<int>(),
                              m.at(3).get<int>()});
    d.train_loss = j.at("train_loss").get<std::vector<double>>();
    d.val_loss = j.at("val_loss").get<std::vector<double>>();
    d.train_rank = j.at("train_rank").get<std::vector<uint32_t>>();
    d.val_rank = j.at("val_rank").get<std::vector<uint32_t>>();
    d.joint_score = j.at("joint_score").get<std::vector<uint32_t>>();
    d.radius = j.at("radius").get<size_t>();
    d.selected = j.at("selected").get<std::vector<uint32_t>>();
    d.lnt_loss = j.at("lnt_loss").get<std::vector<double>>();
    d.selected_loss = j.at("selected_loss").get<std::vector<double>>();
    d.sfg_degenerate = j.at("sfg_degenerate").get<bool>();
  }
}

}  // namespace

void save_model(const GuslModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

  ByteWriter w;
  w.f64s(model.codebook.centroids);
  w.f64s(model.codebook.values);
  json levels = json::array();
  for (const LevelModel& lm : model.levels) {
    write_saab(w, lm.saab_ldct);
    write_saab(w, lm.saab_diff);
    w.u32s(lm.selected);
    json projections = json::array();
    for (const LntProjection& p : lm.sfg.projections) {
      w.u32s(p.subset);
      w.f64s(p.weights);
      w.f64(p.intercept);
      projections.push_back(p.subset.size());
    }
    json trees = json::array();
    for (const Tree& t : lm.regressor.trees) {
      write_tree(w, t);
      trees.push_back(t.nodes.size());
    }
    levels.push_back({{"level", lm.level},
                      {"saab_ldct", saab_meta(lm.saab_ldct)},
                      {"saab_diff", saab_meta(lm.saab_diff)},
                      {"selected", lm.selected.size()},
                      {"sfg", {{"source_dims", lm.sfg.source_dims}, {"projections", projections}}},
                      {"regressor",
                       {{"base_score", lm.regressor.base_score},
                        {"params", gbrt_to_json(lm.regressor.params)},
                        {"tree_nodes", trees}}}});
  }
  const json doc = {{"format", model.version},
                    {"config", config_json(model.config)},
                    {"codebook", {{"k", model.codebook.k}, {"has_values", !model.codebook.values.empty()}}},
                    {"levels", levels},
                    {"tensor_bytes", w.str().size()}};
  write_file_atomic(dir / "tensors.bin", w.str());
  write_file_atomic(dir / "diagnostics.json", diagnostics_json(model).dump() + "\n");
  write_file_atomic(dir / "model.json", doc.dump(2) + "\n");
}

GuslModel load_model(const fs::path& dir) {
  json doc;
  try {
    doc = json::parse(read_file(dir / "model.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Corruption, (dir / "model.json").string() + ": " + e.what());
  }
  GuslModel model;
  try {
    model.version = doc.at("format").get<std::string>();
    if (model.version != kModelVersion)
      throw Error(ErrorKind::IncompatibleModel,
                  "model format '" + model.version + "' is not supported (expected " + kModelVersion + ")");
    model.config = config_from(doc.at("config"));

    const std::string bytes = read_file(dir / "tensors.bin");
    if (bytes.size() != doc.at("tensor_bytes").get<size_t>())
      throw Error(ErrorKind::Corruption, "tensors.bin is " + std::to_string(bytes.size()) + " bytes, expected " +
                                             std::to_string(doc.at("tensor_bytes").get<size_t>()));
    ByteReader r(bytes, ErrorKind::Corruption, "tensors.bin");

    model.codebook.k = doc.at("codebook").at("k").get<size_t>();
    model.codebook.centroids = r.f64s(model.codebook.k * kCodebookDim);
    if (doc.at("codebook").at("has_values").get<bool>()) model.codebook.values = r.f64s(model.codebook.k * kCodebookDim);

    for (const json& lj : doc.at("levels")) {
      LevelModel lm;
      lm.level = lj.at("level").get<size_t>();
      lm.saab_ldct = read_saab(r, lj.at("saab_ldct"));
      lm.saab_diff = read_saab(r, lj.at("saab_diff"));
      lm.selected = r.u32s(lj.at("selected").get<size_t>());
      lm.sfg.source_dims = lj.at("sfg").at("source_dims").get<size_t>();
      for (const json& pj : lj.at("sfg").at("projections")) {
        const auto m = pj.get<size_t>();
        LntProjection p;
        p.subset = r.u32s(m);
        p.weights = r.f64s(m);
        p.intercept = r.f64();
        lm.sfg.projections.push_back(std::move(p));
      }
      const json& rj = lj.at("regressor");
      lm.regressor.base_score = rj.at("base_score").get<double>();
      lm.regressor.params = gbrt_from_json(rj.at("params"), GbrtParams{}, "regressor.");
      for (const json& tj : rj.at("tree_nodes")) lm.regressor.trees.push_back(read_tree(r, tj.get<size_t>()));
      model.levels.push_back(std::move(lm));
    }
    if (r.remaining() != 0) throw Error(ErrorKind::Corruption, "tensors.bin has trailing bytes");
    if (model.levels.size() != model.config.level_count)
      throw Error(ErrorKind::Corruption, "model.json level count does not match its configuration");
    if (fs::exists(dir / "diagnostics.json")) read_diagnostics(json::parse(read_file(dir / "diagnostics.json")), model);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Corruption, dir.string() + ": " + e.what());
  }
  return model;
}

namespace {

void blur_axis(const std::vector<double>& src, std::vector<double>& dst, size_t h, size_t w,
               const std::vector<double>& kernel, bool horizontal) {
  const auto r = static_cast<ptrdiff_t>(kernel.size() / 2);
  for (size_t y = 0; y < h; ++y)
    for (size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (ptrdiff_t k = -r; k <= r; ++k) {
        const double wgt = kernel[static_cast<size_t>(k + r)];
        if (horizontal)
          acc += wgt * src[y * w + static_cast<size_t>(reflect_index(static_cast<ptrdiff_t>(x) + k, static_cast<ptrdiff_t>(w)))];
        else
          acc += wgt * src[static_cast<size_t>(reflect_index(static_cast<ptrdiff_t>(y) + k, static_cast<ptrdiff_t>(h))) * w + x];
      }
      dst[y * w + x] = acc;
    }
}

}  // namespace

Image synth_degrade(const Image& clean, const DegradeParams& p) {
  if (!(p.blur_sigma >= 0.0) || !(p.noise_sigma >= 0.0))
    throw Error(ErrorKind::InvalidConfig, "degradation sigmas must be >= 0");
  std::vector<double> data(clean.pixels().begin(), clean.pixels().end());
  if (p.blur_sigma > 0.0) {
    const auto radius = static_cast<int>(std::ceil(3.0 * p.blur_sigma));
    std::vector<double> kernel(2 * radius + 1);
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
      kernel[i + radius] = std::exp(-(i * i) / (2.0 * p.blur_sigma * p.blur_sigma));
      total += kernel[i + radius];
    }
    for (auto& k : kernel) k /= total;
    std::vector<double> tmp(data.size());
    blur_axis(data, tmp, clean.height(), clean.width(), kernel, true);
    blur_axis(tmp, data, clean.height(), clean.width(), kernel, false);
  }
  if (p.noise_sigma > 0.0) {
    Rng rng(p.seed);
    for (auto& v : data) v += p.noise_sigma * rng.normal();
  }
  for (auto& v : data) v = std::clamp(v, 0.0, 1.0);
  return Image(clean.height(), clean.width(), std::move(data));
}

Image make_phantom(size_t size, uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 0.0);
  const double n = static_cast<double>(size);
  auto inside_ellipse = [](double x, double y, double cx, double cy, double rx, double ry, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (x - cx) * c + (y - cy) * s;
    const double v = -(x - cx) * s + (y - cy) * c;
    return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
  };
  const double body_rx = n * (0.38 + 0.08 * rng.uniform());
  const double body_ry = n * (0.30 + 0.10 * rng.uniform());
  const double body_level = 0.35 + 0.15 * rng.uniform();
  for (size_t y = 0; y < size; ++y)
    for (size_t x = 0; x < size; ++x)
      if (inside_ellipse(x + 0.5, y + 0.5, n / 2, n / 2, body_rx, body_ry, 0.0)) img.at(y, x) = body_level;

  const int shapes = 5 + static_cast<int>(rng.below(6));
  for (int s = 0; s < shapes; ++s) {
    const bool ellipse = rng.uniform() < 0.6;
    const double cx = n * (0.25 + 0.5 * rng.uniform());
    const double cy = n * (0.25 + 0.5 * rng.uniform());
    const double rx = n * (0.03 + 0.12 * rng.uniform());
    const double ry = n * (0.03 + 0.12 * rng.uniform());
    const double angle = M_PI * rng.uniform();
    const double level = 0.05 + 0.9 * rng.uniform();
    for (size_t y = 0; y < size; ++y)
      for (size_t x = 0; x < size; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const bool hit = ellipse ? inside_ellipse(px, py, cx, cy, rx, ry, angle)
                                 : std::abs(px - cx) <= rx && std::abs(py - cy) <= ry;
        if (hit) img.at(y, x) = level;
      }
  }
  return img;
}

EvalReport evaluate(const GuslModel& model, const Manifest& manifest) {
  std::vector<ManifestEntry> entries = manifest.with_split("test");
  if (entries.empty()) entries = manifest.entries;
  EvalReport report;
  report.window = manifest.normalization.value_or(Normalization{});
  for (const auto& e : entries) {
    if (!e.ndct) continue;
    const Image ldct = load_image(e.ldct, manifest.normalization);
    const Image ndct = load_image(*e.ndct, manifest.normalization);
    if (!ldct.same_shape(ndct)) throw Error(ErrorKind::Shape, e.ldct.string() + ": reference differs in size");
    const Image out = restore(model, ldct);
    EvalRow row;
    row.name = e.ldct.filename().string();
    const double inf = std::numeric_limits<double>::infinity();
    row.psnr_ldct = mse(ldct, ndct) == 0.0 ? inf : psnr(ldct, ndct);
    row.ssim_ldct = ssim(ldct, ndct);
    row.identical = mse(out, ndct) == 0.0;
    row.psnr_restored = row.identical ? inf : psnr(out, ndct);
    row.ssim_restored = ssim(out, ndct);
    report.rows.push_back(row);
  }
  if (report.rows.empty()) throw Error(ErrorKind::InsufficientData, "no manifest entry has a reference image");
  report.mean.name = "mean";
  const auto count = static_cast<double>(report.rows.size());
  for (const auto& r : report.rows) {
    report.mean.psnr_ldct += r.psnr_ldct / count;
    report.mean.ssim_ldct += r.ssim_ldct / count;
    report.mean.psnr_restored += r.psnr_restored / count;
    report.mean.ssim_restored += r.ssim_restored / count;
    report.mean.identical = report.mean.identical || r.identical;
  }
  return report;
}

namespace {

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_eval_csv(const EvalReport& report, const fs::path& path) {
  std::string out = "image,psnr_ldct,ssim_ldct,psnr_restored,ssim_restored,identical,window_lo,window_hi\n";
  auto row = [&](const EvalRow& r) {
    out += r.name + "," + num(r.psnr_ldct) + "," + num(r.ssim_ldct) + "," + num(r.psnr_restored) + "," +
           num(r.ssim_restored) + "," + (r.identical ? "1" : "0") + "," + num(report.window.lo) + "," +
           num(report.window.hi) + "\n";
  };
  for (const auto& r : report.rows) row(r);
  row(report.mean);
  write_file_atomic(path, out);
}

namespace {

const LevelModel& find_level(const GuslModel& model, size_t level) {
  for (const auto& lm : model.levels)
    if (lm.level == level) return lm;
  throw Error(ErrorKind::InvalidConfig, "model has no level " + std::to_string(level));
}

}  // namespace

void write_rft_csv(const GuslModel& model, size_t level, const fs::path& path) {
  const LevelModel& lm = find_level(model, level);
  const LevelDiagnostics& d = lm.diagnostics;
  if (d.candidates.empty()) throw Error(ErrorKind::InvalidModel, "model carries no diagnostics for this level");
  std::vector<char> selected(d.candidates.size(), 0);
  for (uint32_t s : d.selected) selected[s] = 1;
  std::string out = "column,source,channel,dy,dx,train_loss,val_loss,train_rank,val_rank,joint_score,selected\n";
  for (size_t j = 0; j < d.candidates.size(); ++j) {
    const ColumnMeta& m = d.candidates[j];
    out += std::to_string(j) + "," + feature_source_name(m.source) + "," + std::to_string(m.channel) + "," +
           std::to_string(m.dy) + "," + std::to_string(m.dx) + "," + num(d.train_loss[j]) + "," + num(d.val_loss[j]) +
           "," + std::to_string(d.train_rank[j]) + "," + std::to_string(d.val_rank[j]) + "," +
           std::to_string(d.joint_score[j]) + "," + (selected[j] ? "1" : "0") + "\n";
  }
  write_file_atomic(path, out);
}

void write_lnt_csv(const GuslModel& model, size_t level, const fs::path& path) {
  const LevelModel& lm = find_level(model, level);
  const LevelDiagnostics& d = lm.diagnostics;
  std::string out = "kind,index,subset,rft_loss\n";
  for (size_t j = 0; j < d.selected_loss.size(); ++j)
    out += "selected," + std::to_string(j) + "," + std::to_string(lm.selected[j]) + "," + num(d.selected_loss[j]) + "\n";
  for (size_t p = 0; p < d.lnt_loss.size() && p < lm.sfg.projections.size(); ++p) {
    std::string subset;
    for (uint32_t c : lm.sfg.projections[p].subset) subset += (subset.empty() ? "" : " ") + std::to_string(c);
    out += "lnt," + std::to_string(p) + "," + subset + "," + num(d.lnt_loss[p]) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace gusl
