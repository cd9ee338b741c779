#pragma once

#include <png.h>

#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "lmfap/error.hpp"
#include "lmfap/jpeg.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap {

inline constexpr std::size_t kDefaultSide = 112;

// ---------------------------------------------------------------------------
// Resampling

namespace detail {

struct Tap {
  std::size_t lo, hi;
  double frac;
};

// Half-pixel centres (align_corners = false), clamped at the borders.
inline std::vector<Tap> bilinear_taps(std::size_t src, std::size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = double(src) / double(dst);
  for (std::size_t i = 0; i < dst; ++i) {
    double s = (double(i) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, double(src - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, s - double(lo)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize of every sample to out_h x out_w.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& in, std::size_t out_h, std::size_t out_w) {
  if (in.height() == out_h && in.width() == out_w) return in;
  const auto ty = detail::bilinear_taps(in.height(), out_h);
  const auto tx = detail::bilinear_taps(in.width(), out_w);
  Tensor<T> out(in.batch(), in.channels(), out_h, out_w);
  for (std::size_t n = 0; n < in.batch(); ++n)
    for (std::size_t c = 0; c < in.channels(); ++c)
      for (std::size_t y = 0; y < out_h; ++y) {
        const auto& a = ty[y];
        for (std::size_t x = 0; x < out_w; ++x) {
          const auto& b = tx[x];
          const double top = (1 - b.frac) * in.at(n, c, a.lo, b.lo) + b.frac * in.at(n, c, a.lo, b.hi);
          const double bot = (1 - b.frac) * in.at(n, c, a.hi, b.lo) + b.frac * in.at(n, c, a.hi, b.hi);
          out.at(n, c, y, x) = static_cast<T>((1 - a.frac) * top + a.frac * bot);
        }
      }
  return out;
}

/// Transpose of resize_bilinear: scatters output gradients back onto the source grid.
template <class T>
Tensor<T> resize_bilinear_adjoint(const Tensor<T>& grad_out, std::size_t in_h, std::size_t in_w) {
  if (grad_out.height() == in_h && grad_out.width() == in_w) return grad_out;
  const auto ty = detail::bilinear_taps(in_h, grad_out.height());
  const auto tx = detail::bilinear_taps(in_w, grad_out.width());
  Tensor<T> g(grad_out.batch(), grad_out.channels(), in_h, in_w);
  for (std::size_t n = 0; n < g.batch(); ++n)
    for (std::size_t c = 0; c < g.channels(); ++c)
      for (std::size_t y = 0; y < grad_out.height(); ++y) {
        const auto& a = ty[y];
        for (std::size_t x = 0; x < grad_out.width(); ++x) {
          const auto& b = tx[x];
          const T d = grad_out.at(n, c, y, x);
          g.at(n, c, a.lo, b.lo) += static_cast<T>((1 - a.frac) * (1 - b.frac)) * d;
          g.at(n, c, a.lo, b.hi) += static_cast<T>((1 - a.frac) * b.frac) * d;
          g.at(n, c, a.hi, b.lo) += static_cast<T>(a.frac * (1 - b.frac)) * d;
          g.at(n, c, a.hi, b.hi) += static_cast<T>(a.frac * b.frac) * d;
        }
      }
  return g;
}

// ---------------------------------------------------------------------------
// Raster I/O

enum class RasterFormat { png, jpeg };

struct SaveFormat {
  RasterFormat kind = RasterFormat::png;
  int quality = 95;

  static SaveFormat png() { return {RasterFormat::png, 0}; }
  static SaveFormat jpeg(int q) { return {RasterFormat::jpeg, q}; }
};

namespace detail {

struct Raster {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableImage("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Raster decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw UnreadableImage(name + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  Raster r{image.width, image.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
  if (!png_image_finish_read(&image, nullptr, r.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw UnreadableImage(name + ": " + image.message);
  }
  return r;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

inline Raster decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  Raster r;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw UnreadableImage(name + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  r.width = cinfo.output_width;
  r.height = cinfo.output_height;
  r.rgb.resize(r.width * r.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = r.rgb.data() + std::size_t(cinfo.output_scanline) * r.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return r;
}

inline Raster to_raster(const Image& img) {
  if (img.batch() != 1 || img.channels() != 3) throw ShapeMismatch("save_image expects one RGB image");
  Raster r{img.width(), img.height(), std::vector<std::uint8_t>(img.size())};
  for (std::size_t y = 0; y < r.height; ++y)
    for (std::size_t x = 0; x < r.width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        r.rgb[(y * r.width + x) * 3 + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  return r;
}

inline void write_png(const Raster& r, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(r.width);
  image.height = static_cast<png_uint_32>(r.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, r.rgb.data(), 0, nullptr))
    throw IoFailure(path.string() + ": " + image.message);
}

// Baseline 4:4:4 encode whose quantizers come from quant_tables_for_quality.
inline void write_jpeg(const Raster& r, const std::filesystem::path& path, int quality) {
  const auto tables = quant_tables_for_quality(quality);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoFailure("cannot open " + path.string() + " for writing");
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::fclose(f);
    throw IoFailure(path.string() + ": " + err.message);
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(r.width);
  cinfo.image_height = static_cast<JDIMENSION>(r.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  std::array<unsigned int, 64> luma{}, chroma{};
  std::copy(tables.luma.begin(), tables.luma.end(), luma.begin());
  std::copy(tables.chroma.begin(), tables.chroma.end(), chroma.begin());
  jpeg_add_quant_table(&cinfo, 0, luma.data(), 100, TRUE);
  jpeg_add_quant_table(&cinfo, 1, chroma.data(), 100, TRUE);
  for (int c = 0; c < 3; ++c) {
    cinfo.comp_info[c].h_samp_factor = 1;
    cinfo.comp_info[c].v_samp_factor = 1;
  }
  cinfo.dct_method = JDCT_ISLOW;
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPLE*>(r.rgb.data() + std::size_t(cinfo.next_scanline) * r.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  if (std::fclose(f) != 0) throw IoFailure("failed to close " + path.string());
}

}  // namespace detail

/// Decodes a PNG or JPEG into [0,1] RGB, bilinearly resized to side x side
/// when the stored dimensions differ. side == 0 keeps the native size.
inline Image load_image(const std::filesystem::path& path, std::size_t side = kDefaultSide) {
  if (!std::filesystem::exists(path)) throw UnreadableImage("missing file " + path.string());
  const auto bytes = detail::read_file(path);
  static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  detail::Raster r;
  if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin()))
    r = detail::decode_png(bytes, path.string());
  else if (bytes.size() >= 3 && bytes[0] == 0xff && bytes[1] == 0xd8 && bytes[2] == 0xff)
    r = detail::decode_jpeg(bytes, path.string());
  else if (bytes.empty())
    throw UnreadableImage(path.string() + ": empty file");
  else
    throw UnsupportedFormat(path.string() + ": not a PNG or JPEG stream");

  Image img(1, 3, r.height, r.width);
  for (std::size_t y = 0; y < r.height; ++y)
    for (std::size_t x = 0; x < r.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = r.rgb[(y * r.width + x) * 3 + c] / 255.0f;
  if (side != 0 && (r.height != side || r.width != side)) img = resize_bilinear(img, side, side);
  return img;
}

inline void save_image(const Image& img, const std::filesystem::path& path, SaveFormat format = SaveFormat::png()) {
  const auto raster = detail::to_raster(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (format.kind == RasterFormat::png)
    detail::write_png(raster, path);
  else
    detail::write_jpeg(raster, path, format.quality);
}

// ---------------------------------------------------------------------------
// Pair manifests

enum class PairLabel { positive, negative };

struct PairEntry {
  std::string probe_path;
  std::string enrolled_path;
  std::string subject_id;
  PairLabel label = PairLabel::positive;
};

struct PairManifest {
  std::vector<PairEntry> entries;

  std::size_t count(PairLabel l) const {
    return static_cast<std::size_t>(
        std::count_if(entries.begin(), entries.end(), [l](const PairEntry& e) { return e.label == l; }));
  }
  PairManifest only(PairLabel l) const {
    PairManifest m;
    for (const auto& e : entries)
      if (e.label == l) m.entries.push_back(e);
    return m;
  }
  std::size_t size() const noexcept { return entries.size(); }
};

inline PairLabel parse_label(const std::string& s, std::size_t line) {
  if (s == "positive" || s == "1" || s == "pos") return PairLabel::positive;
  if (s == "negative" || s == "0" || s == "neg") return PairLabel::negative;
  throw MalformedLine(line, "unknown label '" + s + "'");
}

inline const char* label_name(PairLabel l) { return l == PairLabel::positive ? "positive" : "negative"; }

/// Parses a tab-separated manifest (probe, enrolled, subject, label). Relative
/// paths resolve against the manifest's directory. Blank and '#' lines are skipped.
inline PairManifest parse_pairs(std::istream& in, const std::filesystem::path& base = {}) {
  PairManifest m;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4)
      throw MalformedLine(number, "expected 4 tab-separated fields, found " + std::to_string(fields.size()));
    for (const auto& f : fields)
      if (f.empty()) throw MalformedLine(number, "empty field");
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return (fp.is_relative() && !base.empty() ? base / fp : fp).string();
    };
    m.entries.push_back({resolve(fields[0]), resolve(fields[1]), fields[2], parse_label(fields[3], number)});
  }
  if (m.entries.empty()) throw EmptyManifest("manifest has no entries");
  return m;
}

inline PairManifest load_pairs(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoFailure("cannot open manifest " + manifest_path.string());
  return parse_pairs(in, manifest_path.parent_path());
}

inline void write_pairs(const PairManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write manifest " + path.string());
  for (const auto& e : m.entries)
    out << e.probe_path << '\t' << e.enrolled_path << '\t' << e.subject_id << '\t' << label_name(e.label) << '\n';
}

/// Memoizing loader so manifests that reuse images decode each file once.
class ImageCache {
 public:
  explicit ImageCache(std::size_t side = kDefaultSide) : side_(side) {}
  const Image& get(const std::string& path) {
    auto it = cache_.find(path);
    if (it == cache_.end()) it = cache_.emplace(path, load_image(path, side_)).first;
    return it->second;
  }

 private:
  std::size_t side_;
  std::map<std::string, Image> cache_;
};

}  // namespace lmfap
