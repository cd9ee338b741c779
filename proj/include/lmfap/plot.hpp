#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "lmfap/tensor.hpp"

namespace lmfap::plot {

// Minimal raster plots written through save_image. Text uses a 5x7 bitmap
// font (upper case, digits, a little punctuation).

using Color = std::array<float, 3>;

inline const std::vector<Color>& palette() {
  static const std::vector<Color> p = {{0.12f, 0.47f, 0.71f}, {0.84f, 0.15f, 0.16f}, {0.17f, 0.63f, 0.17f},
                                       {1.00f, 0.50f, 0.05f}, {0.58f, 0.40f, 0.74f}, {0.55f, 0.34f, 0.29f},
                                       {0.89f, 0.47f, 0.76f}, {0.50f, 0.50f, 0.50f}};
  return p;
}

namespace detail {

inline const std::array<std::uint8_t, 7>* glyph(char c) {
  struct G {
    char c;
    std::array<std::uint8_t, 7> rows;
  };
  static const G font[] = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}}, {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}}, {'/', {0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x00}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}}, {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'_', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F}}, {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}}, {'>', {0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08}},
      {'<', {0x02, 0x04, 0x08, 0x10, 0x08, 0x04, 0x02}},
  };
  const char u = char(std::toupper(static_cast<unsigned char>(c)));
  for (const auto& g : font)
    if (g.c == u) return &g.rows;
  return nullptr;
}

}  // namespace detail

class Canvas {
 public:
  Canvas(std::size_t w, std::size_t h) : img_(Image::image(3, h, w, 1.0f)) {}

  std::size_t width() const { return img_.width(); }
  std::size_t height() const { return img_.height(); }
  const Image& image() const { return img_; }

  void pixel(long x, long y, const Color& c) {
    if (x < 0 || y < 0 || x >= long(width()) || y >= long(height())) return;
    for (std::size_t k = 0; k < 3; ++k) img_.at(k, std::size_t(y), std::size_t(x)) = c[k];
  }

  void rect(long x0, long y0, long x1, long y1, const Color& c) {
    for (long y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (long x = std::min(x0, x1); x <= std::max(x0, x1); ++x) pixel(x, y, c);
  }

  void line(double x0, double y0, double x1, double y1, const Color& c, int thickness = 1) {
    const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
    const int n = std::max(1, int(std::ceil(len)));
    for (int i = 0; i <= n; ++i) {
      const double t = double(i) / n;
      const long x = std::lround(x0 + t * (x1 - x0)), y = std::lround(y0 + t * (y1 - y0));
      for (int dy = -(thickness / 2); dy <= thickness / 2; ++dy)
        for (int dx = -(thickness / 2); dx <= thickness / 2; ++dx) pixel(x + dx, y + dy, c);
    }
  }

  /// Draws text with its top-left corner at (x, y); returns the width in pixels.
  long text(long x, long y, const std::string& s, const Color& c = {0, 0, 0}, int scale = 1) {
    long cx = x;
    for (char ch : s) {
      if (const auto* g = detail::glyph(ch))
        for (int r = 0; r < 7; ++r)
          for (int b = 0; b < 5; ++b)
            if ((*g)[std::size_t(r)] & (0x10 >> b)) rect(cx + b * scale, y + r * scale, cx + b * scale + scale - 1,
                                                        y + r * scale + scale - 1, c);
      cx += 6 * scale;
    }
    return cx - x;
  }

 private:
  Image img_;
};

struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Axes {
  std::string title, x_label, y_label;
  bool log_y = false;
  std::size_t width = 640, height = 420;
};

inline std::string tick_label(double v) {
  char buf[32];
  const double a = std::abs(v);
  if (v == 0) return "0";
  if (a >= 1e4 || a < 1e-2) std::snprintf(buf, sizeof buf, "%.1e", v);
  else if (a >= 100) std::snprintf(buf, sizeof buf, "%.0f", v);
  else std::snprintf(buf, sizeof buf, "%.2g", v);
  return buf;
}

namespace detail {

struct Frame {
  long left = 70, right = 0, top = 40, bottom = 0;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool log_y = false;

  double tx(double x) const { return double(left) + (x - x0) / (x1 - x0) * double(right - left); }
  double ty(double y) const {
    const double v = log_y ? std::log10(std::max(y, 1e-300)) : y;
    return double(bottom) - (v - y0) / (y1 - y0) * double(bottom - top);
  }
};

inline Frame draw_frame(Canvas& cv, const Axes& ax, double x0, double x1, double y0, double y1, bool x_ticks = true) {
  Frame f;
  f.right = long(cv.width()) - 20;
  f.bottom = long(cv.height()) - 50;
  f.log_y = ax.log_y;
  if (ax.log_y) {
    y0 = std::log10(std::max(y0, 1e-300));
    y1 = std::log10(std::max(y1, 1e-300));
  }
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  f.x0 = x0, f.x1 = x1, f.y0 = y0, f.y1 = y1;
  const Color grid = {0.88f, 0.88f, 0.88f}, black = {0, 0, 0};
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0;
    const double py = double(f.bottom) - (yv - y0) / (y1 - y0) * double(f.bottom - f.top);
    cv.line(double(f.left), py, double(f.right), py, grid);
    const auto lbl = tick_label(ax.log_y ? std::pow(10.0, yv) : yv);
    cv.text(f.left - 6 - long(lbl.size()) * 6, std::lround(py) - 3, lbl);
    if (x_ticks) {
      const double xv = x0 + (x1 - x0) * i / 4.0;
      const double px = f.tx(xv);
      cv.line(px, double(f.top), px, double(f.bottom), grid);
      const auto xl = tick_label(xv);
      cv.text(std::lround(px) - long(xl.size()) * 3, f.bottom + 6, xl);
    }
  }
  cv.line(double(f.left), double(f.top), double(f.left), double(f.bottom), black);
  cv.line(double(f.left), double(f.bottom), double(f.right), double(f.bottom), black);
  cv.text(f.left, 12, ax.title, black, 2);
  cv.text((f.left + f.right) / 2 - long(ax.x_label.size()) * 3, f.bottom + 24, ax.x_label);
  cv.text(4, f.top - 14, ax.y_label);
  return f;
}

inline void legend(Canvas& cv, const Frame& f, const std::vector<std::string>& labels) {
  long y = f.top + 6;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& c = palette()[i % palette().size()];
    const long w = long(labels[i].size()) * 6;
    cv.rect(f.right - w - 22, y, f.right - w - 12, y + 6, c);
    cv.text(f.right - w - 6, y, labels[i]);
    y += 12;
  }
}

}  // namespace detail

inline Image line_plot(const std::vector<Series>& series, const Axes& ax) {
  Canvas cv(ax.width, ax.height);
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      if (ax.log_y && !(s.y[i] > 0)) continue;
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (x0 > x1) x0 = 0, x1 = 1;
  if (y0 > y1) y0 = 0, y1 = 1;
  if (!ax.log_y) y0 = std::min(y0, 0.0);
  const auto f = detail::draw_frame(cv, ax, x0, x1, y0, y1 + (y1 - y0) * 0.05);
  std::vector<std::string> labels;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto& c = palette()[k % palette().size()];
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
      if (ax.log_y && !(s.y[i] > 0 && s.y[i + 1] > 0)) continue;
      cv.line(f.tx(s.x[i]), f.ty(s.y[i]), f.tx(s.x[i + 1]), f.ty(s.y[i + 1]), c, 2);
    }
    if (s.x.size() == 1) cv.rect(long(f.tx(s.x[0])) - 2, long(f.ty(s.y[0])) - 2, long(f.tx(s.x[0])) + 2, long(f.ty(s.y[0])) + 2, c);
    labels.push_back(s.label);
  }
  detail::legend(cv, f, labels);
  return cv.image();
}

/// Grouped bars: values[category][series].
inline Image bar_plot(const std::vector<std::string>& categories, const std::vector<std::string>& series_labels,
                      const std::vector<std::vector<double>>& values, const Axes& ax) {
  Canvas cv(ax.width, ax.height);
  double y1 = 0, y0 = 0;
  for (const auto& row : values)
    for (double v : row) y1 = std::max(y1, v), y0 = std::min(y0, v);
  const auto f = detail::draw_frame(cv, ax, 0, 1, y0, y1 + (y1 - y0) * 0.1 + 1e-12, false);
  const std::size_t nc = std::max<std::size_t>(1, categories.size());
  const double slot = double(f.right - f.left) / double(nc);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const std::size_t ns = std::max<std::size_t>(1, values[c].size());
    const double bw = slot * 0.8 / double(ns);
    for (std::size_t s = 0; s < values[c].size(); ++s) {
      const double x = double(f.left) + slot * double(c) + slot * 0.1 + bw * double(s);
      cv.rect(std::lround(x), std::lround(f.ty(values[c][s])), std::lround(x + bw) - 1, std::lround(f.ty(0)),
              palette()[s % palette().size()]);
    }
    cv.text(std::lround(double(f.left) + slot * (double(c) + 0.5)) - long(categories[c].size()) * 3, f.bottom + 6,
            categories[c]);
  }
  detail::legend(cv, f, series_labels);
  return cv.image();
}

}  // namespace lmfap::plot
