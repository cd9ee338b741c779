#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "lmfap/dataset.hpp"
#include "lmfap/random.hpp"
#include "lmfap/tensor.hpp"

namespace lmfap::synthetic {

// Procedural face-like identities for desk-scale runs. Each subject fixes a
// layout (face shape, feature geometry, colours) plus fine skin texture and
// marks; every image re-renders the subject under a random pose, lighting,
// expression, background and sensor noise.

using Rgb = std::array<float, 3>;

struct Grating {
  float fx, fy, phase, amp;  // cycles per pixel in face coordinates
};

struct SubjectTraits {
  Rgb skin, hair, iris, lip, brow;
  float face_ax, face_ay;
  float hair_top, hair_width;
  float eye_y, eye_sep, eye_rx, eye_ry;
  float brow_gap, brow_thick, brow_tilt, brow_len;
  float nose_len, nose_w;
  float mouth_y, mouth_w, mouth_h, mouth_curve;
  std::array<Grating, 3> texture;
  std::vector<std::array<float, 3>> marks;  // x, y, radius relative to the face centre
};

struct Nuisance {
  float dx, dy, scale, rot;
  float brightness, light_dir, light_strength;
  Rgb tint, bg_a, bg_b;
  float bg_angle;
  float smile, eye_open;
  float noise;
  std::uint64_t noise_seed;
};

namespace detail {

inline float urange(Rng& r, double lo, double hi) { return static_cast<float>(lo + (hi - lo) * uniform01(r)); }

inline float coverage(float signed_dist) { return std::clamp(0.5f - signed_dist, 0.0f, 1.0f); }

inline float ellipse_sd(float x, float y, float ax, float ay) {
  const float k = std::sqrt((x / ax) * (x / ax) + (y / ay) * (y / ay));
  return (k - 1.0f) * std::min(ax, ay);
}

inline float segment_sd(float px, float py, float ax, float ay, float bx, float by, float radius) {
  const float vx = bx - ax, vy = by - ay;
  const float t = std::clamp(((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy + 1e-6f), 0.0f, 1.0f);
  const float dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy) - radius;
}

inline void blend(Rgb& dst, const Rgb& src, float a) {
  for (int c = 0; c < 3; ++c) dst[c] = dst[c] * (1 - a) + src[c] * a;
}

}  // namespace detail

inline SubjectTraits sample_subject(std::uint64_t seed, std::size_t subject, float texture_gain = 1.0f) {
  using detail::urange;
  Rng r = derive_rng(seed, 0x5ab1ec7ULL + subject * 7919ULL);
  SubjectTraits t{};
  const float tone = urange(r, 0.0, 1.0);
  t.skin = {0.45f + 0.45f * tone + urange(r, -0.04, 0.04), 0.32f + 0.38f * tone + urange(r, -0.04, 0.04),
            0.25f + 0.35f * tone + urange(r, -0.04, 0.04)};
  const float hl = urange(r, 0.05, 0.7);
  t.hair = {hl * urange(r, 0.7, 1.1), hl * urange(r, 0.5, 0.9), hl * urange(r, 0.3, 0.7)};
  t.iris = {urange(r, 0.1, 0.5), urange(r, 0.15, 0.55), urange(r, 0.1, 0.6)};
  t.lip = {std::min(1.0f, t.skin[0] * urange(r, 0.75, 0.95) + 0.1f), t.skin[1] * urange(r, 0.5, 0.75),
           t.skin[2] * urange(r, 0.55, 0.8)};
  t.brow = {t.hair[0] * 0.8f, t.hair[1] * 0.8f, t.hair[2] * 0.8f};
  t.face_ax = urange(r, 28, 38);
  t.face_ay = urange(r, 36, 46);
  t.hair_top = urange(r, 0.55, 0.85);
  t.hair_width = urange(r, 1.02, 1.2);
  t.eye_y = urange(r, -14, -4);
  t.eye_sep = urange(r, 11, 17);
  t.eye_rx = urange(r, 4.0, 6.5);
  t.eye_ry = urange(r, 2.2, 3.6);
  t.brow_gap = urange(r, 5, 9);
  t.brow_thick = urange(r, 1.0, 2.6);
  t.brow_tilt = urange(r, -0.25, 0.25);
  t.brow_len = urange(r, 6, 11);
  t.nose_len = urange(r, 10, 18);
  t.nose_w = urange(r, 3, 7);
  t.mouth_y = urange(r, 16, 26);
  t.mouth_w = urange(r, 8, 15);
  t.mouth_h = urange(r, 1.5, 3.5);
  t.mouth_curve = urange(r, -0.04, 0.06);
  for (auto& g : t.texture) {
    const float f = urange(r, 0.12, 0.32), ang = urange(r, 0, std::numbers::pi);
    g = {f * std::cos(ang), f * std::sin(ang), urange(r, 0, 2 * std::numbers::pi), texture_gain * urange(r, 0.012, 0.03)};
  }
  const int marks = 2 + int(uniform_index(r, 4));
  for (int i = 0; i < marks; ++i)
    t.marks.push_back({urange(r, -0.7, 0.7) * t.face_ax, urange(r, -0.5, 0.7) * t.face_ay, urange(r, 0.8, 1.8)});
  return t;
}

inline Nuisance sample_nuisance(std::uint64_t seed, std::size_t subject, std::size_t image) {
  using detail::urange;
  Rng r = derive_rng(seed, 0x9015eULL + subject * 1000003ULL + image * 7ULL);
  Nuisance n{};
  n.dx = urange(r, -3.5, 3.5);
  n.dy = urange(r, -3.5, 3.5);
  n.scale = urange(r, 0.94, 1.06);
  n.rot = urange(r, -0.08, 0.08);
  n.brightness = urange(r, 0.82, 1.15);
  n.light_dir = urange(r, 0, 2 * std::numbers::pi);
  n.light_strength = urange(r, 0.0, 0.18);
  n.tint = {urange(r, 0.94, 1.06), urange(r, 0.94, 1.06), urange(r, 0.94, 1.06)};
  n.bg_a = {urange(r, 0.1, 0.9), urange(r, 0.1, 0.9), urange(r, 0.1, 0.9)};
  n.bg_b = {urange(r, 0.1, 0.9), urange(r, 0.1, 0.9), urange(r, 0.1, 0.9)};
  n.bg_angle = urange(r, 0, 2 * std::numbers::pi);
  n.smile = urange(r, -0.03, 0.05);
  n.eye_open = urange(r, 0.7, 1.1);
  n.noise = urange(r, 0.005, 0.02);
  n.noise_seed = r();
  return n;
}

inline Image render_face(const SubjectTraits& t, const Nuisance& n, std::size_t side = 112) {
  using namespace detail;
  Image img(1, 3, side, side);
  Rng noise_rng(n.noise_seed);
  const float c0 = float(side) / 2.0f, cy0 = float(side) / 2.0f + 4.0f;
  const float cr = std::cos(-n.rot), sr = std::sin(-n.rot);
  const float lx = std::cos(n.light_dir), ly = std::sin(n.light_dir);
  const float bx = std::cos(n.bg_angle), by = std::sin(n.bg_angle);
  for (std::size_t py = 0; py < side; ++py)
    for (std::size_t px = 0; px < side; ++px) {
      const float u = float(px) + 0.5f, v = float(py) + 0.5f;
      // image -> face coordinates
      const float ux = (u - c0 - n.dx) / n.scale, uy = (v - cy0 - n.dy) / n.scale;
      const float x = cr * ux - sr * uy, y = sr * ux + cr * uy;

      const float s = ((u / side - 0.5f) * bx + (v / side - 0.5f) * by) + 0.5f;
      Rgb col;
      for (int c = 0; c < 3; ++c) col[c] = n.bg_a[c] * (1 - s) + n.bg_b[c] * s;

      // hair volume behind the head
      const float hair_sd = ellipse_sd(x, y + t.face_ay * 0.12f, t.face_ax * t.hair_width, t.face_ay * 1.08f);
      if (y < t.face_ay * 0.15f) blend(col, t.hair, coverage(hair_sd));
      // ears
      for (float sgn : {-1.0f, 1.0f}) blend(col, t.skin, coverage(ellipse_sd(x - sgn * t.face_ax, y + 2, 5, 9)));
      // face
      const float face_sd = ellipse_sd(x, y, t.face_ax, t.face_ay);
      const float face_a = coverage(face_sd);
      if (face_a > 0) {
        Rgb skin = t.skin;
        float tex = 0;
        for (const auto& g : t.texture)
          tex += g.amp * std::sin(2 * std::numbers::pi_v<float> * (g.fx * x + g.fy * y) + g.phase);
        const float shade = 1.0f - 0.12f * std::clamp((x * x) / (t.face_ax * t.face_ax), 0.0f, 1.0f);
        for (int c = 0; c < 3; ++c) skin[c] = skin[c] * shade + tex;
        blend(col, skin, face_a);
      }
      // fringe: hair over the top of the face
      const float fringe_y = -t.face_ay * t.hair_top;
      if (face_a > 0) blend(col, t.hair, face_a * coverage(y - fringe_y + 0.08f * x * x / t.face_ax));
      for (const auto& m : t.marks) {
        Rgb mark = {t.skin[0] * 0.45f, t.skin[1] * 0.4f, t.skin[2] * 0.4f};
        blend(col, mark, face_a * coverage(std::hypot(x - m[0], y - m[1]) - m[2]));
      }
      for (float sgn : {-1.0f, 1.0f}) {
        const float ex = sgn * t.eye_sep, ey = t.eye_y;
        // eyebrow
        const float b0x = ex - sgn * t.brow_len * 0.5f, b1x = ex + sgn * t.brow_len * 0.5f;
        const float b0y = ey - t.brow_gap + t.brow_tilt * 4, b1y = ey - t.brow_gap - t.brow_tilt * 4;
        blend(col, t.brow, 0.9f * coverage(segment_sd(x, y, b0x, b0y, b1x, b1y, t.brow_thick)));
        // eye white, iris, pupil
        const float ry = t.eye_ry * n.eye_open;
        const float eye_a = coverage(ellipse_sd(x - ex, y - ey, t.eye_rx, ry));
        blend(col, Rgb{0.92f, 0.92f, 0.9f}, eye_a);
        blend(col, t.iris, eye_a * coverage(std::hypot(x - ex, y - ey) - t.eye_ry * 0.85f));
        blend(col, Rgb{0.05f, 0.05f, 0.05f}, eye_a * coverage(std::hypot(x - ex, y - ey) - t.eye_ry * 0.35f));
      }
      // nose: shaded ridge and nostrils
      const float nose_sd = segment_sd(x, y, 0, t.eye_y + 3, 0, t.eye_y + t.nose_len, t.nose_w * 0.35f);
      blend(col, Rgb{t.skin[0] * 0.78f, t.skin[1] * 0.74f, t.skin[2] * 0.74f}, 0.5f * coverage(nose_sd));
      for (float sgn : {-1.0f, 1.0f})
        blend(col, Rgb{t.skin[0] * 0.4f, t.skin[1] * 0.35f, t.skin[2] * 0.35f},
              0.8f * coverage(ellipse_sd(x - sgn * t.nose_w * 0.5f, y - t.eye_y - t.nose_len, 1.6f, 1.0f)));
      // mouth: curved band
      const float curve = (t.mouth_curve + n.smile) * x * x;
      const float mouth_sd = ellipse_sd(x, y - t.mouth_y + curve, t.mouth_w, t.mouth_h);
      blend(col, t.lip, face_a * coverage(mouth_sd));

      const float light = n.brightness * (1 + n.light_strength * ((u / side - 0.5f) * lx + (v / side - 0.5f) * ly) * 2);
      for (int c = 0; c < 3; ++c) {
        const float val = col[c] * light * n.tint[c] + n.noise * static_cast<float>(normal01(noise_rng));
        img.at(std::size_t(c), py, px) = std::clamp(val, 0.0f, 1.0f);
      }
    }
  return img;
}

struct Config {
  std::size_t subjects = 40;
  std::size_t images_per_subject = 20;
  std::size_t first_image = 0;  // image index offset; distinct offsets give disjoint samples
  std::size_t side = 112;
  std::uint64_t seed = 20240601;
  float texture_gain = 1.0f;  // scales the skin texture amplitude
};

inline std::string subject_name(std::size_t s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03zu", s);
  return buf;
}

inline LabeledDataset make_dataset(const Config& cfg) {
  LabeledDataset ds;
  ds.id = "synthetic-" + std::to_string(cfg.seed) + "-" + std::to_string(cfg.subjects) + "x" +
          std::to_string(cfg.images_per_subject) + "@" + std::to_string(cfg.first_image);
  if (cfg.texture_gain != 1.0f) ds.id += "-t" + std::to_string(cfg.texture_gain);
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    const auto traits = sample_subject(cfg.seed, s, cfg.texture_gain);
    ds.class_names.push_back(subject_name(s));
    for (std::size_t i = 0; i < cfg.images_per_subject; ++i) {
      ds.images.push_back(render_face(traits, sample_nuisance(cfg.seed, s, cfg.first_image + i), cfg.side));
      ds.labels.push_back(s);
    }
  }
  return ds;
}

}  // namespace lmfap::synthetic
