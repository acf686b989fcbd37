#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "sar/dataset.hpp"
#include "sar/jsonutil.hpp"
#include "sar/rng.hpp"

namespace sar {

// 5x7 bitmap glyphs for ASCII 33..126, five column bytes per glyph, bit 0 the
// top row.
inline const uint8_t* glyph5x7(char ch) {
  static const uint8_t table[94][5] = {
      {0x00, 0x00, 0x5F, 0x00, 0x00},  // !
      {0x00, 0x07, 0x00, 0x07, 0x00},  // "
      {0x14, 0x7F, 0x14, 0x7F, 0x14},  // #
      {0x24, 0x2A, 0x7F, 0x2A, 0x12},  // $
      {0x23, 0x13, 0x08, 0x64, 0x62},  // %
      {0x36, 0x49, 0x55, 0x22, 0x50},  // &
      {0x00, 0x05, 0x03, 0x00, 0x00},  // '
      {0x00, 0x1C, 0x22, 0x41, 0x00},  // (
      {0x00, 0x41, 0x22, 0x1C, 0x00},  // )
      {0x08, 0x2A, 0x1C, 0x2A, 0x08},  // *
      {0x08, 0x08, 0x3E, 0x08, 0x08},  // +
      {0x00, 0x50, 0x30, 0x00, 0x00},  // ,
      {0x08, 0x08, 0x08, 0x08, 0x08},  // -
      {0x00, 0x60, 0x60, 0x00, 0x00},  // .
      {0x20, 0x10, 0x08, 0x04, 0x02},  // /
      {0x3E, 0x51, 0x49, 0x45, 0x3E},  // 0
      {0x00, 0x42, 0x7F, 0x40, 0x00},  // 1
      {0x42, 0x61, 0x51, 0x49, 0x46},  // 2
      {0x21, 0x41, 0x45, 0x4B, 0x31},  // 3
      {0x18, 0x14, 0x12, 0x7F, 0x10},  // 4
      {0x27, 0x45, 0x45, 0x45, 0x39},  // 5
      {0x3C, 0x4A, 0x49, 0x49, 0x30},  // 6
      {0x01, 0x71, 0x09, 0x05, 0x03},  // 7
      {0x36, 0x49, 0x49, 0x49, 0x36},  // 8
      {0x06, 0x49, 0x49, 0x29, 0x1E},  // 9
      {0x00, 0x36, 0x36, 0x00, 0x00},  // :
      {0x00, 0x56, 0x36, 0x00, 0x00},  // ;
      {0x00, 0x08, 0x14, 0x22, 0x41},  // <
      {0x14, 0x14, 0x14, 0x14, 0x14},  // =
      {0x41, 0x22, 0x14, 0x08, 0x00},  // >
      {0x02, 0x01, 0x51, 0x09, 0x06},  // ?
      {0x32, 0x49, 0x79, 0x41, 0x3E},  // @
      {0x7E, 0x11, 0x11, 0x11, 0x7E},  // A
      {0x7F, 0x49, 0x49, 0x49, 0x36},  // B
      {0x3E, 0x41, 0x41, 0x41, 0x22},  // C
      {0x7F, 0x41, 0x41, 0x22, 0x1C},  // D
      {0x7F, 0x49, 0x49, 0x49, 0x41},  // E
      {0x7F, 0x09, 0x09, 0x01, 0x01},  // F
      {0x3E, 0x41, 0x41, 0x51, 0x32},  // G
      {0x7F, 0x08, 0x08, 0x08, 0x7F},  // H
      {0x00, 0x41, 0x7F, 0x41, 0x00},  // I
      {0x20, 0x40, 0x41, 0x3F, 0x01},  // J
      {0x7F, 0x08, 0x14, 0x22, 0x41},  // K
      {0x7F, 0x40, 0x40, 0x40, 0x40},  // L
      {0x7F, 0x02, 0x04, 0x02, 0x7F},  // M
      {0x7F, 0x04, 0x08, 0x10, 0x7F},  // N
      {0x3E, 0x41, 0x41, 0x41, 0x3E},  // O
      {0x7F, 0x09, 0x09, 0x09, 0x06},  // P
      {0x3E, 0x41, 0x51, 0x21, 0x5E},  // Q
      {0x7F, 0x09, 0x19, 0x29, 0x46},  // R
      {0x46, 0x49, 0x49, 0x49, 0x31},  // S
      {0x01, 0x01, 0x7F, 0x01, 0x01},  // T
      {0x3F, 0x40, 0x40, 0x40, 0x3F},  // U
      {0x1F, 0x20, 0x40, 0x20, 0x1F},  // V
      {0x7F, 0x20, 0x18, 0x20, 0x7F},  // W
      {0x63, 0x14, 0x08, 0x14, 0x63},  // X
      {0x03, 0x04, 0x78, 0x04, 0x03},  // Y
      {0x61, 0x51, 0x49, 0x45, 0x43},  // Z
      {0x00, 0x00, 0x7F, 0x41, 0x41},  // [
      {0x02, 0x04, 0x08, 0x10, 0x20},  // backslash
      {0x41, 0x41, 0x7F, 0x00, 0x00},  // ]
      {0x04, 0x02, 0x01, 0x02, 0x04},  // ^
      {0x40, 0x40, 0x40, 0x40, 0x40},  // _
      {0x00, 0x01, 0x02, 0x04, 0x00},  // `
      {0x20, 0x54, 0x54, 0x54, 0x78},  // a
      {0x7F, 0x48, 0x44, 0x44, 0x38},  // b
      {0x38, 0x44, 0x44, 0x44, 0x20},  // c
      {0x38, 0x44, 0x44, 0x48, 0x7F},  // d
      {0x38, 0x54, 0x54, 0x54, 0x18},  // e
      {0x08, 0x7E, 0x09, 0x01, 0x02},  // f
      {0x0C, 0x52, 0x52, 0x52, 0x3E},  // g
      {0x7F, 0x08, 0x04, 0x04, 0x78},  // h
      {0x00, 0x44, 0x7D, 0x40, 0x00},  // i
      {0x20, 0x40, 0x44, 0x3D, 0x00},  // j
      {0x00, 0x7F, 0x10, 0x28, 0x44},  // k
      {0x00, 0x41, 0x7F, 0x40, 0x00},  // l
      {0x7C, 0x04, 0x18, 0x04, 0x78},  // m
      {0x7C, 0x08, 0x04, 0x04, 0x78},  // n
      {0x38, 0x44, 0x44, 0x44, 0x38},  // o
      {0x7C, 0x14, 0x14, 0x14, 0x08},  // p
      {0x08, 0x14, 0x14, 0x18, 0x7C},  // q
      {0x7C, 0x08, 0x04, 0x04, 0x08},  // r
      {0x48, 0x54, 0x54, 0x54, 0x20},  // s
      {0x04, 0x3F, 0x44, 0x40, 0x20},  // t
      {0x3C, 0x40, 0x40, 0x20, 0x7C},  // u
      {0x1C, 0x20, 0x40, 0x20, 0x1C},  // v
      {0x3C, 0x40, 0x30, 0x40, 0x3C},  // w
      {0x44, 0x28, 0x10, 0x28, 0x44},  // x
      {0x0C, 0x50, 0x50, 0x50, 0x3C},  // y
      {0x44, 0x64, 0x54, 0x4C, 0x44},  // z
      {0x00, 0x08, 0x36, 0x41, 0x00},  // {
      {0x00, 0x00, 0x7F, 0x00, 0x00},  // |
      {0x00, 0x41, 0x36, 0x08, 0x00},  // }
      {0x02, 0x01, 0x02, 0x04, 0x02},  // ~
  };
  if (ch < 33 || ch > 126) return nullptr;
  return table[ch - 33];
}

// Fixed-coefficient sine so rasters do not depend on the host libm. Exact
// IEEE arithmetic plus a truncated odd polynomial; plenty for pixel offsets.
inline double portable_sin(double x) {
  constexpr double kPi = 3.14159265358979323846;
  constexpr double kTwoPi = 6.28318530717958647692;
  x -= kTwoPi * std::floor(x / kTwoPi + 0.5);  // [-pi, pi]
  if (x > kPi / 2) x = kPi - x;
  if (x < -kPi / 2) x = -kPi - x;
  const double x2 = x * x;
  // sin(x) = x - x^3/3! + x^5/5! - x^7/7! + x^9/9! - x^11/11! + x^13/13!
  return x * (1.0 +
              x2 * (-1.6666666666666666e-01 +
                    x2 * (8.3333333333333333e-03 +
                          x2 * (-1.9841269841269841e-04 +
                                x2 * (2.7557319223985893e-06 +
                                      x2 * (-2.5052108385441720e-08 +
                                            x2 * 1.6059043836821613e-10))))));
}

inline double portable_cos(double x) {
  constexpr double kPi = 3.14159265358979323846;
  constexpr double kTwoPi = 6.28318530717958647692;
  x -= kTwoPi * std::floor(x / kTwoPi + 0.5);
  double sign = 1.0;
  if (x > kPi / 2) {
    x = kPi - x;
    sign = -1.0;
  } else if (x < -kPi / 2) {
    x = -kPi - x;
    sign = -1.0;
  }
  const double x2 = x * x;
  // cos(x) = 1 - x^2/2! + x^4/4! - x^6/6! + x^8/8! - x^10/10! + x^12/12!
  return sign * (1.0 +
                 x2 * (-5.0e-01 +
                       x2 * (4.1666666666666666e-02 +
                             x2 * (-1.3888888888888889e-03 +
                                   x2 * (2.4801587301587302e-05 +
                                         x2 * (-2.7557319223985891e-07 +
                                               x2 * 2.0876756987868099e-09))))));
}

struct SynthSpec {
  uint64_t seed = 1;
  std::string charset = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  int length_min = 2;
  int length_max = 6;
  int canvas_height = 48;
  int canvas_width = 0;  // 0 = sized to the word
  int glyph_scale = 3;
  std::string distortion = "none";  // none | rotate | curve | mixed
  double rotate_max_deg = 18.0;
  double curve_amplitude = 5.0;  // pixels
  double curve_wavelength = 90.0;
  double noise_level = 0.04;  // fraction of full scale, uniform +-

  void validate() const {
    if (charset.empty()) throw std::runtime_error("synth spec: empty charset");
    for (char c : charset)
      if (!glyph5x7(c))
        throw std::runtime_error(std::string("synth spec: no glyph for symbol '") + c + "'");
    if (length_min < 1 || length_max < length_min)
      throw std::runtime_error("synth spec: bad length range");
    if (glyph_scale < 1) throw std::runtime_error("synth spec: glyph_scale must be >= 1");
    if (canvas_height < 7 * glyph_scale)
      throw std::runtime_error("synth spec: canvas_height below glyph height");
    if (distortion != "none" && distortion != "rotate" && distortion != "curve" &&
        distortion != "mixed")
      throw std::runtime_error("synth spec: unknown distortion '" + distortion + "'");
    if (noise_level < 0 || noise_level > 1)
      throw std::runtime_error("synth spec: noise_level out of [0,1]");
  }

  static SynthSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline SynthSpec SynthSpec::from_json(const nlohmann::json& j) {
  detail::check_keys(j,
                     {"seed", "charset", "length_min", "length_max", "canvas_height",
                      "canvas_width", "glyph_scale", "distortion", "rotate_max_deg",
                      "curve_amplitude", "curve_wavelength", "noise_level"},
                     "synth spec");
  SynthSpec s;
  s.seed = j.value("seed", s.seed);
  s.charset = j.value("charset", s.charset);
  s.length_min = j.value("length_min", s.length_min);
  s.length_max = j.value("length_max", s.length_max);
  s.canvas_height = j.value("canvas_height", s.canvas_height);
  s.canvas_width = j.value("canvas_width", s.canvas_width);
  s.glyph_scale = j.value("glyph_scale", s.glyph_scale);
  s.distortion = j.value("distortion", s.distortion);
  s.rotate_max_deg = j.value("rotate_max_deg", s.rotate_max_deg);
  s.curve_amplitude = j.value("curve_amplitude", s.curve_amplitude);
  s.curve_wavelength = j.value("curve_wavelength", s.curve_wavelength);
  s.noise_level = j.value("noise_level", s.noise_level);
  s.validate();
  return s;
}

inline nlohmann::json SynthSpec::to_json() const {
  return nlohmann::json{{"seed", seed},
                        {"charset", charset},
                        {"length_min", length_min},
                        {"length_max", length_max},
                        {"canvas_height", canvas_height},
                        {"canvas_width", canvas_width},
                        {"glyph_scale", glyph_scale},
                        {"distortion", distortion},
                        {"rotate_max_deg", rotate_max_deg},
                        {"curve_amplitude", curve_amplitude},
                        {"curve_wavelength", curve_wavelength},
                        {"noise_level", noise_level}};
}

namespace detail {

inline void draw_glyph(Image& canvas, char ch, int x0, int y0, int scale, uint8_t fg) {
  const uint8_t* cols = glyph5x7(ch);
  for (int c = 0; c < 5; ++c)
    for (int r = 0; r < 7; ++r) {
      if (!(cols[c] >> r & 1)) continue;
      for (int dy = 0; dy < scale; ++dy)
        for (int dx = 0; dx < scale; ++dx) {
          const int y = y0 + r * scale + dy;
          const int x = x0 + c * scale + dx;
          if (y >= 0 && y < canvas.height && x >= 0 && x < canvas.width)
            canvas.at(y, x) = fg;
        }
    }
}

}  // namespace detail

constexpr uint8_t kSynthBackground = 16;
constexpr uint8_t kSynthForeground = 240;

// Renders one word. Every random decision is drawn on a fixed schedule so
// degenerate parameter settings (for instance a zero curve amplitude)
// reproduce the plain layout pixel for pixel.
inline Sample synth_sample(const SynthSpec& spec, uint64_t index) {
  Rng rng(derive_seed(spec.seed, index));
  const int s = spec.glyph_scale;
  const int n_syms = int(spec.charset.size());

  const int len =
      spec.length_min + int(rng.uniform_int(uint64_t(spec.length_max - spec.length_min + 1)));
  std::string label;
  for (int i = 0; i < len; ++i) label += spec.charset[size_t(rng.uniform_int(uint64_t(n_syms)))];

  std::string kind = spec.distortion;
  if (kind == "mixed") {
    static const char* kinds[3] = {"none", "rotate", "curve"};
    kind = kinds[rng.uniform_int(3)];
  }
  const double phase = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double theta_deg = rng.uniform(-spec.rotate_max_deg, spec.rotate_max_deg);

  const int margin = 2 * s;
  const int word_w = 6 * s * len - s;
  const int W = spec.canvas_width > 0 ? spec.canvas_width : word_w + 2 * margin;
  const int H = spec.canvas_height;
  if (word_w + 2 * margin > W)
    throw std::runtime_error("synth: word '" + label + "' does not fit canvas width " +
                             std::to_string(W));

  Image img = Image::make(W, H, 1, kSynthBackground);
  const int y_base = (H - 7 * s) / 2;
  const int x_base = (W - word_w) / 2;
  const double theta = theta_deg * 3.14159265358979323846 / 180.0;
  const double slope = portable_sin(theta) / portable_cos(theta);

  for (int k = 0; k < len; ++k) {
    const int gx = x_base + 6 * s * k;
    double dy = 0.0;
    if (kind == "curve") {
      const double cx = gx + 2.5 * s;
      dy = spec.curve_amplitude *
           portable_sin(2.0 * 3.14159265358979323846 * cx / spec.curve_wavelength + phase);
    } else if (kind == "rotate") {
      const double cx = gx + 2.5 * s;
      dy = slope * (cx - W / 2.0);
    }
    int gy = y_base + int(std::lround(dy));
    gy = std::max(0, std::min(gy, H - 7 * s));
    detail::draw_glyph(img, label[size_t(k)], gx, gy, s, kSynthForeground);
  }

  const int noise_amp = int(std::lround(255.0 * spec.noise_level));
  if (noise_amp > 0) {
    for (auto& p : img.pixels) {
      const int delta = int(rng.uniform_int(uint64_t(2 * noise_amp + 1))) - noise_amp;
      p = uint8_t(std::max(0, std::min(255, int(p) + delta)));
    }
  }

  Sample out;
  out.image = std::move(img);
  out.label = std::move(label);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06llu", (unsigned long long)index);
  out.id = buf;
  return out;
}

inline std::vector<Sample> synth_generate(const SynthSpec& spec, int n) {
  if (n < 1) throw std::runtime_error("synth_generate: n must be >= 1");
  spec.validate();
  std::vector<Sample> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) out.push_back(synth_sample(spec, uint64_t(i)));
  return out;
}

}  // namespace sar
