#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sar {

// 8-bit raster, row-major, channels interleaved (1 = gray, 3 = RGB).
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<uint8_t> pixels;

  static Image make(int w, int h, int c = 1, uint8_t fill = 0) {
    Image im;
    im.width = w;
    im.height = h;
    im.channels = c;
    im.pixels.assign(size_t(w) * size_t(h) * size_t(c), fill);
    return im;
  }

  uint8_t& at(int y, int x, int c = 0) {
    return pixels[(size_t(y) * width + size_t(x)) * size_t(channels) + size_t(c)];
  }
  uint8_t at(int y, int x, int c = 0) const {
    return pixels[(size_t(y) * width + size_t(x)) * size_t(channels) + size_t(c)];
  }
};

namespace detail {

inline int read_pnm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments, then parses one non-negative integer.
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  if (ch == EOF || !std::isdigit(ch))
    throw std::runtime_error(path + ": malformed header");
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > 1 << 30) throw std::runtime_error(path + ": header value out of range");
    ch = in.get();
  }
  if (ch != EOF) in.unget();
  return int(v);
}

}  // namespace detail

// Reads binary PGM (P5) or PPM (P6) with maxval 255.
inline Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '5' && m1 != '6'))
    throw std::runtime_error(path + ": not a binary PGM/PPM file");
  const int channels = (m1 == '5') ? 1 : 3;
  const int w = detail::read_pnm_token(in, path);
  const int h = detail::read_pnm_token(in, path);
  const int maxval = detail::read_pnm_token(in, path);
  if (w <= 0 || h <= 0) throw std::runtime_error(path + ": bad dimensions");
  if (maxval != 255) throw std::runtime_error(path + ": only maxval 255 is supported");
  in.get();  // single whitespace after maxval
  Image im = Image::make(w, h, channels);
  in.read(reinterpret_cast<char*>(im.pixels.data()), std::streamsize(im.pixels.size()));
  if (size_t(in.gcount()) != im.pixels.size())
    throw std::runtime_error(path + ": truncated pixel data");
  return im;
}

inline void write_image(const Image& im, const std::string& path) {
  if (im.channels != 1 && im.channels != 3)
    throw std::runtime_error("write_image: unsupported channel count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  out << (im.channels == 1 ? "P5\n" : "P6\n") << im.width << " " << im.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(im.pixels.data()),
            std::streamsize(im.pixels.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

// Integer BT.601 luma; exact and platform independent.
inline Image to_gray(const Image& im) {
  if (im.channels == 1) return im;
  Image g = Image::make(im.width, im.height, 1);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const int r = im.at(y, x, 0), gg = im.at(y, x, 1), b = im.at(y, x, 2);
      g.at(y, x) = uint8_t((299 * r + 587 * gg + 114 * b + 500) / 1000);
    }
  return g;
}

// Bilinear resample with half-pixel centers: src = (dst + 0.5) * scale - 0.5.
// A same-size call reproduces the input exactly.
inline Image resize_bilinear(const Image& im, int out_w, int out_h) {
  if (out_w <= 0 || out_h <= 0) throw std::runtime_error("resize_bilinear: bad target size");
  Image out = Image::make(out_w, out_h, im.channels);
  const double sx = double(im.width) / out_w;
  const double sy = double(im.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), double(im.height - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, im.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), double(im.width - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, im.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < im.channels; ++c) {
        const double v = (1 - wy) * ((1 - wx) * im.at(y0, x0, c) + wx * im.at(y0, x1, c)) +
                         wy * ((1 - wx) * im.at(y1, x0, c) + wx * im.at(y1, x1, c));
        out.at(y, x, c) = uint8_t(std::min(255.0, std::max(0.0, std::floor(v + 0.5))));
      }
    }
  }
  return out;
}

inline Image rotate90_cw(const Image& im) {
  Image out = Image::make(im.height, im.width, im.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < im.channels; ++c) out.at(y, x, c) = im.at(im.height - 1 - x, y, c);
  return out;
}

inline Image rotate90_ccw(const Image& im) {
  Image out = Image::make(im.height, im.width, im.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < im.channels; ++c) out.at(y, x, c) = im.at(x, im.width - 1 - y, c);
  return out;
}

struct SizedImage {
  Image image;
  int content_width = 0;  // columns left of this are real signal, the rest is fill
};

// Height is normalized to target_h with aspect kept; the width is then
// clamped into [min_w, max_w]: wider inputs are squeezed to max_w, narrower
// ones are padded on the right with the image mean. Conforming inputs pass
// through unchanged.
inline SizedImage resize_policy(const Image& gray, int target_h = 48, int min_w = 48,
                                int max_w = 160) {
  if (gray.channels != 1) throw std::runtime_error("resize_policy expects grayscale");
  if (gray.width <= 0 || gray.height <= 0) throw std::runtime_error("resize_policy: empty image");
  int new_w = int(std::lround(double(gray.width) * target_h / gray.height));
  new_w = std::max(1, std::min(new_w, max_w));
  Image scaled = resize_bilinear(gray, new_w, target_h);
  SizedImage out;
  if (new_w < min_w) {
    long sum = 0;
    for (uint8_t p : scaled.pixels) sum += p;
    const uint8_t mean = uint8_t((sum + long(scaled.pixels.size()) / 2) /
                                 long(scaled.pixels.size()));
    Image padded = Image::make(min_w, target_h, 1, mean);
    for (int y = 0; y < target_h; ++y)
      for (int x = 0; x < new_w; ++x) padded.at(y, x) = scaled.at(y, x);
    out.image = std::move(padded);
  } else {
    out.image = std::move(scaled);
  }
  out.content_width = new_w;
  return out;
}

}  // namespace sar
