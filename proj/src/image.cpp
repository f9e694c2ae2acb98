#include "digitnet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "digitnet/error.hpp"

namespace digitnet {

void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path);
}

namespace {

int pgm_token(std::istream& in) {
  // skips whitespace and '#' comments
  int c = in.get();
  for (;;) {
    while (c != EOF && std::isspace(c)) c = in.get();
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    break;
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw FormatError("malformed PGM header");
  return value;
}

}  // namespace

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw FormatError("not a P5 PGM file: " + path);
  const int w = pgm_token(in);
  const int h = pgm_token(in);
  const int maxval = pgm_token(in);
  if (maxval != 255) throw FormatError("unsupported PGM maxval " + std::to_string(maxval));
  GrayImage img(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw FormatError("truncated PGM payload: " + path);
  }
  return img;
}

GrayImage tensor_to_gray(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("tensor_to_gray expects rank-2, got " + t.shape_str());
  if (t.size() == 0) throw DomainError("cannot render an empty tensor");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < t.size(); ++i) {
    lo = std::min(lo, t[i]);
    hi = std::max(hi, t[i]);
  }
  GrayImage img(t.dim(1), t.dim(0));
  if (hi == lo) {
    std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t{128});
    return img;
  }
  const double scale = 255.0 / (hi - lo);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const long v = std::lround((t[i] - lo) * scale);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
  }
  return img;
}

void export_gray_image(const Tensor& t, const std::string& path) {
  write_pgm(tensor_to_gray(t), path);
}

Tensor tile_grid(const std::vector<Tensor>& tiles, std::size_t rows, std::size_t cols,
                 double separator_value) {
  if (tiles.empty()) throw DomainError("tile_grid needs at least one tile");
  const std::size_t th = tiles[0].dim(0);
  const std::size_t tw = tiles[0].dim(1);
  for (const Tensor& t : tiles) {
    if (t.rank() != 2 || t.dim(0) != th || t.dim(1) != tw) {
      throw ShapeError("tile_grid: tiles must share one rank-2 shape");
    }
  }
  const std::size_t H = rows * th + (rows - 1);
  const std::size_t W = cols * tw + (cols - 1);
  Tensor out({H, W});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = separator_value;
  for (std::size_t idx = 0; idx < tiles.size() && idx < rows * cols; ++idx) {
    const std::size_t r = idx / cols;
    const std::size_t c = idx % cols;
    const std::size_t y0 = r * (th + 1);
    const std::size_t x0 = c * (tw + 1);
    for (std::size_t y = 0; y < th; ++y)
      for (std::size_t x = 0; x < tw; ++x) out[(y0 + y) * W + x0 + x] = tiles[idx][y * tw + x];
  }
  return out;
}

GrayImage upscale(const GrayImage& img, std::size_t factor) {
  GrayImage out(img.width * factor, img.height * factor);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.at(x, y) = img.at(x / factor, y / factor);
  return out;
}

void draw_line(GrayImage& img, long x0, long y0, long x1, long y1, std::uint8_t value) {
  const long dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const long dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < static_cast<long>(img.width) && y0 < static_cast<long>(img.height)) {
      img.at(static_cast<std::size_t>(x0), static_cast<std::size_t>(y0)) = value;
    }
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

namespace {

// 5x7 glyphs, one row per byte (low 5 bits), top row first.
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1f, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
};

const Glyph* find_glyph(char c) {
  for (const Glyph& g : kFont) {
    if (g.ch == c) return &g;
  }
  return nullptr;
}

}  // namespace

void draw_text(GrayImage& img, long x, long y, const std::string& text, std::uint8_t value) {
  for (char c : text) {
    if (const Glyph* g = find_glyph(c)) {
      for (int ry = 0; ry < 7; ++ry) {
        for (int rx = 0; rx < 5; ++rx) {
          if (g->rows[ry] & (1 << (4 - rx))) {
            const long px = x + rx, py = y + ry;
            if (px >= 0 && py >= 0 && px < static_cast<long>(img.width) &&
                py < static_cast<long>(img.height)) {
              img.at(static_cast<std::size_t>(px), static_cast<std::size_t>(py)) = value;
            }
          }
        }
      }
    }
    x += 6;
  }
}

namespace {

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

GrayImage render_chart(const std::vector<Series>& series, std::size_t width, std::size_t height) {
  if (series.empty()) throw DomainError("render_chart needs at least one series");
  GrayImage img(width, height, 255);
  const long left = 48, right = static_cast<long>(width) - 12;
  const long top = 12, bottom = static_cast<long>(height) - 28;

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  std::size_t max_n = 0;
  for (const Series& s : series) {
    max_n = std::max(max_n, s.values.size());
    for (double v : s.values) {
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  if (max_n == 0 || !std::isfinite(lo)) throw DomainError("render_chart: no finite values");
  if (hi == lo) {
    hi = lo + 1.0;
    lo = lo - 1.0;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }

  draw_line(img, left, top, left, bottom, 0);
  draw_line(img, left, bottom, right, bottom, 0);

  const auto to_x = [&](std::size_t i) {
    if (max_n == 1) return (left + right) / 2;
    return left + static_cast<long>((right - left) * static_cast<double>(i) / (max_n - 1));
  };
  const auto to_y = [&](double v) {
    return bottom - static_cast<long>((bottom - top) * (v - lo) / (hi - lo));
  };

  for (const Series& s : series) {
    for (std::size_t i = 1; i < s.values.size(); ++i) {
      draw_line(img, to_x(i - 1), to_y(s.values[i - 1]), to_x(i), to_y(s.values[i]), s.shade);
    }
    if (s.values.size() == 1) {
      draw_line(img, to_x(0) - 2, to_y(s.values[0]), to_x(0) + 2, to_y(s.values[0]), s.shade);
    }
  }

  draw_text(img, 2, top - 4, short_number(hi), 0);
  draw_text(img, 2, bottom - 4, short_number(lo), 0);
  draw_text(img, left - 2, bottom + 6, "1", 0);
  draw_text(img, right - 12, bottom + 6, short_number(static_cast<double>(max_n)), 0);
  return img;
}

}  // namespace digitnet
