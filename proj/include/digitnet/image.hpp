#ifndef DIGITNET_IMAGE_HPP
#define DIGITNET_IMAGE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "digitnet/tensor.hpp"

namespace digitnet {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 0 = black

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// Binary PGM (P5, maxval 255).
void write_pgm(const GrayImage& img, const std::string& path);
GrayImage read_pgm(const std::string& path);

/// Min-max normalization of a rank-2 tensor to 0..255; a constant tensor
/// maps to 128.
GrayImage tensor_to_gray(const Tensor& t);

/// Writes tensor_to_gray(t) as PGM.
void export_gray_image(const Tensor& t, const std::string& path);

/// Stacks rank-2 tiles of equal shape into a rows x cols grid with 1-pixel
/// separators, as one rank-2 tensor. Missing trailing tiles stay at the
/// separator value.
Tensor tile_grid(const std::vector<Tensor>& tiles, std::size_t rows, std::size_t cols,
                 double separator_value);

GrayImage upscale(const GrayImage& img, std::size_t factor);

void draw_line(GrayImage& img, long x0, long y0, long x1, long y1, std::uint8_t value);

/// 5x7 bitmap text; supports digits, '.', '-', '+', 'e', ' '.
void draw_text(GrayImage& img, long x, long y, const std::string& text, std::uint8_t value);

struct Series {
  std::string label;
  std::vector<double> values;  // x = 1..n
  std::uint8_t shade = 0;
};

/// Minimal line chart: axes, polylines, numeric range labels.
GrayImage render_chart(const std::vector<Series>& series, std::size_t width = 640,
                       std::size_t height = 400);

}  // namespace digitnet

#endif
