#pragma once

#include <string>
#include <vector>

#include "resplat/common.hpp"

namespace resplat {

// RGB image, row-major, values in [0,1]. Doubles internally; 8/16-bit only at
// file boundaries.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;  // width*height*3

  Image() = default;
  Image(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<size_t>(w) * h * 3, fill) {}

  static Image constant(int w, int h, const Vec3& color) {
    Image im(w, h);
    for (int i = 0; i < w * h; ++i)
      for (int c = 0; c < 3; ++c) im.data[i * 3 + c] = color[c];
    return im;
  }

  double& at(int x, int y, int c) {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * 3 + c];
  }

  Vec3 pixel(int x, int y) const {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return Vec3(data[i], data[i + 1], data[i + 2]);
  }
  void set_pixel(int x, int y, const Vec3& v) {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    data[i] = v[0];
    data[i + 1] = v[1];
    data[i + 2] = v[2];
  }

  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  bool empty() const { return width == 0 || height == 0; }

  // Clamped bilinear sample at continuous pixel coordinates (pixel centers at
  // x+0.5, y+0.5).
  Vec3 sample_bilinear(double u, double v) const;

  Vec3 mean_color() const;
  bool all_finite() const;
  void validate() const;  // throws on bad dims / non-finite data

  // Rounds every value to the nearest k-bit level (k = 8 or 16), matching what
  // a save/load round trip through PNG produces.
  void quantize(int bit_depth);
};

// PNG I/O (8- or 16-bit RGB; reads also accept gray/palette/alpha sources).
void write_png(const std::string& path, const Image& im, int bit_depth = 16);
Image read_png(const std::string& path);

// Binary PPM (P6, 8-bit), used by tests.
void write_ppm(const std::string& path, const Image& im);
Image read_ppm(const std::string& path);

// Dispatch on extension (.png/.ppm).
void save_image(const std::string& path, const Image& im, int bit_depth = 16);
Image load_image(const std::string& path);

// Single-channel [0,1] buffer saved as grayscale PNG (weight-sum debug dumps,
// attention heatmaps).
void write_gray_png(const std::string& path, const std::vector<double>& values,
                    int width, int height);

}  // namespace resplat
