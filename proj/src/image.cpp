#include "resplat/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace resplat {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint16_t to_u16(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint16_t>(std::lround(c * 65535.0));
}

uint8_t to_u8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Vec3 Image::sample_bilinear(double u, double v) const {
  const double fx = std::clamp(u - 0.5, 0.0, static_cast<double>(width - 1));
  const double fy = std::clamp(v - 0.5, 0.0, static_cast<double>(height - 1));
  const int x0 = static_cast<int>(fx);
  const int y0 = static_cast<int>(fy);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  return (1 - ty) * ((1 - tx) * pixel(x0, y0) + tx * pixel(x1, y0)) +
         ty * ((1 - tx) * pixel(x0, y1) + tx * pixel(x1, y1));
}

Vec3 Image::mean_color() const {
  Vec3 acc = Vec3::Zero();
  for (size_t i = 0; i < pixel_count(); ++i)
    acc += Vec3(data[i * 3], data[i * 3 + 1], data[i * 3 + 2]);
  return pixel_count() ? Vec3(acc / static_cast<double>(pixel_count()))
                       : Vec3(acc);
}

bool Image::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

void Image::validate() const {
  if (width <= 0 || height <= 0)
    throw NumericError("image has non-positive dimensions");
  if (data.size() != static_cast<size_t>(width) * height * 3)
    throw NumericError("image buffer size mismatch");
  if (!all_finite()) throw NumericError("image contains non-finite values");
}

void Image::quantize(int bit_depth) {
  const double levels = bit_depth == 8 ? 255.0 : 65535.0;
  for (double& v : data)
    v = std::lround(std::clamp(v, 0.0, 1.0) * levels) / levels;
}

void write_png(const std::string& path, const Image& im, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    throw ConfigError("png bit depth must be 8 or 16");
  im.validate();

  FilePtr fp(fopen(path.c_str(), "wb"));
  if (!fp) throw StageError("cannot open for writing: " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw StageError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw StageError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw StageError("libpng error while writing " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, im.width, im.height, bit_depth, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  if (bit_depth == 16) {
    std::vector<uint16_t> row(static_cast<size_t>(im.width) * 3);
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < 3; ++c) {
          uint16_t v = to_u16(im.at(x, y, c));
          row[x * 3 + c] = static_cast<uint16_t>((v >> 8) | (v << 8));  // BE
        }
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  } else {
    std::vector<uint8_t> row(static_cast<size_t>(im.width) * 3);
    for (int y = 0; y < im.height; ++y) {
      for (int x = 0; x < im.width; ++x)
        for (int c = 0; c < 3; ++c) row[x * 3 + c] = to_u8(im.at(x, y, c));
      png_write_row(png, row.data());
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  FilePtr fp(fopen(path.c_str(), "rb"));
  if (!fp) throw StageError("cannot open for reading: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw StageError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw StageError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw StageError("libpng error while reading " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int width = png_get_image_width(png, info);
  const int height = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  // Normalize every source layout to RGB at the file's depth.
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY ||
      color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int out_depth = png_get_bit_depth(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<uint8_t> raw(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image im(width, height);
  if (out_depth == 16) {
    for (int y = 0; y < height; ++y) {
      const uint8_t* r = raw.data() + rowbytes * y;
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) {
          const size_t i = (static_cast<size_t>(x) * 3 + c) * 2;
          const uint16_t v = static_cast<uint16_t>((r[i] << 8) | r[i + 1]);
          im.at(x, y, c) = v / 65535.0;
        }
    }
  } else {
    for (int y = 0; y < height; ++y) {
      const uint8_t* r = raw.data() + rowbytes * y;
      for (int x = 0; x < width; ++x)
        for (int c = 0; c < 3; ++c) im.at(x, y, c) = r[x * 3 + c] / 255.0;
    }
  }
  return im;
}

void write_ppm(const std::string& path, const Image& im) {
  im.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("cannot open for writing: " + path);
  out << "P6\n" << im.width << " " << im.height << "\n255\n";
  std::vector<uint8_t> buf(im.data.size());
  for (size_t i = 0; i < im.data.size(); ++i) buf[i] = to_u8(im.data[i]);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw StageError("short write: " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError("cannot open for reading: " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    throw StageError("unsupported ppm: " + path);
  in.get();  // single whitespace after header
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!in) throw StageError("short read: " + path);
  Image im(w, h);
  for (size_t i = 0; i < buf.size(); ++i) im.data[i] = buf[i] / 255.0;
  return im;
}

namespace {
bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

void save_image(const std::string& path, const Image& im, int bit_depth) {
  if (has_suffix(path, ".ppm"))
    write_ppm(path, im);
  else if (has_suffix(path, ".png"))
    write_png(path, im, bit_depth);
  else
    throw ConfigError("unknown image extension: " + path);
}

Image load_image(const std::string& path) {
  if (has_suffix(path, ".ppm")) return read_ppm(path);
  if (has_suffix(path, ".png")) return read_png(path);
  throw ConfigError("unknown image extension: " + path);
}

void write_gray_png(const std::string& path, const std::vector<double>& values,
                    int width, int height) {
  if (static_cast<size_t>(width) * height != values.size())
    throw NumericError("gray buffer size mismatch");
  Image im(width, height);
  for (size_t i = 0; i < values.size(); ++i)
    for (int c = 0; c < 3; ++c) im.data[i * 3 + c] = values[i];
  write_png(path, im, 16);
}

}  // namespace resplat
