#include "fsep/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "fsep/error.hpp"

namespace fsep {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) raise(ErrorCode::UnreadableImage, path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::UnreadableImage, path.string());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    raise(ErrorCode::UnreadableImage, path.string());
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  // Normalize any input to 8-bit grayscale.
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  if (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) png_set_rgb_to_gray(png, 1, -1, -1);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  GrayImage img;
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.pixels.resize(static_cast<size_t>(img.width * img.height));
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int64_t y = 0; y < img.height; ++y) rows[static_cast<size_t>(y)] = img.pixels.data() + y * img.width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& img) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) raise(ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::IoFailure, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    raise(ErrorCode::IoFailure, "libpng write failed for " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<size_t>(img.height));
  for (int64_t y = 0; y < img.height; ++y) {
    rows[static_cast<size_t>(y)] = const_cast<png_bytep>(img.pixels.data() + y * img.width);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::vector<float> resize_gray_to_unit(const GrayImage& img, int64_t out_h, int64_t out_w) {
  std::vector<float> out(static_cast<size_t>(out_h * out_w));
  const int64_t h = img.height, w = img.width;
  if (h % out_h == 0 && w % out_w == 0) {
    const int64_t by = h / out_h, bx = w / out_w;
    const double norm = 1.0 / (255.0 * static_cast<double>(by * bx));
    for (int64_t oy = 0; oy < out_h; ++oy) {
      for (int64_t ox = 0; ox < out_w; ++ox) {
        int64_t sum = 0;
        for (int64_t dy = 0; dy < by; ++dy) {
          const uint8_t* row = img.pixels.data() + (oy * by + dy) * w + ox * bx;
          for (int64_t dx = 0; dx < bx; ++dx) sum += row[dx];
        }
        out[static_cast<size_t>(oy * out_w + ox)] = static_cast<float>(sum * norm);
      }
    }
    return out;
  }
  // Bilinear at pixel centers, clamped at the border.
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  auto px = [&](int64_t y, int64_t x) -> double {
    y = std::min(std::max<int64_t>(y, 0), h - 1);
    x = std::min(std::max<int64_t>(x, 0), w - 1);
    return img.pixels[static_cast<size_t>(y * w + x)] / 255.0;
  };
  for (int64_t oy = 0; oy < out_h; ++oy) {
    const double cy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    const int64_t y0 = static_cast<int64_t>(std::floor(cy));
    const double fy = cy - static_cast<double>(y0);
    for (int64_t ox = 0; ox < out_w; ++ox) {
      const double cx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      const int64_t x0 = static_cast<int64_t>(std::floor(cx));
      const double fx = cx - static_cast<double>(x0);
      const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                       fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
      out[static_cast<size_t>(oy * out_w + ox)] = static_cast<float>(v);
    }
  }
  return out;
}

}  // namespace fsep
