#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fsep {

struct GrayImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;  // row-major
};

GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const GrayImage& img);

/// Area-average resize: integer box filter when both ratios are integral,
/// bilinear sampling at pixel centers otherwise. Output in [0,1].
std::vector<float> resize_gray_to_unit(const GrayImage& img, int64_t out_h, int64_t out_w);

}  // namespace fsep
