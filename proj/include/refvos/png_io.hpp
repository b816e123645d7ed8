#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace refvos {

struct ImageU8 {
  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved channels
};

// 8-bit PNG helpers (RGB frames, grayscale id masks). Failures throw
// std::runtime_error carrying the path.
ImageU8 read_png(const std::string& path);
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);
void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<std::uint8_t>& gray);

}  // namespace refvos
