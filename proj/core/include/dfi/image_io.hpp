#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dfi/tensor.hpp"

namespace dfi {

// 8-bit interleaved image.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<uint8_t> pixels;
};

// Decodes a PNG and converts it to the requested channel count.
Image8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Image8& image);

// (channels, H, W) in [0, 1].
Tensor to_tensor(const Image8& image);
// Accepts (C, H, W) or (1, C, H, W); values are clamped to [0, 1] and rounded.
Image8 to_image8(const Tensor& chw);

}  // namespace dfi
