#include "dfi/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

#include "dfi/error.hpp"

namespace dfi {

Image8 read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) throw UsageError("read_png: channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) throw UsageError("write_png: channels must be 1 or 3");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + img.message);
  }
}

Tensor to_tensor(const Image8& image) {
  const int64_t c = image.channels, h = image.height, w = image.width;
  Tensor t({c, h, w});
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch)
        t[(ch * h + y) * w + x] = image.pixels[static_cast<std::size_t>((y * w + x) * c + ch)] / 255.0;
  return t;
}

Image8 to_image8(const Tensor& chw) {
  const std::size_t off = chw.rank() == 4 ? 1 : 0;
  if (chw.rank() != 3 + off || (off && chw.dim(0) != 1)) {
    throw UsageError("to_image8 expects (C,H,W), got " + shape_to_string(chw.shape()));
  }
  Image8 img;
  img.channels = static_cast<int>(chw.dim(off));
  img.height = static_cast<int>(chw.dim(off + 1));
  img.width = static_cast<int>(chw.dim(off + 2));
  if (img.channels != 1 && img.channels != 3) throw UsageError("to_image8: channels must be 1 or 3");
  const int64_t c = img.channels, h = img.height, w = img.width;
  img.pixels.resize(static_cast<std::size_t>(c * h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < c; ++ch) {
        const double v = std::min(1.0, std::max(0.0, chw[(ch * h + y) * w + x]));
        img.pixels[static_cast<std::size_t>((y * w + x) * c + ch)] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

}  // namespace dfi
