#include "camalign/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace camalign {

void quantize_u8(Image& image) {
  for (auto& v : image.pixels) {
    const float c = std::clamp(v, 0.0F, 1.0F);
    v = static_cast<float>(std::lround(c * 255.0F)) / 255.0F;
  }
}

namespace {

std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& height, int& width) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw std::runtime_error("cannot read PNG '" + path.string() + "': " + img.message);
  }
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr) == 0) {
    std::string msg = img.message;
    png_image_free(&img);
    throw std::runtime_error("cannot decode PNG '" + path.string() + "': " + msg);
  }
  height = static_cast<int>(img.height);
  width = static_cast<int>(img.width);
  return buffer;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int height, int width, const void* data) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (png_image_write_to_file(&img, path.c_str(), 0, data, 0, nullptr) == 0) {
    throw std::runtime_error("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

}  // namespace

Image read_gray_png(const std::filesystem::path& path) {
  int h = 0;
  int w = 0;
  const auto buffer = read_png(path, PNG_FORMAT_GRAY, h, w);
  Image image(h, w);
  for (std::size_t i = 0; i < buffer.size(); ++i) image.pixels[i] = static_cast<float>(buffer[i]) / 255.0F;
  return image;
}

void write_gray_png(const std::filesystem::path& path, const Image& image) {
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.pixels[i], 0.0F, 1.0F) * 255.0F));
  }
  write_png(path, PNG_FORMAT_GRAY, image.height, image.width, bytes.data());
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, PNG_FORMAT_RGB, image.height, image.width, image.data.data());
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
  RgbImage out;
  out.data = read_png(path, PNG_FORMAT_RGB, out.height, out.width);
  return out;
}

}  // namespace camalign
